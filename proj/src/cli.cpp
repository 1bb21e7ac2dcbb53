#include "hkrect/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <random>
#include <sstream>

#include "hkrect/parallel.hpp"
#include "hkrect/pipeline.hpp"

namespace hkrect::cli {

using nlohmann::json;

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// `key=value` lists, later entries win
class KeyValues {
 public:
  KeyValues() = default;
  explicit KeyValues(const std::vector<std::string>& items) {
    for (const std::string& s : items) {
      const auto eq = s.find('=');
      if (eq == std::string::npos || eq == 0) throw UsageError("expected key=value, got '" + s + "'");
      map_[s.substr(0, eq)] = s.substr(eq + 1);
    }
  }
  double num(const std::string& key, double fallback) {
    used_.insert(key);
    const auto it = map_.find(key);
    if (it == map_.end()) return fallback;
    try {
      std::size_t pos = 0;
      const double v = std::stod(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument(key);
      return v;
    } catch (const std::exception&) {
      throw UsageError("'" + key + "' needs a number, got '" + it->second + "'");
    }
  }
  int integer(const std::string& key, int fallback) {
    const double v = num(key, fallback);
    if (v != std::floor(v)) throw UsageError("'" + key + "' needs an integer");
    return static_cast<int>(v);
  }
  std::vector<double> list(const std::string& key) {
    used_.insert(key);
    std::vector<double> out;
    const auto it = map_.find(key);
    if (it == map_.end()) return out;
    std::stringstream ss(it->second);
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        out.push_back(std::stod(item));
      } catch (const std::exception&) {
        throw UsageError("'" + key + "' needs comma-separated numbers");
      }
    }
    return out;
  }
  // Unknown keys are typos; refuse them.
  void finish(const std::string& what) const {
    for (const auto& [k, v] : map_)
      if (!used_.count(k)) throw UsageError("unknown key '" + k + "' for " + what);
  }

 private:
  std::map<std::string, std::string> map_;
  std::set<std::string> used_;
};

// Replace argv occurrences of every manifest key by the manifest's value.
std::vector<std::string> apply_manifest(std::vector<std::string> args, const json& manifest) {
  if (!manifest.is_object()) throw UsageError("manifest must be a JSON object");
  for (const auto& [key, value] : manifest.items()) {
    if (key == "command") continue;
    const std::string flag = "--" + key;
    std::vector<std::string> kept;
    for (std::size_t i = 0; i < args.size(); ++i) {
      if (args[i] == flag) {
        while (i + 1 < args.size() && args[i + 1].rfind("--", 0) != 0) ++i;
        continue;
      }
      if (args[i].rfind(flag + "=", 0) == 0) continue;
      kept.push_back(args[i]);
    }
    args = std::move(kept);
    auto scalar = [&](const json& v) -> std::string {
      if (v.is_string()) return v.get<std::string>();
      if (v.is_number_integer()) return std::to_string(v.get<long long>());
      if (v.is_number()) return format_double(v.get<double>());
      throw UsageError("manifest key '" + key + "' has an unsupported value");
    };
    if (value.is_boolean()) {
      if (value.get<bool>()) args.push_back(flag);
    } else if (value.is_object()) {
      args.push_back(flag);
      for (const auto& [k, v] : value.items()) args.push_back(k + "=" + scalar(v));
    } else if (value.is_array()) {
      args.push_back(flag);
      for (const json& v : value) args.push_back(scalar(v));
    } else {
      args.push_back(flag);
      args.push_back(scalar(value));
    }
  }
  return args;
}

std::string hex(std::uint64_t h) {
  std::ostringstream o;
  o << std::hex << std::setw(16) << std::setfill('0') << h;
  return o.str();
}

// Effective parameters of a subcommand. --out, --threads and --manifest do not
// change the content, so they stay out of the hash.
json effective(const CLI::App& sub) {
  json p;
  p["command"] = sub.get_name();
  for (const CLI::Option* opt : sub.get_options()) {
    const std::string name = opt->get_single_name();
    if (name.empty() || name == "help" || name == "out" || name == "threads" || name == "manifest") continue;
    const std::vector<std::string>& res = opt->results();
    if (opt->get_type_size() == 0) {
      p[name] = opt->count() > 0;
    } else if (opt->count() > 0 && res.empty()) {
      p[name] = json::array();
    } else if (!res.empty()) {
      if (opt->get_items_expected_max() > 1) p[name] = res;
      else p[name] = res.back();
    } else if (!opt->get_default_str().empty()) {
      p[name] = opt->get_default_str();
    }
  }
  return p;
}

struct Output {
  std::ostream* stream;
  std::ofstream file;
};

void header(std::ostream& out, const json& params) {
  const std::string canon = params.dump();
  out << "# manifest " << hex(fnv1a(canon)) << '\n';
  out << "# params " << canon << '\n';
}

PointCloud load_cloud(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open '" + path + "'");
  return read_point_cloud(in);
}

BetaBudget parse_budget(KeyValues kv) {
  BetaBudget b;
  b.angle_steps = kv.integer("angle_steps", b.angle_steps);
  b.offset_steps = kv.integer("offset_steps", b.offset_steps);
  b.polar_steps = kv.integer("polar_steps", b.polar_steps);
  b.azimuth_steps = kv.integer("azimuth_steps", b.azimuth_steps);
  b.affine_offset_steps = kv.integer("affine_offset_steps", b.affine_offset_steps);
  b.directions = kv.integer("directions", b.directions);
  b.screen = kv.integer("screen", b.screen);
  b.refine_starts = kv.integer("refine_starts", b.refine_starts);
  b.refine_evals = kv.integer("refine_evals", b.refine_evals);
  b.seed = static_cast<std::uint64_t>(kv.integer("seed", 0));
  kv.finish("--budget");
  if (b.angle_steps < 1 || b.offset_steps < 1 || b.polar_steps < 1 || b.azimuth_steps < 1 ||
      b.affine_offset_steps < 1 || b.directions < 1 || b.screen < 1 || b.refine_starts < 0 || b.refine_evals < 0)
    throw UsageError("budget counts must be positive");
  return b;
}

std::string describe(const BetaBudget& b) {
  std::ostringstream o;
  o << "angle_steps=" << b.angle_steps << " offset_steps=" << b.offset_steps << " polar_steps=" << b.polar_steps
    << " azimuth_steps=" << b.azimuth_steps << " affine_offset_steps=" << b.affine_offset_steps
    << " directions=" << b.directions << " screen=" << b.screen << " refine_starts=" << b.refine_starts
    << " refine_evals=" << b.refine_evals << " seed=" << b.seed;
  return o.str();
}

std::optional<Window> parse_window(KeyValues kv, int k) {
  const std::vector<double> c = kv.list("center");
  const double r = kv.num("radius", -1);
  kv.finish("--window");
  if (c.empty() && r < 0) return std::nullopt;
  if (!(r > 0)) throw UsageError("--window needs radius > 0");
  Eigen::VectorXd x = Eigen::VectorXd::Zero(2 * k + 1);
  if (!c.empty()) {
    if (static_cast<int>(c.size()) != 2 * k + 1) throw UsageError("--window center needs 2k+1 coordinates");
    for (int i = 0; i <= 2 * k; ++i) x(i) = c[static_cast<std::size_t>(i)];
  }
  return Window{Point::from_packed(x), r};
}

std::string describe(const Window& w) {
  std::ostringstream o;
  o << "center=";
  for (Eigen::Index i = 0; i < w.center.packed().size(); ++i) o << (i ? "," : "") << format_double(w.center.packed()(i));
  o << " radius=" << format_double(w.radius);
  return o.str();
}

// ---- subcommands ----

struct Common {
  std::string out;
  unsigned threads = 0;
  std::string manifest;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--out", c.out, "output file (default stdout)");
  sub->add_option("--threads", c.threads, "worker threads, 0 for all cores");
  sub->add_option("--manifest", c.manifest, "JSON manifest; its keys override flags");
}

struct GenArgs {
  int k = 1;
  double delta = 0.05;
  std::uint64_t seed = 0;
  std::vector<std::string> plane, graph, bpilg;
  bool use_plane = false, use_graph = false, use_bpilg = false;
};

int do_gen(const GenArgs& a, const json& params, std::ostream& out) {
  const int kinds = a.use_plane + a.use_graph + a.use_bpilg;
  if (kinds != 1) throw UsageError("gen needs exactly one of --plane, --graph, --bpilg");
  if (a.k < 1) throw UsageError("--k must be at least 1");
  if (!(a.delta > 0)) throw UsageError("--delta must be positive");
  const GroupDim dim(a.k);
  auto axis_frame = [&](KeyValues& kv) {
    const int axis = kv.integer("axis", 0);
    if (axis < 0 || axis >= 2 * a.k) throw UsageError("axis out of range");
    return Frame::axis(dim, axis);
  };
  std::ostringstream extra;
  PointCloud cloud(dim, Eigen::MatrixXd(dim.packed(), 0), Eigen::VectorXd(0), a.delta);
  if (a.use_plane) {
    KeyValues kv(a.plane);
    const double s = kv.num("a", 1.0);
    const double b = kv.num("b", s * s / 4);
    const Frame f = axis_frame(kv);
    kv.finish("--plane");
    const ParamBox box = ParamBox::centered(dim, s, b);
    cloud = sample_graph(GraphSpec(f, 0.5, [](const Eigen::VectorXd&) { return 0.0; }, box), box, a.delta, a.seed);
  } else if (a.use_graph) {
    KeyValues kv(a.graph);
    const double lambda = kv.num("lambda", 0.5);
    const double s = kv.num("a", 1.0);
    const double b = kv.num("b", s * s / 4);
    const int bumps = kv.integer("bumps", 6);
    const double amp = kv.num("amplitude", 0.4);
    const double width = kv.num("width", 0.5);
    const double check = kv.num("check", std::max(a.delta, 0.1));
    const Frame f = axis_frame(kv);
    kv.finish("--graph");
    const ParamBox box = ParamBox::centered(dim, s, b);
    const SynthesizedGraph g = synthesize_graph(f, lambda, box, bumps, amp, width, check, a.seed);
    cloud = sample_graph(g.spec, box, a.delta, a.seed);
    extra << "# graph halvings " << g.halvings << " tightest_lambda " << format_double(g.tightest_lambda) << '\n';
  } else {
    KeyValues kv(a.bpilg);
    BPiLGSpec spec;
    spec.lambda = kv.num("lambda", 0.5);
    spec.theta = kv.num("theta", 0.05);
    const double s = kv.num("a", 0.8);
    const double b = kv.num("b", s * s / 4);
    const double junk = kv.num("junk", 0.2);
    spec.audit_samples = kv.integer("audit", 100);
    kv.finish("--bpilg");
    if (a.k != 1) throw UsageError("--bpilg is implemented for k = 1");
    const ParamBox box = ParamBox::centered(dim, s, b);
    auto flat = [&](int axis) {
      return GraphSpec(Frame::axis(dim, axis), spec.lambda, [](const Eigen::VectorXd&) { return 0.0; }, box);
    };
    // a bumpy piece crossed by a flat one, and a thinned patch on top
    const SynthesizedGraph g =
        synthesize_graph(Frame::axis(dim, 0), spec.lambda, box, 4, 0.3, 0.5, a.delta, a.seed);
    spec.pieces.push_back({g.spec, box, Point::identity(dim)});
    spec.pieces.push_back({flat(1), box, Point::identity(dim)});
    if (junk > 0) {
      Eigen::VectorXd off = Eigen::VectorXd::Zero(3);
      off(1) = s / 2;
      spec.junk.push_back({Frame::axis(dim, 0), ParamBox::centered(dim, s / 2, b / 4), Point::from_packed(off), junk});
    }
    const BPiLGSet set = synth_bpilg_set(spec, a.delta, a.seed);
    cloud = set.cloud;
    extra << "# audit min_ratio " << format_double(set.audit.min_ratio) << " samples " << set.audit.samples << '\n';
  }
  header(out, params);
  out << "# points " << cloud.size() << " resolution " << format_double(cloud.resolution()) << '\n' << extra.str();
  write_point_cloud(out, cloud);
  return ok;
}

struct TreeArgs {
  std::string in;
  std::optional<int> j_min, j_max;
  std::uint64_t seed = 1;
};

CubeTree make_tree(const TreeArgs& t) {
  const IndexedCloud cloud(load_cloud(t.in));
  if (cloud.size() == 0) throw UsageError("empty cloud");
  const int lo = t.j_min.value_or(finest_level(cloud.resolution()));
  const int hi = t.j_max.value_or(coarsest_level(estimate_diameter(cloud.cloud())));
  return build_cube_tree(cloud, lo, hi, t.seed);
}

void add_tree(CLI::App* sub, TreeArgs& t) {
  sub->add_option("--in", t.in, "point cloud file")->required();
  sub->add_option("--j-min", t.j_min, "finest level");
  sub->add_option("--j-max", t.j_max, "coarsest level");
  sub->add_option("--seed", t.seed, "tree seed");
}

void tree_header(std::ostream& out, const CubeTree& tree) {
  out << "# resolution " << format_double(tree.cloud().resolution()) << " c0 " << format_double(tree.c0()) << " levels "
      << tree.j_min() << ':' << tree.j_max() << " cubes " << tree.size() << '\n';
}

struct BetaArgs {
  std::string family = "vertical";
  std::vector<std::string> budget, window;
  std::vector<int> levels;
  std::vector<double> eps{0.1};
};

// Admissible cubes of the window (default as in bwgl_report), optionally by level.
std::vector<std::size_t> chosen_cubes(const CubeTree& tree, const BetaArgs& b, Window& w) {
  const std::optional<Window> given = parse_window(KeyValues(b.window), tree.cloud().k());
  if (given) {
    w = *given;
  } else {
    w = default_window(tree.cloud());
  }
  std::vector<std::size_t> ids;
  for (std::size_t id : admissible_cubes(tree, w))
    if (b.levels.empty() || std::count(b.levels.begin(), b.levels.end(), tree.cube(id).level)) ids.push_back(id);
  return ids;
}

int do_cubes(const TreeArgs& t, bool verify, const json& params, std::ostream& out) {
  const CubeTree tree = make_tree(t);
  header(out, params);
  tree_header(out, tree);
  write_cube_dump(out, tree);
  if (!verify) return ok;
  const CubeAxiomReport rep = verify_cube_axioms(tree);
  out << "# axioms i=" << rep.axiom_i << " ii=" << rep.axiom_ii << " iii=" << rep.axiom_iii
      << " measured_c0=" << format_double(rep.measured_c0) << '\n';
  for (const std::string& f : rep.failures) out << "# failure " << f << '\n';
  return rep.passed() ? ok : failed_check;
}

int do_beta(const TreeArgs& t, const BetaArgs& b, const json& params, std::ostream& out) {
  const PlaneFamily family = parse_family(b.family);
  const BetaBudget budget = parse_budget(KeyValues(b.budget));
  const CubeTree tree = make_tree(t);
  Window w{Point::identity(tree.cloud().cloud().dim()), 0};
  const std::vector<std::size_t> ids = chosen_cubes(tree, b, w);
  const std::vector<BetaValue> betas = beta_profile(tree, ids, family, budget);
  header(out, params);
  tree_header(out, tree);
  out << "# window " << describe(w) << "\n# budget " << describe(budget) << '\n';
  write_beta_csv(out, tree, ids, betas);
  return ok;
}

int do_carleson(const TreeArgs& t, const BetaArgs& b, const json& params, std::ostream& out) {
  const PlaneFamily family = parse_family(b.family);
  const BetaBudget budget = parse_budget(KeyValues(b.budget));
  for (double e : b.eps)
    if (!(e > 0 && e < 1)) throw UsageError("epsilon must lie in (0, 1)");
  const CubeTree tree = make_tree(t);
  Window w{Point::identity(tree.cloud().cloud().dim()), 0};
  const std::vector<std::size_t> ids = chosen_cubes(tree, b, w);
  const std::vector<BetaValue> betas = beta_profile(tree, ids, family, budget);
  header(out, params);
  tree_header(out, tree);
  out << "# window " << describe(w) << "\n# budget " << describe(budget) << '\n';
  out << "epsilon,root,level,ratio\n";
  for (double e : b.eps) {
    const PackingReport rep = packing_ratio(tree, bad_cubes(ids, betas, e), ids);
    for (std::size_t i = 0; i < rep.roots.size(); ++i)
      out << format_double(e) << ',' << rep.roots[i] << ',' << tree.cube(rep.roots[i]).level << ','
          << format_double(rep.ratio[i]) << '\n';
    out << "# epsilon " << format_double(e) << " gamma_hat " << format_double(rep.gamma_hat) << '\n';
  }
  return ok;
}

int do_report(const TreeArgs& t, const BetaArgs& b, const json& params, std::ostream& out) {
  const PlaneFamily family = parse_family(b.family);
  const BetaBudget budget = parse_budget(KeyValues(b.budget));
  for (double e : b.eps)
    if (!(e > 0 && e < 1)) throw UsageError("epsilon must lie in (0, 1)");
  const CubeTree tree = make_tree(t);
  const std::optional<Window> w = parse_window(KeyValues(b.window), tree.cloud().k());
  const BWGLReport rep = bwgl_report(tree, b.eps, family, budget, w);
  header(out, params);
  tree_header(out, tree);
  out << "# window " << describe(rep.window) << " admissible " << rep.admissible.size() << '\n';
  out << "# budget " << describe(budget) << '\n';
  out << "# floor " << format_double(4 * rep.resolution / (rep.c0 * std::ldexp(1.0, rep.j_min))) << '\n';
  if (rep.ahlfors)
    out << "# ahlfors min " << format_double(rep.ahlfors->min_ratio) << " max " << format_double(rep.ahlfors->max_ratio)
        << '\n';
  write_carleson_csv(out, rep.rows, rep.j_min, rep.j_max, rep.resolution);
  return ok;
}

struct TransferArgs {
  std::string tilde;
  std::optional<int> level;
  int count = 200;
  double slack = 0.1;
};

int do_transfer(const TreeArgs& t, const BetaArgs& b, const TransferArgs& x, const json& params, std::ostream& out) {
  const PlaneFamily family = parse_family(b.family);
  const BetaBudget budget = parse_budget(KeyValues(b.budget));
  if (x.count < 1) throw UsageError("--count must be positive");
  if (!(x.slack >= 0)) throw UsageError("--slack must be non-negative");
  const CubeTree tree = make_tree(t);
  const IndexedCloud et(load_cloud(x.tilde));
  const int level = x.level.value_or(tree.j_min());
  if (level < tree.j_min() || level > tree.j_max()) throw UsageError("--level outside the tree");
  // cubes whose centre also lies in Ẽ, spread evenly over the level
  std::vector<std::size_t> shared;
  for (std::size_t id : tree.level(level)) {
    const Cube& q = tree.cube(id);
    if (et.distance_to(tree.cloud().cloud().column(q.center)) <= et.resolution()) shared.push_back(id);
  }
  std::vector<std::size_t> ids;
  const std::size_t n = std::min<std::size_t>(shared.size(), static_cast<std::size_t>(x.count));
  for (std::size_t i = 0; i < n; ++i) ids.push_back(shared[i * shared.size() / n]);
  std::vector<TransferRecord> recs(ids.size());
  parallel_for(ids.size(), [&](std::size_t i) {
    const Cube& q = tree.cube(ids[i]);
    recs[i] = transfer_inequality_check(et, tree, q.id, tree.cloud().cloud().point(q.center), family, budget, x.slack);
  });
  header(out, params);
  tree_header(out, tree);
  out << "# budget " << describe(budget) << '\n';
  out << "cube,level,lhs,beta_tilde,i,i_tilde,rhs,holds\n";
  std::size_t bad = 0;
  for (const TransferRecord& r : recs) {
    out << r.cube << ',' << level << ',' << format_double(r.lhs) << ',' << format_double(r.beta_tilde) << ','
        << format_double(r.i) << ',' << format_double(r.i_tilde) << ',' << format_double(r.rhs) << ','
        << (r.holds() ? 1 : 0) << '\n';
    bad += !r.holds();
  }
  out << "# tested " << recs.size() << " violations " << bad << '\n';
  if (recs.empty()) throw UsageError("no cube centre of E lies in Ẽ at this level");
  return bad ? failed_check : ok;
}

// Quick invariant suites on fresh random data.
int do_check(std::uint64_t seed, std::ostream& out) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0, 1);
  int failures = 0;
  auto report = [&](const std::string& name, bool pass, const std::string& detail) {
    out << (pass ? "ok   " : "FAIL ") << name << "  " << detail << '\n';
    failures += !pass;
  };
  auto rnd = [&](int k) {
    Eigen::VectorXd x(2 * k + 1);
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = g(rng);
    return Point::from_packed(x);
  };
  auto rel = [](const Point& a, const Point& b) {
    const double s = std::max({1.0, a.packed().cwiseAbs().maxCoeff(), b.packed().cwiseAbs().maxCoeff()});
    return (a.packed() - b.packed()).cwiseAbs().maxCoeff() / s;
  };
  for (int k : {1, 2}) {
    const GroupDim dim(k);
    double group = 0, metric = 0, proj = 0, cone = 0;
    for (int i = 0; i < 2000; ++i) {
      const Point p = rnd(k), q = rnd(k), r = rnd(k);
      group = std::max({group, rel(compose(compose(p, q), r), compose(p, compose(q, r))),
                        rel(compose(p, invert(p)), Point::identity(dim))});
      const double dpq = distance(p, q);
      metric = std::max({metric, std::abs(distance(compose(r, p), compose(r, q)) - dpq) / std::max(1.0, dpq),
                         std::abs(distance(dilate(2.5, p), dilate(2.5, q)) - 2.5 * dpq) / std::max(1.0, dpq),
                         std::max(0.0, dpq - distance(p, r) - distance(r, q)) / std::max(1.0, dpq)});
      Eigen::VectorXd nu(2 * k);
      for (int j = 0; j < 2 * k; ++j) nu(j) = g(rng);
      const Frame f = Frame::normalized(nu);
      proj = std::max(proj, rel(compose(proj_vertical(f, p), proj_line(f, p)), p));
      const Point line = Point(nu / nu.norm() * g(rng), 0.0);
      if (line.packed().norm() > 1e-3) cone = std::max(cone, std::abs(cone_gauge(f, line) - 1));
    }
    const std::string kk = " k=" + std::to_string(k);
    report("group axioms" + kk, group < 1e-12, "worst " + format_double(group));
    report("metric axioms" + kk, metric < 1e-12, "worst " + format_double(metric));
    report("projection factorization" + kk, proj < 1e-12, "worst " + format_double(proj));
    report("cone gauge on L" + kk, cone < 1e-12, "worst " + format_double(cone));
  }

  const GroupDim h1(1);
  const ParamBox box = ParamBox::centered(h1, 0.9, 0.2);
  const IndexedCloud plane(
      sample_graph(GraphSpec(Frame::axis(h1, 0), 0.5, [](const Eigen::VectorXd&) { return 0.0; }, box), box, 0.04));
  const ConeConditionReport cone = cone_condition_check(plane.cloud(), Frame::axis(h1, 0), 0.5);
  report("plane sample cone condition", cone.violations == 0, "tightest " + format_double(cone.tightest_lambda));
  const CubeTree tree = build_cube_tree(plane, finest_level(plane.resolution()),
                                        coarsest_level(estimate_diameter(plane.cloud())), seed);
  const CubeAxiomReport ax = verify_cube_axioms(tree);
  report("cube axioms on a plane", ax.passed(), "C0 " + format_double(ax.measured_c0));
  // cubes away from the sample edge
  const std::vector<std::size_t> adm = admissible_cubes(tree, Window{Point::identity(h1), 0.85});
  const std::vector<std::size_t> some(adm.begin(), adm.begin() + std::min<std::size_t>(6, adm.size()));
  double worst = 0;
  for (const BetaValue& b : beta_profile(tree, some, PlaneFamily::vertical, BetaBudget{}))
    worst = std::max(worst, b.value - b.grid_error);
  report("plane beta within grid error", !some.empty() && worst <= 1e-9,
         std::to_string(some.size()) + " cubes, worst excess " + format_double(worst));
  out << (failures ? "checks failed: " + std::to_string(failures) : std::string("all checks passed")) << '\n';
  return failures ? failed_check : ok;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);

  CLI::App app{"Heisenberg rectifiability experiments", "hkrect"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "hkrect 1.0");

  Common common;
  GenArgs gen;
  TreeArgs tree;
  BetaArgs beta;
  TransferArgs transfer;
  bool verify = false;
  std::uint64_t check_seed = 1;

  CLI::App* g = app.add_subcommand("gen", "write a sampled point cloud");
  add_common(g, common);
  g->add_option("--k", gen.k, "group dimension k")->capture_default_str();
  g->add_option("--delta", gen.delta, "grid step")->capture_default_str();
  g->add_option("--seed", gen.seed, "seed")->capture_default_str();
  CLI::Option* gp = g->add_option("--plane", gen.plane, "flat piece: a b axis")
                        ->expected(0, CLI::detail::expected_max_vector_size);
  CLI::Option* gg = g->add_option("--graph", gen.graph, "graph: lambda a b bumps amplitude width check axis")
                        ->expected(0, CLI::detail::expected_max_vector_size);
  CLI::Option* gb = g->add_option("--bpilg", gen.bpilg, "union: lambda theta a b junk audit")
                        ->expected(0, CLI::detail::expected_max_vector_size);

  CLI::App* c = app.add_subcommand("cubes", "build, dump and verify a cube tree");
  add_common(c, common);
  add_tree(c, tree);
  c->add_flag("--verify", verify, "check the cube axioms (exit 1 on failure)");

  auto add_beta = [&](CLI::App* sub, bool eps) {
    add_common(sub, common);
    add_tree(sub, tree);
    sub->add_option("--family", beta.family, "vertical or affine")->capture_default_str();
    sub->add_option("--budget", beta.budget, "key=value search budget");
    sub->add_option("--window", beta.window, "center=x,y,t radius=R");
    if (eps) sub->add_option("--eps", beta.eps, "thresholds in (0, 1)")->capture_default_str();
  };
  CLI::App* b = app.add_subcommand("beta", "β numbers of admissible cubes");
  add_beta(b, false);
  b->add_option("--level", beta.levels, "restrict to these levels");
  CLI::App* cs = app.add_subcommand("carleson", "packing ratios of bad cubes");
  add_beta(cs, true);
  cs->add_option("--level", beta.levels, "restrict to these levels");
  CLI::App* r = app.add_subcommand("report", "BWGL curve over ε");
  add_beta(r, true);
  CLI::App* t = app.add_subcommand("transfer", "per-cube transfer inequality table");
  add_beta(t, false);
  t->add_option("--tilde", transfer.tilde, "second cloud")->required();
  t->add_option("--level", transfer.level, "cube level (default finest)");
  t->add_option("--count", transfer.count, "cubes to test")->capture_default_str();
  t->add_option("--slack", transfer.slack, "relative slack")->capture_default_str();
  CLI::App* k = app.add_subcommand("check", "run the invariant suites");
  k->add_option("--threads", common.threads, "worker threads");
  k->add_option("--seed", check_seed, "seed")->capture_default_str();
  k->add_option("--out", common.out, "output file (default stdout)");

  try {
    // a manifest rewrites the argument list before parsing
    std::string manifest;
    for (std::size_t i = 0; i < args.size(); ++i) {
      if (args[i] == "--manifest" && i + 1 < args.size()) manifest = args[i + 1];
      else if (args[i].rfind("--manifest=", 0) == 0) manifest = args[i].substr(11);
    }
    if (!manifest.empty()) {
      std::ifstream in(manifest);
      if (!in) throw UsageError("cannot open manifest '" + manifest + "'");
      json m;
      try {
        m = json::parse(in);
      } catch (const json::exception& e) {
        throw UsageError(std::string("manifest: ") + e.what());
      }
      if (m.contains("command") && (args.empty() || m["command"] != args.front()))
        throw UsageError("manifest is for another command");
      args = apply_manifest(args, m);
    }
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
    gen.use_plane = gp->count() > 0;
    gen.use_graph = gg->count() > 0;
    gen.use_bpilg = gb->count() > 0;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err) == 0 ? ok : usage_error;
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err) == 0 ? ok : usage_error;
  } catch (const CLI::CallForVersion& e) {
    app.exit(e, out, err);
    return ok;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return usage_error;
  } catch (const UsageError& e) {
    err << "hkrect: " << e.what() << '\n';
    return usage_error;
  }

  set_thread_count(common.threads);
  const CLI::App* sub = app.get_subcommands().front();
  const json params = effective(*sub);
  Output o{&out, {}};
  if (!common.out.empty()) {
    o.file.open(common.out);
    if (!o.file) {
      err << "hkrect: cannot write '" << common.out << "'\n";
      return usage_error;
    }
    o.stream = &o.file;
  }
  std::ostringstream buf;
  try {
    int status = ok;
    if (sub == g) status = do_gen(gen, params, buf);
    else if (sub == c) status = do_cubes(tree, verify, params, buf);
    else if (sub == b) status = do_beta(tree, beta, params, buf);
    else if (sub == cs) status = do_carleson(tree, beta, params, buf);
    else if (sub == r) status = do_report(tree, beta, params, buf);
    else if (sub == t) status = do_transfer(tree, beta, transfer, params, buf);
    else status = do_check(check_seed, buf);
    *o.stream << buf.str();
    o.stream->flush();
    return status;
  } catch (const UsageError& e) {
    err << "hkrect: " << e.what() << '\n';
    return usage_error;
  } catch (const std::invalid_argument& e) {
    err << "hkrect: " << e.what() << '\n';
    return usage_error;
  } catch (const AuditFailure& e) {
    *o.stream << buf.str();
    err << "hkrect: " << e.what() << '\n';
    return failed_check;
  } catch (const std::exception& e) {
    err << "hkrect: " << e.what() << '\n';
    return failed_check;
  }
}

}  // namespace hkrect::cli
