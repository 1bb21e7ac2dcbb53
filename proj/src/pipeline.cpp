#include "hkrect/pipeline.hpp"

#include <algorithm>
#include <random>
#include <string>

#include "hkrect/parallel.hpp"

namespace hkrect {

void BPiLGSpec::validate() const {
  if (!(lambda > 0 && lambda < 1)) throw std::invalid_argument("BPiLGSpec: λ must lie in (0, 1)");
  if (!(theta > 0 && theta <= 1)) throw std::invalid_argument("BPiLGSpec: θ must lie in (0, 1]");
  if (pieces.empty()) throw std::invalid_argument("BPiLGSpec: no graph pieces");
  if (audit_samples < 1) throw std::invalid_argument("BPiLGSpec: audit needs at least one sample");
  for (const Contamination& c : junk)
    if (!(c.keep > 0 && c.keep <= 1)) throw std::invalid_argument("BPiLGSpec: junk keep fraction outside (0, 1]");
}

namespace {

PointCloud translated(const PointCloud& c, const Point& offset) {
  if (offset.k() != c.k()) throw DimensionMismatch("synth_bpilg_set: offset differs in dimension");
  return left_translate(offset, c);
}

}  // namespace

BPiLGAudit audit_big_pieces(const IndexedCloud& cloud, const std::vector<int>& piece, double theta, int samples,
                            std::uint64_t seed) {
  if (piece.size() != cloud.size()) throw std::invalid_argument("audit_big_pieces: one label per point required");
  const double r_lo = 4 * cloud.resolution();
  const double r_hi = estimate_diameter(cloud.cloud()) / 4;
  if (!(r_hi > r_lo)) throw std::invalid_argument("audit_big_pieces: cloud too small for the radius range");
  const int pieces = piece.empty() ? 0 : *std::max_element(piece.begin(), piece.end()) + 1;
  const double dim = 2 * cloud.k() + 1;

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, cloud.size() - 1);
  std::uniform_real_distribution<double> unit(0, 1);
  std::vector<std::pair<std::size_t, double>> queries(static_cast<std::size_t>(samples));
  for (auto& [p, r] : queries) {
    p = pick(rng);
    r = r_lo * std::pow(r_hi / r_lo, unit(rng));
  }
  std::vector<double> ratio(queries.size());
  parallel_for(queries.size(), [&](std::size_t s) {
    const auto [p, r] = queries[s];
    std::vector<double> mass(static_cast<std::size_t>(std::max(pieces, 1)), 0.0);
    for (std::size_t i : cloud.index().within(cloud.cloud().column(p), r))
      if (piece[i] >= 0) mass[static_cast<std::size_t>(piece[i])] += cloud.cloud().weight(i);
    ratio[s] = *std::max_element(mass.begin(), mass.end()) / std::pow(r, dim);
  });
  BPiLGAudit a;
  a.samples = samples;
  const auto worst = std::min_element(ratio.begin(), ratio.end()) - ratio.begin();
  a.min_ratio = ratio[static_cast<std::size_t>(worst)];
  a.worst_center = queries[static_cast<std::size_t>(worst)].first;
  a.worst_radius = queries[static_cast<std::size_t>(worst)].second;
  a.passed = a.min_ratio >= theta;
  return a;
}

BPiLGSet synth_bpilg_set(const BPiLGSpec& spec, double delta, std::uint64_t seed) {
  spec.validate();
  if (!(delta > 0)) throw std::invalid_argument("synth_bpilg_set: δ must be positive");

  std::vector<PointCloud> parts;
  std::vector<int> label;
  double part_res = 0;
  for (std::size_t i = 0; i < spec.pieces.size(); ++i) {
    const GraphPiece& gp = spec.pieces[i];
    PointCloud c = sample_graph(gp.spec, gp.region, delta, seed + i);
    if (c.empty()) throw std::invalid_argument("synth_bpilg_set: piece " + std::to_string(i) + " is empty");
    const ConeConditionReport cone = cone_condition_check(c, gp.spec.frame, spec.lambda);
    if (cone.violations > 0)
      throw GraphError("synth_bpilg_set: piece " + std::to_string(i) + " violates the cone condition (tightest λ " +
                       format_double(cone.tightest_lambda) + ")");
    part_res = std::max(part_res, c.resolution());
    parts.push_back(translated(c, gp.offset));
    label.insert(label.end(), c.size(), static_cast<int>(i));
  }
  std::mt19937_64 rng(seed ^ 0x5bd1e995ULL);
  std::uniform_real_distribution<double> unit(0, 1);
  for (const Contamination& j : spec.junk) {
    const GraphSpec plane(j.frame, spec.lambda, [](const Eigen::VectorXd&) { return 0.0; }, j.region);
    const PointCloud all = sample_graph(plane, j.region, delta);
    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < all.size(); ++i)
      if (unit(rng) < j.keep) kept.push_back(i);
    if (kept.empty()) continue;
    part_res = std::max(part_res, all.resolution());
    parts.push_back(translated(all.subset(kept), j.offset));
    label.insert(label.end(), kept.size(), -1);
  }
  PointCloud merged = parts.front();
  for (std::size_t i = 1; i < parts.size(); ++i) merged = merge(merged, parts[i]);

  // δ/2-net in input order, so piece points win over junk; dropped weight moves to the keeper
  const IndexedCloud full(merged);
  const std::size_t n = full.size();
  std::vector<char> taken(n, 0);
  std::vector<std::size_t> keep;
  std::vector<double> weight;
  bool dropped = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (taken[i]) continue;
    double w = 0;
    for (std::size_t j : full.index().within(merged.column(i), delta / 2)) {
      if (taken[j]) continue;
      taken[j] = 1;
      w += merged.weight(j);
      dropped = dropped || j != i;
    }
    keep.push_back(i);
    weight.push_back(w);
  }
  Eigen::MatrixXd coords(merged.coords().rows(), static_cast<Eigen::Index>(keep.size()));
  std::vector<int> piece(keep.size());
  for (std::size_t a = 0; a < keep.size(); ++a) {
    coords.col(static_cast<Eigen::Index>(a)) = merged.column(keep[a]);
    piece[a] = label[keep[a]];
  }
  // the net moves points by at most δ/2
  const double resolution = dropped ? part_res + delta / 2 : part_res;
  PointCloud cloud(merged.dim(), std::move(coords), Eigen::Map<Eigen::VectorXd>(weight.data(), static_cast<Eigen::Index>(weight.size())),
                   resolution);
  const BPiLGAudit audit = audit_big_pieces(IndexedCloud(cloud), piece, spec.theta, spec.audit_samples, seed);
  if (!audit.passed)
    throw AuditFailure("synth_bpilg_set: big-piece ratio " + format_double(audit.min_ratio) + " below θ = " +
                           format_double(spec.theta),
                       audit);
  return {std::move(cloud), std::move(piece), audit};
}

TransferRecord transfer_inequality_check(const IndexedCloud& e_tilde, const CubeTree& tree, std::size_t cube,
                                         const Point& p, PlaneFamily family, const BetaBudget& budget,
                                         double slack) {
  const IndexedCloud& e = tree.cloud();
  const Cube& q = tree.cube(cube);
  if (p.k() != e.k() || e_tilde.k() != e.k()) throw DimensionMismatch("transfer_inequality_check: dimensions differ");
  const auto near = e.index().nearest(p.packed());
  if (near.distance > e.resolution()) throw std::invalid_argument("transfer_inequality_check: p is not in E");
  if (e_tilde.distance_to(p.packed()) > e_tilde.resolution())
    throw std::invalid_argument("transfer_inequality_check: p is not in Ẽ");
  if (tree.cube_of(q.level, near.index) != cube) throw std::invalid_argument("transfer_inequality_check: p is not in Q");

  const double s = 6 * tree.c0() * tree.side(q);
  const BetaValue bt = bilateral_beta(e_tilde, p, s, family, budget);
  TransferRecord r;
  r.cube = cube;
  r.beta_tilde = bt.value;
  r.i = i_functional(e, e_tilde, p, s);
  r.i_tilde = i_functional(e_tilde, e, p, s);
  r.rhs = 3 * (r.beta_tilde + r.i + r.i_tilde);
  // the plane that is good for Ẽ on the large ball is a candidate for Q
  r.lhs = beta_for_cube(tree, cube, family, budget, {bt.plane}).value;
  r.slack = slack;
  return r;
}

StoppingTimeReport stopping_time_profile(const CubeTree& tree, const std::vector<std::size_t>& bad, std::size_t root,
                                         int n) {
  const Cube& r = tree.cube(root);
  if (n < 0) throw std::invalid_argument("stopping_time_profile: N must be non-negative");
  std::vector<char> is_bad(tree.size(), 0);
  for (std::size_t id : bad) {
    if (id >= tree.size()) throw std::out_of_range("stopping_time_profile: unknown cube id");
    is_bad[id] = 1;
  }
  StoppingTimeReport rep;
  rep.root = root;
  rep.n = n;
  std::vector<std::pair<std::size_t, int>> stack{{root, is_bad[root]}};
  while (!stack.empty()) {
    const auto [id, count] = stack.back();
    stack.pop_back();
    const Cube& q = tree.cube(id);
    if (q.children.empty()) {
      double w = 0;
      for (std::size_t m : q.members) w += tree.cloud().cloud().weight(m);
      rep.root_weight += w;
      if (count <= n) rep.qualifying_weight += w;
      continue;
    }
    for (std::size_t c : q.children) stack.push_back({c, count + is_bad[c]});
  }
  rep.eta_hat = rep.qualifying_weight / tree.nominal_mass(r);
  return rep;
}

Window default_window(const IndexedCloud& cloud) {
  const Eigen::VectorXd mean = cloud.cloud().coords().rowwise().mean();
  const std::size_t c = cloud.index().nearest(mean).index;
  return {cloud.cloud().point(c), estimate_diameter(cloud.cloud()) / 4};
}

namespace {

std::optional<AhlforsEstimate> window_ahlfors(const IndexedCloud& cloud, const Window& w) {
  const double lo = 4 * cloud.resolution();
  if (!(w.radius / 2 > lo)) return std::nullopt;
  std::vector<std::size_t> centers;
  const std::vector<std::size_t> inside = cloud.index().within(w.center.packed(), w.radius / 2);
  const std::size_t stride = std::max<std::size_t>(1, inside.size() / 64);
  for (std::size_t i = 0; i < inside.size(); i += stride) centers.push_back(inside[i]);
  std::vector<double> radii;
  for (double r = lo; r <= w.radius / 2; r *= std::sqrt(2.0)) radii.push_back(r);
  try {
    return ahlfors_ratio(cloud, centers, radii, false);
  } catch (const std::invalid_argument&) {
    return std::nullopt;
  }
}

}  // namespace

BWGLReport bwgl_report(const CubeTree& tree, const std::vector<double>& eps, PlaneFamily family,
                       const BetaBudget& budget, const std::optional<Window>& window) {
  BWGLReport rep;
  rep.window = window.value_or(default_window(tree.cloud()));
  rep.family = family;
  rep.j_min = tree.j_min();
  rep.j_max = tree.j_max();
  rep.c0 = tree.c0();
  rep.resolution = tree.cloud().resolution();
  rep.cubes = tree.size();
  rep.admissible = admissible_cubes(tree, rep.window);
  rep.betas = beta_profile(tree, rep.admissible, family, budget);
  rep.ahlfors = window_ahlfors(tree.cloud(), rep.window);
  rep.rows = bwgl_rows(tree, rep, eps, tree.j_min());
  return rep;
}

std::vector<CarlesonRow> bwgl_rows(const CubeTree& tree, const BWGLReport& report, const std::vector<double>& eps,
                                   int min_level) {
  if (report.betas.size() != report.admissible.size())
    throw std::invalid_argument("bwgl_rows: report holds no β value per admissible cube");
  std::vector<std::size_t> ids;
  std::vector<BetaValue> betas;
  for (std::size_t i = 0; i < report.admissible.size(); ++i)
    if (tree.cube(report.admissible[i]).level >= min_level) {
      ids.push_back(report.admissible[i]);
      betas.push_back(report.betas[i]);
    }
  std::vector<CarlesonRow> rows;
  for (double e : eps) {
    const std::vector<std::size_t> bad = bad_cubes(ids, betas, e);
    const PackingReport pr = ids.empty() ? PackingReport{} : packing_ratio(tree, bad, ids);
    rows.push_back({e, report.family, pr.gamma_hat, pr.offending_root, bad.size()});
  }
  return rows;
}

BWGLReport bwgl_report(const IndexedCloud& cloud, const std::vector<double>& eps, PlaneFamily family,
                       const BetaBudget& budget, const BWGLOptions& options) {
  const int j_min = options.j_min.value_or(finest_level(cloud.resolution()));
  const int j_max = options.j_max.value_or(coarsest_level(estimate_diameter(cloud.cloud())));
  const CubeTree tree = build_cube_tree(cloud, j_min, std::max(j_min, j_max), options.seed);
  return bwgl_report(tree, eps, family, budget, options.window);
}

}  // namespace hkrect
