#include "hkrect/graphs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "hkrect/parallel.hpp"

namespace hkrect {

ParamBox::ParamBox(Eigen::VectorXd lo, Eigen::VectorXd hi) : lower(std::move(lo)), upper(std::move(hi)) {
  if (lower.size() != upper.size() || lower.size() < 2 || lower.size() % 2 != 0)
    throw DimensionMismatch("ParamBox: bounds must have length 2k");
  for (Eigen::Index i = 0; i < lower.size(); ++i)
    if (!(upper(i) > lower(i)) || !std::isfinite(lower(i)) || !std::isfinite(upper(i)))
      throw std::invalid_argument("ParamBox: degenerate box");
}

ParamBox ParamBox::centered(GroupDim dim, double a, double b) {
  Eigen::VectorXd hi(dim.horizontal());
  hi.head(dim.horizontal() - 1).setConstant(a);
  hi(dim.horizontal() - 1) = b;
  return ParamBox(-hi, hi);
}

bool ParamBox::contains(const Eigen::VectorXd& w, double tol) const {
  if (w.size() != lower.size()) return false;
  for (Eigen::Index i = 0; i < w.size(); ++i)
    if (w(i) < lower(i) - tol || w(i) > upper(i) + tol) return false;
  return true;
}

double ParamBox::inner_radius() const {
  const Eigen::Index n = lower.size() - 1;
  const Eigen::VectorXd half = (upper - lower) / 2;
  return std::min(half.head(n).minCoeff(), 2 * std::sqrt(half(n)));
}

GraphSpec::GraphSpec(Frame f, double l, GraphFunction p, ParamBox b)
    : frame(std::move(f)), lambda(l), phi(std::move(p)), box(std::move(b)) {
  if (!(lambda > 0 && lambda < 1)) throw std::invalid_argument("GraphSpec: λ must lie in (0,1)");
  if (!phi) throw std::invalid_argument("GraphSpec: missing graph map");
  if (box.size() != frame.dim().horizontal()) throw DimensionMismatch("GraphSpec: box dimension mismatch");
}

Point vertical_point(const Frame& frame, const Eigen::VectorXd& w) {
  const int n = frame.dim().horizontal();
  if (w.size() != n) throw DimensionMismatch("vertical_point: coordinates must have length 2k");
  return Point(Eigen::VectorXd(frame.complement() * w.head(n - 1)), w(n - 1));
}

Eigen::VectorXd vertical_coords(const Frame& frame, const Point& p) {
  const int n = frame.dim().horizontal();
  if (p.k() != frame.k()) throw DimensionMismatch("vertical_coords: dimension mismatch");
  Eigen::VectorXd w(n);
  w.head(n - 1) = frame.complement().transpose() * p.v();
  w(n - 1) = p.t();
  return w;
}

namespace {

// w·(φν, 0) written straight into packed coordinates.
void graph_point_into(const Frame& frame, const Eigen::VectorXd& w, double phi, double* out) {
  const int n = frame.dim().horizontal();
  const Eigen::VectorXd v = frame.complement() * w.head(n - 1);
  for (int i = 0; i < n; ++i) out[i] = v(i) + phi * frame.nu()(i);
  out[n] = w(n - 1) + phi * symplectic(v, frame.nu()) / 2;
}

}  // namespace

Point graph_point(const GraphSpec& spec, const Eigen::VectorXd& w) {
  if (!spec.box.contains(w)) throw std::out_of_range("graph_point: coordinates outside the parameter box");
  Eigen::VectorXd x(spec.frame.dim().packed());
  graph_point_into(spec.frame, w, spec.phi(w), x.data());
  return Point::from_packed(std::move(x));
}

double BumpField::operator()(const Eigen::VectorXd& w) const {
  const Eigen::Index n = w.size() - 1;
  const double s4 = width * width * width * width;
  double sum = 0;
  for (Eigen::Index i = 0; i < centers.cols(); ++i) {
    const double du2 = (w.head(n) - centers.col(i).head(n)).squaredNorm();
    const double dt = w(n) - centers(n, i);
    sum += amplitudes(i) * std::exp(-(du2 * du2 + 16 * dt * dt) / s4);
  }
  return sum;
}

BumpField random_bumps(const ParamBox& box, int count, double amplitude, double width, std::uint64_t seed) {
  if (count < 0 || !(width > 0)) throw std::invalid_argument("random_bumps: bad parameters");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  BumpField f;
  f.width = width;
  f.centers.resize(box.size(), count);
  f.amplitudes.resize(count);
  for (int i = 0; i < count; ++i) {
    for (int d = 0; d < box.size(); ++d) f.centers(d, i) = box.lower(d) + unit(rng) * (box.upper(d) - box.lower(d));
    f.amplitudes(i) = amplitude * (2 * unit(rng) - 1);
  }
  return f;
}

PointCloud sample_graph(const GraphSpec& spec, const ParamBox& box, double delta, std::uint64_t seed) {
  if (!(delta > 0) || !std::isfinite(delta)) throw std::invalid_argument("sample_graph: δ must be positive");
  const int n = box.size();
  if (n != spec.frame.dim().horizontal()) throw DimensionMismatch("sample_graph: box dimension mismatch");
  Eigen::VectorXd step = Eigen::VectorXd::Constant(n, delta);
  step(n - 1) = delta * delta;
  // Seed 0 anchors the grid at the lower corner; other seeds shift it within one cell.
  Eigen::VectorXd origin = box.lower;
  if (seed != 0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int d = 0; d < n; ++d) origin(d) += unit(rng) * step(d);
  }
  std::vector<long> count(n);
  long total = 1;
  for (int d = 0; d < n; ++d) {
    count[d] = static_cast<long>(std::floor((box.upper(d) - origin(d)) / step(d) + 1e-9)) + 1;
    if (count[d] < 1) throw std::invalid_argument("sample_graph: box smaller than one cell");
    total *= count[d];
  }
  const int rows = spec.frame.dim().packed();
  Eigen::MatrixXd coords(rows, total);
  parallel_for(static_cast<std::size_t>(total), [&](std::size_t flat) {
    Eigen::VectorXd w(n);
    long rest = static_cast<long>(flat);
    for (int d = n - 1; d >= 0; --d) {
      w(d) = std::min(origin(d) + static_cast<double>(rest % count[d]) * step(d), box.upper(d));
      rest /= count[d];
    }
    graph_point_into(spec.frame, w, spec.phi(w), coords.col(static_cast<Eigen::Index>(flat)).data());
  });
  // Resolution: the grid spacing or, if larger, the worst distance from the
  // image of a cell centre to the sample.
  long cells = 1;
  for (int d = 0; d < n; ++d) cells *= std::max(0L, count[d] - 1);
  std::vector<double> cover(static_cast<std::size_t>(cells), 0.0);
  const KoranyiIndex index(coords);
  parallel_for(cover.size(), [&](std::size_t flat) {
    Eigen::VectorXd w(n);
    long rest = static_cast<long>(flat);
    for (int d = n - 1; d >= 0; --d) {
      const double a = origin(d) + static_cast<double>(rest % (count[d] - 1)) * step(d);
      w(d) = (a + std::min(a + step(d), box.upper(d))) / 2;
      rest /= count[d] - 1;
    }
    Eigen::VectorXd mid(rows);
    graph_point_into(spec.frame, w, spec.phi(w), mid.data());
    cover[flat] = index.nearest(mid.data()).distance;
  });
  const double resolution = std::max(delta, cover.empty() ? 0.0 : *std::max_element(cover.begin(), cover.end()));
  const double weight = std::pow(delta, 2 * spec.frame.k() + 1);
  return PointCloud(spec.frame.dim(), std::move(coords), Eigen::VectorXd::Constant(total, weight), resolution);
}

ConeConditionReport cone_condition_check(const PointCloud& cloud, const Frame& frame, std::optional<double> query) {
  if (cloud.empty()) throw std::invalid_argument("cone_condition_check: empty cloud");
  if (cloud.k() != frame.k()) throw DimensionMismatch("cone_condition_check: dimension mismatch");
  const int k = cloud.k(), n = 2 * k;
  const std::size_t N = cloud.size();
  const double* X = cloud.coords().data();
  if (k > 32) throw std::invalid_argument("cone_condition_check: k > 32 unsupported");
  const double* nu = frame.nu().data();
  struct Row {
    double best = -1;
    std::size_t j = 0;
    std::size_t violations = 0;
  };
  std::vector<Row> rows(N);
  const double qlam = query.value_or(std::numeric_limits<double>::infinity());
  parallel_for(N, [&](std::size_t i) {
    const double* p = X + i * (n + 1);
    Row row;
    double dv[64];
    for (std::size_t j = i + 1; j < N; ++j) {
      const double* q = X + j * (n + 1);
      double a = 0, om = 0;
      for (int c = 0; c < k; ++c) {
        dv[c] = q[c] - p[c];
        dv[c + k] = q[c + k] - p[c + k];
        om += p[c] * q[c + k] - p[c + k] * q[c];
      }
      for (int c = 0; c < n; ++c) a += dv[c] * nu[c];
      double w2 = 0;
      for (int c = 0; c < n; ++c) {
        const double r = dv[c] - a * nu[c];
        w2 += r * r;
      }
      const double t = q[n] - p[n] - om / 2;
      const double r2 = a * a + w2;
      const double den = std::sqrt(std::sqrt(r2 * r2 + 16 * t * t));
      const double g = den > 0 ? std::min(1.0, std::abs(a) / den) : 0.0;
      if (g > row.best) {
        row.best = g;
        row.j = j;
      }
      if (g > qlam) ++row.violations;
    }
    rows[i] = row;
  });
  ConeConditionReport rep;
  rep.queried_lambda = query;
  double best = -1;
  for (std::size_t i = 0; i < N; ++i) {
    rep.violations += rows[i].violations;
    if (rows[i].best > best) {
      best = rows[i].best;
      rep.worst_pair = {i, rows[i].j};
    }
  }
  rep.tightest_lambda = std::max(best, 0.0);
  if (N == 1) rep.worst_pair = {0, 0};
  return rep;
}

SynthesizedGraph synthesize_graph(const Frame& frame, double lambda, const ParamBox& box, int bumps,
                                  double amplitude, double width, double delta, std::uint64_t seed) {
  BumpField field = random_bumps(box, bumps, amplitude, width, seed);
  for (int halvings = 0;; ++halvings) {
    GraphSpec spec(frame, lambda, field, box);
    const double tight = cone_condition_check(sample_graph(spec, box, delta), frame).tightest_lambda;
    if (tight <= lambda) return {std::move(spec), std::move(field), halvings, tight};
    if (halvings > 60) throw std::runtime_error("synthesize_graph: no acceptable amplitude found");
    field.amplitudes /= 2;
  }
}

GraphTable::GraphTable(const PointCloud& cloud, const Frame& frame) : frame_(frame) {
  if (cloud.k() != frame.k()) throw DimensionMismatch("graph_function_recover: dimension mismatch");
  const int n = 2 * cloud.k();
  Eigen::MatrixXd bases(n + 1, static_cast<Eigen::Index>(cloud.size()));
  entries_.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Point p = cloud.point(i);
    Point b = proj_vertical(frame, p);
    bases.col(static_cast<Eigen::Index>(i)) = b.packed();
    entries_.push_back({b.packed(), p.v().dot(frame.nu()), i});
  }
  index_ = KoranyiIndex(bases);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const double* bi = bases.col(static_cast<Eigen::Index>(i)).data();
    const auto nb = index_.nearest_if(bi, [i](std::size_t j) { return j != i; });
    if (!nb.found()) continue;
    const double tol = 1e-12 * std::max(1.0, packed_norm(bases.col(static_cast<Eigen::Index>(i))));
    if (nb.distance <= tol) {
      const double gap = packed_distance(cloud.column(i), cloud.column(nb.index));
      if (gap > tol)
        throw GraphError("graph_function_recover: points " + std::to_string(i) + " and " +
                         std::to_string(nb.index) + " share a vertical projection");
    }
  }
}

double GraphTable::lookup(const Point& y) const {
  if (entries_.empty()) throw GraphError("GraphTable: empty table");
  return entries_[index_.nearest(y.packed()).index].value;
}

GraphTable graph_function_recover(const PointCloud& cloud, const Frame& frame) { return GraphTable(cloud, frame); }

ConditionBWitness condition_b_witness(const IndexedCloud& cloud, const GraphTable& table, double beta,
                                      std::size_t p_index, double r, const std::vector<Path>& paths,
                                      const GraphFunction& phi) {
  if (p_index >= cloud.size()) throw std::out_of_range("condition_b_witness: p not in cloud");
  if (!(r > 0)) throw std::invalid_argument("condition_b_witness: r must be positive");
  const Frame& frame = table.frame();
  const Point p = cloud.cloud().point(p_index);
  const Point q1(Eigen::VectorXd(-r / 2 * frame.nu()), 0.0);
  const Point q2(Eigen::VectorXd(r / 2 * frame.nu()), 0.0);
  ConditionBWitness w{compose(p, q1), compose(p, q2), 0, 0, 0, false, false, false, {}};
  w.clearance1 = cloud.distance_to(w.p1.packed());
  w.clearance2 = cloud.distance_to(w.p2.packed());
  w.required = beta * r / 2 - cloud.resolution();
  w.clear = w.clearance1 >= w.required && w.clearance2 >= w.required;
  w.inside = distance(w.p1, p) < r && distance(w.p2, p) < r;

  auto h = [&](const Point& s) {
    const Point base = proj_vertical(frame, s);
    const double f = phi ? phi(vertical_coords(frame, base)) : table.lookup(base);
    return s.v().dot(frame.nu()) - f;
  };
  std::vector<Path> probes = paths;
  if (probes.empty()) {
    Path straight;
    constexpr int steps = 64;
    for (int i = 0; i <= steps; ++i) {
      const double a = double(i) / steps;
      straight.push_back(Point::from_packed(Eigen::VectorXd((1 - a) * w.p1.packed() + a * w.p2.packed())));
    }
    probes.push_back(std::move(straight));
  }
  w.sign_change = true;
  for (const Path& path : probes) {
    if (path.size() < 2) throw std::invalid_argument("condition_b_witness: path needs two vertices");
    std::vector<double> hv;
    bool change = false;
    for (const Point& s : path) {
      hv.push_back(h(s));
      if (hv.size() > 1 && hv[hv.size() - 2] * hv.back() <= 0) change = true;
    }
    w.sign_change = w.sign_change && change;
    if (w.h.empty()) w.h = std::move(hv);
  }
  return w;
}

ConditionBWitness condition_b_witness(const IndexedCloud& cloud, const Frame& frame, double beta, const Point& p,
                                      double r) {
  const std::size_t idx = cloud.locate(p.packed(), 1e-12 * std::max(1.0, koranyi_norm(p)));
  return condition_b_witness(cloud, graph_function_recover(cloud.cloud(), frame), beta, idx, r);
}

double ball_mass(const IndexedCloud& cloud, const Eigen::Ref<const Eigen::VectorXd>& p, double r) {
  double m = 0;
  for (std::size_t i : cloud.index().within(p.data(), r)) m += cloud.cloud().weight(i);
  return m;
}

AhlforsEstimate ahlfors_ratio(const IndexedCloud& cloud, const std::vector<std::size_t>& centers,
                              const std::vector<double>& radii, bool restrict_radii) {
  if (cloud.size() == 0) throw std::invalid_argument("ahlfors_ratio: empty cloud");
  double rmin = 0, rmax = std::numeric_limits<double>::infinity();
  if (restrict_radii) {
    rmin = 4 * cloud.resolution();
    rmax = estimate_diameter(cloud.cloud()) / 4;
    if (!(rmax >= rmin)) throw std::invalid_argument("ahlfors_ratio: empty admissible radius range");
  }
  std::vector<double> used;
  for (double r : radii)
    if (r > 0 && r >= rmin && r <= rmax) used.push_back(r);
  if (used.empty() || centers.empty()) throw std::invalid_argument("ahlfors_ratio: no admissible queries");
  const double dim = 2 * cloud.k() + 1;
  std::vector<std::pair<double, double>> ext(centers.size());
  parallel_for(centers.size(), [&](std::size_t c) {
    double lo = std::numeric_limits<double>::infinity(), hi = 0;
    for (double r : used) {
      const double ratio = ball_mass(cloud, cloud.cloud().column(centers[c]), r) / std::pow(r, dim);
      lo = std::min(lo, ratio);
      hi = std::max(hi, ratio);
    }
    ext[c] = {lo, hi};
  });
  AhlforsEstimate est;
  est.min_ratio = std::numeric_limits<double>::infinity();
  for (const auto& [lo, hi] : ext) {
    est.min_ratio = std::min(est.min_ratio, lo);
    est.max_ratio = std::max(est.max_ratio, hi);
  }
  est.queries = centers.size() * used.size();
  est.constant = std::max(est.max_ratio, est.min_ratio > 0 ? 1 / est.min_ratio : std::numeric_limits<double>::infinity());
  return est;
}

}  // namespace hkrect
