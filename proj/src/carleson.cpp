#include "hkrect/carleson.hpp"

#include <algorithm>
#include <ostream>
#include <random>
#include <stdexcept>

#include "hkrect/parallel.hpp"

namespace hkrect {

CarlesonEstimate carleson_integral_estimate(const IndexedCloud& cloud, const CarlesonQuery& q) {
  if (!q.indicator) throw std::invalid_argument("carleson_integral_estimate: missing indicator");
  if (!(q.factor > 1) || !std::isfinite(q.factor)) throw std::invalid_argument("carleson_integral_estimate: factor must exceed 1");
  if (!(q.s_min >= cloud.resolution())) throw std::invalid_argument("carleson_integral_estimate: s_min below resolution");
  if (!(q.radius > q.s_min)) throw std::invalid_argument("carleson_integral_estimate: radius must exceed s_min");
  if (q.center.k() != cloud.k()) throw DimensionMismatch("carleson_integral_estimate: center differs in dimension");

  const std::vector<std::size_t> ball = cloud.index().within(q.center.packed(), q.radius);
  std::vector<Point> pts;
  pts.reserve(ball.size());
  for (std::size_t i : ball) pts.push_back(cloud.cloud().point(i));

  CarlesonEstimate est{0, 0, 0};
  const double lf = std::log(q.factor);
  double upper = q.radius;
  for (int j = 0; upper > q.s_min * (1 + 1e-12); ++j) {
    // slice (upper/f, upper], cut at s_min
    const double lower = std::max(q.radius * std::exp(-(j + 1) * lf), q.s_min);
    const double dlog = std::log(upper / lower);
    const double mid = std::sqrt(upper * lower);
    double mass = 0;
    for (std::size_t i = 0; i < pts.size(); ++i)
      if (q.indicator(pts[i], mid)) mass += cloud.cloud().weight(ball[i]);
    est.value += dlog * mass;
    ++est.slices;
    upper = lower;
  }
  est.normalized = est.value / std::pow(q.radius, 2 * cloud.k() + 1);
  return est;
}

PackingReport packing_ratio(const CubeTree& tree, const std::vector<std::size_t>& bad,
                            const std::vector<std::size_t>& roots) {
  std::vector<char> is_bad(tree.size(), 0);
  for (std::size_t id : bad) {
    if (id >= tree.size()) throw std::out_of_range("packing_ratio: unknown cube id");
    is_bad[id] = 1;
  }
  // children have larger ids than their parents
  std::vector<double> sub(tree.size(), 0);
  for (std::size_t id = tree.size(); id-- > 0;) {
    const Cube& q = tree.cube(id);
    double s = is_bad[id] ? tree.nominal_mass(q) : 0;
    for (std::size_t c : q.children) s += sub[c];
    sub[id] = s;
  }
  PackingReport rep;
  if (roots.empty()) {
    rep.roots.resize(tree.size());
    for (std::size_t i = 0; i < tree.size(); ++i) rep.roots[i] = i;
  } else {
    rep.roots = roots;
  }
  rep.ratio.reserve(rep.roots.size());
  for (std::size_t r : rep.roots) {
    if (r >= tree.size()) throw std::out_of_range("packing_ratio: unknown root id");
    const double v = sub[r] / tree.nominal_mass(tree.cube(r));
    rep.ratio.push_back(v);
    if (v > rep.gamma_hat) {
      rep.gamma_hat = v;
      rep.offending_root = r;
    }
  }
  return rep;
}

std::vector<std::size_t> bad_cubes(const std::vector<std::size_t>& ids, const std::vector<BetaValue>& betas,
                                   double eps) {
  if (!(eps > 0 && eps < 1)) throw std::invalid_argument("bad_cubes: epsilon must lie in (0, 1)");
  if (ids.size() != betas.size()) throw std::invalid_argument("bad_cubes: ids and values differ in length");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (betas[i].value - betas[i].grid_error > eps) out.push_back(ids[i]);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::size_t> bad_cube_set(const CubeTree& tree, double eps, PlaneFamily family, const BetaBudget& budget,
                                      const std::vector<std::size_t>& ids) {
  if (!(eps > 0 && eps < 1)) throw std::invalid_argument("bad_cube_set: epsilon must lie in (0, 1)");
  std::vector<std::size_t> all = ids;
  if (all.empty()) {
    all.resize(tree.size());
    for (std::size_t i = 0; i < tree.size(); ++i) all[i] = i;
  }
  return bad_cubes(all, beta_profile(tree, all, family, budget), eps);
}

double i_functional(const IndexedCloud& e1, const IndexedCloud& e2, const Point& p, double s) {
  if (!(s > 0)) throw std::invalid_argument("i_functional: scale must be positive");
  if (p.k() != e1.k() || e1.k() != e2.k()) throw DimensionMismatch("i_functional: dimensions differ");
  double best = 0;
  for (std::size_t i : e1.index().within(p.packed(), s)) {
    const double d = e2.distance_to(e1.cloud().column(i));
    if (d < s) best = std::max(best, d);
  }
  return best / s;
}

ComparisonReport comparison_condition_check(const CubeTree& tree, const ScaleFunction& f,
                                            const std::vector<std::size_t>& cubes, int per_cube,
                                            std::uint64_t seed) {
  if (per_cube < 1) throw std::invalid_argument("comparison_condition_check: per_cube must be positive");
  struct Sample {
    double fq, up, low;
  };
  std::vector<std::vector<Sample>> samples(cubes.size());
  parallel_for(cubes.size(), [&](std::size_t c) {
    const Cube& q = tree.cube(cubes[c]);
    std::mt19937_64 rng(seed ^ (0x9e3779b97f4a7c15ULL * (cubes[c] + 1)));
    std::uniform_int_distribution<std::size_t> pick(0, q.members.size() - 1);
    std::uniform_real_distribution<double> unit(0, 1);
    const double c0l = tree.c0() * tree.side(q);
    const double fQ = f(tree.cloud().cloud().point(q.center), tree.ball_scale(q));
    for (int i = 0; i < per_cube; ++i) {
      const Point x = tree.cloud().cloud().point(q.members[pick(rng)]);
      const double s_up = c0l * (8 - 4 * unit(rng));    // (4C₀ℓ, 8C₀ℓ]
      const double s_low = c0l * (0.5 + 0.5 * unit(rng));  // [C₀ℓ/2, C₀ℓ)
      samples[c].push_back({fQ, f(x, s_up), f(x, s_low)});
    }
  });
  ComparisonReport rep;
  rep.upper_excess = rep.lower_excess = -std::numeric_limits<double>::infinity();
  auto ratio = [](double a, double b) {
    if (a == 0) return 0.0;
    return b == 0 ? std::numeric_limits<double>::infinity() : a / b;
  };
  for (const auto& list : samples)
    for (const Sample& s : list) {
      rep.upper_constant = std::max(rep.upper_constant, ratio(s.fq, s.up));
      rep.lower_constant = std::max(rep.lower_constant, ratio(s.low, s.fq));
      rep.upper_excess = std::max(rep.upper_excess, s.fq - 4 * s.up);
      rep.lower_excess = std::max(rep.lower_excess, s.low - 4 * s.fq);
      ++rep.samples;
    }
  return rep;
}

std::vector<std::size_t> admissible_cubes(const CubeTree& tree, const Window& window) {
  if (window.center.k() != tree.cloud().k()) throw DimensionMismatch("admissible_cubes: window differs in dimension");
  std::vector<std::size_t> out;
  for (const Cube& q : tree.cubes()) {
    const double s = tree.ball_scale(q);
    if (s < 4 * tree.cloud().resolution()) continue;
    const double d = packed_distance(tree.cloud().cloud().column(q.center), window.center.packed());
    if (d + s <= window.radius) out.push_back(q.id);
  }
  return out;
}

void write_carleson_csv(std::ostream& out, const std::vector<CarlesonRow>& rows, int j_min, int j_max,
                        double resolution) {
  out << "epsilon,family,gamma_hat,offending_root,levels,resolution\n";
  for (const CarlesonRow& r : rows) {
    out << format_double(r.epsilon) << ',' << to_string(r.family) << ',' << format_double(r.gamma_hat) << ',';
    if (r.offending_root == no_cube) out << '-';
    else out << r.offending_root;
    out << ',' << j_min << ':' << j_max << ',' << format_double(resolution) << '\n';
  }
}

}  // namespace hkrect
