#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <sstream>

#include "hkrect/carleson.hpp"
#include "hkrect/graphs.hpp"
#include "test_util.hpp"

using namespace hkrect;
using testutil::P;

namespace {

const GroupDim H1(1);

IndexedCloud plane_net(double delta, double a = 1.0) {
  const Frame f = Frame::axis(H1, 0);
  const ParamBox box = ParamBox::centered(H1, a, a * a / 4);
  return IndexedCloud(sample_graph(GraphSpec(f, 0.5, [](const Eigen::VectorXd&) { return 0.0; }, box), box, delta));
}

IndexedCloud graph_cloud(double delta, std::uint64_t seed) {
  const Frame f = Frame::axis(H1, 0);
  const ParamBox box = ParamBox::centered(H1, 1, 0.35);
  const SynthesizedGraph g = synthesize_graph(f, 0.5, box, 6, 0.4, 0.5, 0.1, seed);
  return IndexedCloud(sample_graph(g.spec, box, delta));
}

IndexedCloud cloud_of(std::initializer_list<Point> pts, double res = 0.01) {
  const auto n = static_cast<Eigen::Index>(pts.size());
  Eigen::MatrixXd c(3, n);
  Eigen::Index i = 0;
  for (const Point& p : pts) c.col(i++) = p.packed();
  return IndexedCloud(PointCloud(H1, c, Eigen::VectorXd::Ones(n), res));
}

double ball_weight(const IndexedCloud& c, const Point& p, double r) {
  double w = 0;
  for (std::size_t i = 0; i < c.size(); ++i)
    if (distance(c.cloud().point(i), p) < r) w += c.cloud().weight(i);
  return w;
}

}  // namespace

TEST_CASE("Carleson integral: empty set, ln 2 benchmark, grid refinement") {
  const IndexedCloud cloud = plane_net(0.05);
  const Point c = Point::identity(H1);
  const double r = 0.6;
  CarlesonQuery none{[](const Point&, double) { return false; }, c, r, 0.08};
  CHECK(carleson_integral_estimate(cloud, none).value == 0);

  const double mass = ball_weight(cloud, c, r);
  CarlesonQuery band{[r](const Point&, double s) { return s > r / 2 && s < r; }, c, r, 0.08};
  const CarlesonEstimate e = carleson_integral_estimate(cloud, band);
  CHECK(e.value == doctest::Approx(mass * std::log(2.0)).epsilon(1e-12));
  CHECK(e.normalized == doctest::Approx(e.value / std::pow(r, 3)).epsilon(1e-12));
  band.factor = std::pow(2.0, 1.0 / 8);
  CHECK(std::abs(carleson_integral_estimate(cloud, band).value / e.value - 1) < 0.05);
  band.factor = std::pow(2.0, 1.0 / 3);
  CHECK(std::abs(carleson_integral_estimate(cloud, band).value / e.value - 1) < 0.2);

  CHECK_THROWS_AS(carleson_integral_estimate(cloud, CarlesonQuery{band.indicator, c, r, 0.01}), std::invalid_argument);
  CHECK_THROWS_AS(carleson_integral_estimate(cloud, CarlesonQuery{band.indicator, c, 0.08, 0.08}),
                  std::invalid_argument);
  CHECK_THROWS_AS(carleson_integral_estimate(cloud, CarlesonQuery{band.indicator, c, r, 0.08, 1.0}),
                  std::invalid_argument);
}

TEST_CASE("Carleson integral diverges logarithmically on E × (0, ∞)") {
  const IndexedCloud cloud = plane_net(0.01, 0.5);
  const Point c = Point::identity(H1);
  const double r = 0.4;
  const double mass = ball_weight(cloud, c, r);
  std::vector<double> x, y;
  for (int m = 1; m <= 4; ++m) {
    const double s_min = r * std::pow(2.0, -m);
    x.push_back(std::log(1 / s_min));
    y.push_back(carleson_integral_estimate(cloud, {[](const Point&, double) { return true; }, c, r, s_min}).value);
  }
  // least-squares slope
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  CHECK(std::abs(slope / mass - 1) < 0.05);
}

TEST_CASE("packing ratio") {
  const IndexedCloud cloud = plane_net(0.08, 2);
  const CubeTree tree = build_cube_tree(cloud, -3, 3, 3);
  CHECK(packing_ratio(tree, {}).gamma_hat == 0);
  CHECK(packing_ratio(tree, {}).offending_root == no_cube);
  const std::size_t r = tree.level(-1)[0];
  const PackingReport one = packing_ratio(tree, {r});
  CHECK(one.ratio[r] == 1);

  // oracle by member inclusion, independent of the child links
  auto brute = [&](std::size_t root, const std::vector<std::size_t>& bad) {
    const auto& rm = tree.cube(root).members;
    double s = 0;
    for (std::size_t b : bad) {
      const auto& bm = tree.cube(b).members;
      if (tree.cube(b).level <= tree.cube(root).level && std::includes(rm.begin(), rm.end(), bm.begin(), bm.end()))
        s += std::pow(CubeTree::side(tree.cube(b).level), 3);
    }
    return s / std::pow(CubeTree::side(tree.cube(root).level), 3);
  };
  std::vector<std::size_t> all(tree.size());
  for (std::size_t i = 0; i < tree.size(); ++i) all[i] = i;
  const PackingReport full = packing_ratio(tree, all);
  for (std::size_t id : tree.level(-1)) CHECK(full.ratio[id] == doctest::Approx(brute(id, all)).epsilon(1e-12));

  // all cubes over L levels below an interior root: per-level increments comparable to 1
  std::size_t root = tree.level(-1)[0];
  for (std::size_t id : tree.level(-1))
    if (koranyi_norm(cloud.cloud().point(tree.cube(id).center)) <
        koranyi_norm(cloud.cloud().point(tree.cube(root).center)))
      root = id;
  double prev = 0;
  for (int L = 0; L <= 2; ++L) {
    std::vector<std::size_t> bad;
    for (int j = -1 - L; j <= -1; ++j)
      for (std::size_t id : tree.level(j)) bad.push_back(id);
    const double v = packing_ratio(tree, bad, {root}).gamma_hat;
    const double step = v - prev;
    CHECK(step >= 0.25);
    CHECK(step <= 4);
    prev = v;
  }

  // additivity over disjoint bad sets
  std::mt19937_64 rng(41);
  std::vector<std::size_t> a, b;
  for (std::size_t i = 0; i < tree.size(); ++i) (rng() % 2 ? a : b).push_back(i);
  const PackingReport ra = packing_ratio(tree, a), rb = packing_ratio(tree, b);
  for (std::size_t i = 0; i < tree.size(); ++i)
    CHECK(full.ratio[i] <= ra.ratio[i] + rb.ratio[i] + 1e-12);
  CHECK_THROWS_AS(packing_ratio(tree, {tree.size()}), std::out_of_range);
}

TEST_CASE("i_functional") {
  const Point p = Point::identity(H1);
  const IndexedCloud e1 = cloud_of({p, P({0.1, 0}, 0), P({0, 0.2}, 0.01)});
  const IndexedCloud e2 = cloud_of({p, P({0.1, 0}, 0), P({0, 0.2}, 0.01), P({5, 5}, 5)});
  CHECK(i_functional(e1, e2, p, 1.0) == 0);
  const IndexedCloud far = cloud_of({P({3, 0}, 0)});
  CHECK(i_functional(e1, far, p, 1.0) == 0);  // every candidate is at distance ≥ s
  const Frame f(Eigen::Vector2d(0.6, 0.8));
  const double a = 0.3;
  const IndexedCloud single = cloud_of({p});
  const IndexedCloud shifted = cloud_of({Point(Eigen::VectorXd(a * f.nu()), 0.0)});
  CHECK(i_functional(single, shifted, p, 0.5) == doctest::Approx(a / 0.5).epsilon(1e-15));
  CHECK(i_functional(single, shifted, p, 0.3) == 0);
  CHECK_THROWS_AS(i_functional(single, shifted, p, 0.0), std::invalid_argument);
}

TEST_CASE("bad cubes, admissibility and comparison conditions") {
  auto t0 = std::chrono::steady_clock::now();
  auto lap = [&t0](const char* what) {
    const auto t1 = std::chrono::steady_clock::now();
    MESSAGE(what << " took " << std::chrono::duration<double>(t1 - t0).count() << " s");
    t0 = t1;
  };
  const IndexedCloud plane = plane_net(0.04, 1.2);
  const CubeTree tree = build_cube_tree(plane, -4, 2, 5);
  const Window w{plane.cloud().point(plane.index().nearest(Eigen::Vector3d::Zero()).index), 1.0};
  const std::vector<std::size_t> adm = admissible_cubes(tree, w);
  REQUIRE(!adm.empty());
  std::vector<char> ok(tree.size(), 0);
  for (std::size_t id : adm) ok[id] = 1;
  for (std::size_t id : adm) {
    const Cube& q = tree.cube(id);
    CHECK(distance(plane.cloud().point(q.center), w.center) + tree.ball_scale(q) <= w.radius);
    for (std::size_t c : q.children)
      if (tree.ball_scale(tree.cube(c)) >= 4 * plane.resolution()) CHECK(ok[c]);
  }
  std::vector<std::size_t> some;
  for (std::size_t i = 0; i < adm.size(); i += std::max<std::size_t>(1, adm.size() / 40)) some.push_back(adm[i]);
  const std::vector<BetaValue> betas = beta_profile(tree, some, PlaneFamily::vertical, BetaBudget{});
  CHECK(bad_cubes(some, betas, 0.1).empty());
  for (std::size_t i = 0; i < some.size(); ++i)
    CHECK(betas[i].value <= 2 * 0.04 / tree.ball_scale(tree.cube(some[i])));

  lap("plane betas");
  // thresholds nest
  const IndexedCloud g = graph_cloud(0.04, 9);
  const CubeTree gt = build_cube_tree(g, -4, 2, 5);
  const Window gw{g.cloud().point(g.index().nearest(Eigen::Vector3d::Zero()).index), 1.0};
  std::vector<std::size_t> gadm;
  for (std::size_t id : admissible_cubes(gt, gw))
    if (id % 5 == 0) gadm.push_back(id);
  const std::vector<BetaValue> gb = beta_profile(gt, gadm, PlaneFamily::vertical, BetaBudget{});
  std::vector<std::size_t> prev = bad_cubes(gadm, gb, 0.01);
  for (double eps : {0.02, 0.05, 0.1, 0.2, 0.4}) {
    const std::vector<std::size_t> cur = bad_cubes(gadm, gb, eps);
    CHECK(std::includes(prev.begin(), prev.end(), cur.begin(), cur.end()));
    prev = cur;
  }
  CHECK(bad_cube_set(gt, 0.1, PlaneFamily::vertical, BetaBudget{}, gadm) == bad_cubes(gadm, gb, 0.1));
  CHECK_THROWS_AS(bad_cubes(gadm, gb, 1.0), std::invalid_argument);

  lap("graph betas");
  // f ≡ const
  std::vector<std::size_t> sample(gadm.begin(), gadm.begin() + std::min<std::size_t>(gadm.size(), 12));
  const ComparisonReport cst =
      comparison_condition_check(gt, [](const Point&, double) { return 0.7; }, sample, 3, 1);
  CHECK(cst.upper_constant == 1);
  CHECK(cst.lower_constant == 1);
  CHECK(cst.holds());

  // f = β on coarser cubes; the inclusions behind the comparison do not need the balls inside the sample
  int level = -3;
  while (gt.c0() * CubeTree::side(level) / 2 < 4 * g.resolution()) ++level;
  std::vector<std::size_t> coarse;
  for (std::size_t id : gt.level(level))
    if (coarse.size() < 2) coarse.push_back(id);
  const ComparisonReport rb = comparison_condition_check(
      gt, [&](const Point& x, double s) { return bilateral_beta(g, x, s, PlaneFamily::vertical, BetaBudget{}).value; },
      coarse, 1, 2);
  MESSAGE("beta comparison constants " << rb.upper_constant << " " << rb.lower_constant << " over " << rb.samples);
  // each value carries a lattice error of at most resolution / scale
  const double slack = 4 * g.resolution() / (gt.c0() * CubeTree::side(level) / 2);
  CHECK(rb.holds(slack));
  lap("beta comparison");

  // f = i_functional against a fixed second set
  const IndexedCloud other = plane_net(0.05, 1.2);
  const ComparisonReport ri =
      comparison_condition_check(gt, [&](const Point& x, double s) { return i_functional(g, other, x, s); }, coarse, 2, 3);
  MESSAGE("I comparison constants " << ri.upper_constant << " " << ri.lower_constant);
  CHECK(ri.holds(slack));
  lap("I comparison");
}

TEST_CASE("crease balls are bad at small epsilon, flat balls are not") {
  // {(0, y, t) : y ≥ 0} ∪ {(x, 0, t) : x > 0}
  const double delta = 0.04;
  std::vector<Eigen::Vector3d> pts;
  for (double u = 0; u <= 1.3 + 1e-12; u += delta)
    for (double t = -0.2; t <= 0.2 + 1e-12; t += delta * delta / 4) {
      pts.emplace_back(0, u, t);
      if (u > 0) pts.emplace_back(u, 0, t);
    }
  Eigen::MatrixXd c(3, static_cast<Eigen::Index>(pts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i) c.col(static_cast<Eigen::Index>(i)) = pts[i];
  const IndexedCloud cloud(PointCloud(H1, c, Eigen::VectorXd::Constant(c.cols(), std::pow(delta, 3)), delta));
  const double s = 0.3;
  std::vector<std::size_t> ids;
  std::vector<BetaValue> betas;
  for (double t : {-0.1, 0.0, 0.1}) {
    ids.push_back(ids.size());
    betas.push_back(bilateral_beta(cloud, P({0, 0}, t), s, PlaneFamily::vertical, BetaBudget{}));
  }
  for (double t : {-0.1, 0.0, 0.1}) {
    ids.push_back(ids.size());
    betas.push_back(bilateral_beta(cloud, P({0.95, 0}, t), s, PlaneFamily::vertical, BetaBudget{}));
  }
  CHECK(bad_cubes(ids, betas, 0.05) == std::vector<std::size_t>{0, 1, 2});
}

TEST_CASE("Carleson CSV") {
  std::ostringstream out;
  write_carleson_csv(out, {{0.1, PlaneFamily::vertical, 0.0, no_cube, 0}, {0.05, PlaneFamily::affine, 1.5, 7, 3}}, -4,
                     1, 0.05);
  CHECK(out.str() ==
        "epsilon,family,gamma_hat,offending_root,levels,resolution\n"
        "0.1,vertical,0,-,-4:1,0.05\n"
        "0.05,affine,1.5,7,-4:1,0.05\n");
}
