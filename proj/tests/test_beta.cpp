#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <numbers>
#include <sstream>

#include "hkrect/beta.hpp"
#include "hkrect/graphs.hpp"
#include "test_util.hpp"

using namespace hkrect;
using testutil::P;

namespace {

const GroupDim H1(1);

// 1-D minimization by a dense scan followed by repeated zooming around the best sample.
double zoom_min(const std::function<double(double)>& f, double center, double span, double* arg = nullptr) {
  double best = f(center), at = center;
  int half = 100;
  for (int round = 0; round < 16; ++round) {
    const double c = at;
    for (int i = -half; i <= half; ++i) {
      const double x = c + span * i / half;
      const double v = f(x);
      if (v < best) {
        best = v;
        at = x;
      }
    }
    span *= 2.0 / half;
    half = 10;
  }
  if (arg) *arg = at;
  return best;
}

// min d(q, w) over w = base + α e₁ + β e₂ (Euclidean chart of the plane), nested 1-D searches.
double brute_plane_distance(const Point& q, const Eigen::Vector3d& base, const Eigen::Vector3d& e1,
                            const Eigen::Vector3d& e2, double span) {
  return zoom_min(
      [&](double a) {
        return zoom_min(
            [&](double b) { return distance(q, Point::from_packed(Eigen::VectorXd(base + a * e1 + b * e2))); }, 0,
            span);
      },
      0, span);
}

// Points of the grid {(x, y, t)} with spacing δ horizontally and δ² vertically, kept by `keep`.
PointCloud grid_cloud(double delta, const std::function<bool(double, double, double)>& keep,
                      const std::function<Eigen::Vector3d(double, double)>& embed, double umax, double tmax,
                      double umin = NAN) {
  if (std::isnan(umin)) umin = -umax;
  std::vector<Eigen::Vector3d> pts;
  for (double u = umin; u <= umax + 1e-12; u += delta)
    for (double t = -tmax; t <= tmax + 1e-12; t += delta * delta) {
      const Eigen::Vector3d x = embed(u, t);
      if (keep(x(0), x(1), x(2))) pts.push_back(x);
    }
  Eigen::MatrixXd c(3, static_cast<Eigen::Index>(pts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i) c.col(static_cast<Eigen::Index>(i)) = pts[i];
  return PointCloud(H1, c, Eigen::VectorXd::Constant(c.cols(), std::pow(delta, 3)), delta);
}

IndexedCloud parallel_planes(double h, double delta) {
  const auto all = [](double, double, double) { return true; };
  const PointCloud a = grid_cloud(delta, all, [h](double u, double t) { return Eigen::Vector3d(h, u, t); }, 1.1, 0.35);
  const PointCloud b = grid_cloud(delta, all, [h](double u, double t) { return Eigen::Vector3d(-h, u, t); }, 1.1, 0.35);
  return IndexedCloud(merge(a, b));
}

IndexedCloud graph_cloud(double delta, std::uint64_t seed) {
  const Frame f = Frame::axis(H1, 0);
  const ParamBox box = ParamBox::centered(H1, 1, 0.35);
  const SynthesizedGraph g = synthesize_graph(f, 0.5, box, 6, 0.4, 0.5, 0.1, seed);
  return IndexedCloud(sample_graph(g.spec, box, delta));
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

TEST_CASE("point-plane distance examples") {
  const Hyperplane v = Hyperplane::vertical(Point::identity(H1), Frame::axis(H1, 0));
  CHECK(dist_point_to_plane(P({2, 0}, 5), v) == doctest::Approx(2).epsilon(1e-15));
  const Hyperplane flat = Hyperplane::affine(Eigen::Vector3d(0, 0, 1), 0);
  CHECK(dist_point_to_plane(P({0, 0}, 1), flat) == doctest::Approx(2).epsilon(1e-15));
  CHECK(dist_point_to_plane(P({0.3, -0.2}, 0), flat) == 0);
  CHECK(v.kind() == PlaneFamily::vertical);
  CHECK(v.normal()(2) == 0);
  CHECK(v.contains(P({0, 7}, -3)));
  CHECK_FALSE(v.contains(P({0.1, 7}, -3)));
  CHECK_THROWS_AS(Hyperplane::affine(Eigen::Vector3d(0, 0, 2), 0), std::invalid_argument);
  CHECK_THROWS_AS(Hyperplane::affine(Eigen::Vector3d(0, 1, 0), 0, -1.0), std::invalid_argument);
  CHECK_THROWS_AS(flat.frame(), std::logic_error);
  CHECK(parse_family("affine") == PlaneFamily::affine);
  CHECK_THROWS_AS(parse_family("horizontal"), std::invalid_argument);
}

TEST_CASE("vertical closed form agrees with brute-force minimization") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-1, 1);
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    const Point p0 = testutil::random_point(1, rng);
    const Frame f(testutil::random_unit(2, rng));
    const Hyperplane plane = Hyperplane::vertical(p0, f);
    const Point q = compose(p0, P({u(rng), u(rng)}, u(rng)));
    // the plane is p₀·V_ν; chart it by p₀·(a μ, b)
    const Eigen::Vector2d mu(-f.nu()(1), f.nu()(0));
    const double best = zoom_min(
        [&](double x) {
          return zoom_min([&](double y) { return distance(q, compose(p0, Point(Eigen::VectorXd(x * mu), y))); }, 0,
                          3);
        },
        0, 3);
    worst = std::max(worst, std::abs(best - dist_point_to_plane(q, plane)));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("affine closed form agrees with brute-force minimization") {
  std::mt19937_64 rng(32);
  double worst = 0;
  for (int i = 0; i < 300; ++i) {
    const Eigen::Vector3d n = testutil::random_unit(3, rng);
    const double c = std::normal_distribution<double>(0, 0.5)(rng);
    const Hyperplane plane = Hyperplane::affine(n, c);
    const Point q = testutil::random_point(1, rng, 0.7);
    Eigen::Vector3d e1 = n.unitOrthogonal();
    Eigen::Vector3d e2 = n.cross(e1);
    const double brute = brute_plane_distance(q, c * n, e1, e2, 4);
    const double exact = dist_point_to_plane(q, plane);
    CHECK(exact <= brute + 1e-12);
    worst = std::max(worst, std::abs(brute - exact));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("distance is invariant under left translation and homogeneous under dilation") {
  std::mt19937_64 rng(33);
  for (int i = 0; i < 200; ++i) {
    const Eigen::Vector3d n = testutil::random_unit(3, rng);
    const Point anchor = testutil::random_point(1, rng);
    const Hyperplane plane = Hyperplane::through(n, anchor);
    const Point q = testutil::random_point(1, rng);
    const Point g = testutil::random_point(1, rng);
    // image of the plane under x ↦ g·x: ⟨n, g⁻¹x⟩ = c is again affine
    Eigen::Vector3d m = n;
    m(0) = n(0) + n(2) / 2 * g.v()(1);
    m(1) = n(1) - n(2) / 2 * g.v()(0);
    const Hyperplane moved = Hyperplane::through(m / m.norm(), compose(g, anchor));
    CHECK(moved.contains(compose(g, anchor), 1e-12));
    CHECK(dist_point_to_plane(compose(g, q), moved) ==
          doctest::Approx(dist_point_to_plane(q, plane)).epsilon(1e-9));
    // δ_σ maps {⟨n,x⟩ = c} to {⟨(n_v/σ, n_t/σ²), x⟩ = c}
    const double sigma = 1.7;
    Eigen::Vector3d ns(n(0) / sigma, n(1) / sigma, n(2) / (sigma * sigma));
    const Hyperplane scaled = Hyperplane::through(ns / ns.norm(), dilate(sigma, anchor));
    CHECK(dist_point_to_plane(dilate(sigma, q), scaled) ==
          doctest::Approx(sigma * dist_point_to_plane(q, plane)).epsilon(1e-9));
  }
}

TEST_CASE("plane lattice is a δ-net of the patch") {
  const double delta = 0.05;
  std::mt19937_64 rng(34);
  for (int trial = 0; trial < 6; ++trial) {
    const Point p = testutil::random_point(1, rng, 0.3);
    const Hyperplane plane = trial % 2 == 0 ? Hyperplane::vertical(p, Frame(testutil::random_unit(2, rng)), 0.5)
                                            : Hyperplane::through(Eigen::Vector3d(testutil::random_unit(3, rng)), p, 0.5);
    const double s = 0.5;
    const std::vector<Point> nodes = plane_lattice(plane, p, s, delta);
    REQUIRE(nodes.size() > 50);
    for (const Point& x : nodes) {
      CHECK(plane.contains(x, 1e-9));
      CHECK(distance(x, p) < s);
    }
    // random points of P ∩ B(p, s): a node within 1.5δ away from the rim, 2.5δ anywhere
    Eigen::Vector3d e1 = plane.normal().unitOrthogonal();
    Eigen::Vector3d e2 = Eigen::Vector3d(plane.normal()).cross(e1);
    std::uniform_real_distribution<double> u(-1, 1);
    int tested = 0;
    double inner = 0, all = 0;
    while (tested < 300) {
      const Point w = Point::from_packed(Eigen::VectorXd(p.packed() + 0.6 * u(rng) * e1 + 0.6 * u(rng) * e2));
      const double dw = distance(w, p);
      if (dw >= s) continue;
      ++tested;
      double d = 1e300;
      for (const Point& x : nodes) d = std::min(d, distance(w, x));
      all = std::max(all, d);
      if (dw < 0.8 * s) inner = std::max(inner, d);
    }
    CHECK(inner < 1.5 * delta);
    CHECK(all < 2.5 * delta);
  }
}

TEST_CASE("fit_plane sups against brute force") {
  const IndexedCloud cloud = graph_cloud(0.08, 3);
  const Point p = cloud.cloud().point(cloud.size() / 2);
  const double s = 0.6;
  std::mt19937_64 rng(35);
  for (int trial = 0; trial < 4; ++trial) {
    Eigen::Vector3d n = testutil::random_unit(3, rng);
    n(2) *= 0.2;
    const Hyperplane plane = Hyperplane::through(n / n.norm(), p, s);
    const PlaneFit f = fit_plane(cloud, p, s, plane);
    double a = 0;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      const Point q = cloud.cloud().point(i);
      if (distance(q, p) < s) a = std::max(a, dist_point_to_plane(q, plane));
    }
    double b = 0;
    for (const Point& x : plane_lattice(plane, p, s, cloud.resolution())) {
      double d = 1e300;
      for (std::size_t i = 0; i < cloud.size(); ++i) d = std::min(d, distance(x, cloud.cloud().point(i)));
      b = std::max(b, d);
    }
    CHECK(f.first_sup == a);
    CHECK(f.second_sup == b);
    CHECK_FALSE(f.aborted);
    const PlaneFit cut = fit_plane(cloud, p, s, plane, 0.5 * (a + b));
    CHECK(cut.aborted);
    CHECK(cut.total() >= 0.5 * (a + b));
  }
}

TEST_CASE("plane net: value at most 2δ/s") {
  const double delta = 0.04;
  const Frame f(Eigen::Vector2d(0.6, 0.8));
  const ParamBox box = ParamBox::centered(H1, 1.2, 0.4);
  const IndexedCloud cloud(sample_graph(GraphSpec(f, 0.5, [](const Eigen::VectorXd&) { return 0.0; }, box), box, delta));
  const auto t0 = std::chrono::steady_clock::now();
  for (double s : {0.25, 0.5, 1.0}) {
    const Point p = cloud.cloud().point(cloud.index().nearest(Eigen::Vector3d(0, 0, 0.05)).index);
    const BetaValue b = bilateral_beta(cloud, p, s, PlaneFamily::vertical, BetaBudget{});
    MESSAGE("s=" << s << " beta=" << b.value << " bound=" << 2 * delta / s << " fits=" << b.evaluations);
    CHECK(b.value <= 2 * delta / s);
    CHECK(b.grid_error == doctest::Approx(cloud.resolution() / s));
    CHECK(b.plane.kind() == PlaneFamily::vertical);
    const BetaValue a = bilateral_beta(cloud, p, s, PlaneFamily::affine, BetaBudget{});
    MESSAGE("affine beta=" << a.value << " fits=" << a.evaluations);
    CHECK(a.value <= 2 * delta / s);
  }
  MESSAGE("plane net betas took " << seconds_since(t0) << " s");
}

TEST_CASE("two parallel planes") {
  const double delta = 0.05;
  for (double h : {0.02, 0.05, 0.1}) {
    const IndexedCloud cloud = parallel_planes(h, delta);
    const BetaValue b = bilateral_beta(cloud, Point::identity(H1), 1.0, PlaneFamily::vertical, BetaBudget{});
    MESSAGE("h=" << h << " beta=" << b.value);
    CHECK(b.value >= h - delta);
    CHECK(b.value <= 2 * h + 2 * delta);
    // oracle: the mid-plane fit, up to the lattice offset
    const PlaneFit mid =
        fit_plane(cloud, Point::identity(H1), 1.0, Hyperplane::vertical(Point::identity(H1), Frame::axis(H1, 0)));
    CHECK(b.value <= mid.total() + b.grid_error);
  }
}

TEST_CASE("left translation and dilation invariance") {
  const IndexedCloud cloud = graph_cloud(0.06, 4);
  std::mt19937_64 rng(36);
  const Point g = testutil::random_point(1, rng);
  const IndexedCloud moved(left_translate(g, cloud.cloud()));
  const IndexedCloud scaled(dilate(2.0, cloud.cloud()));
  for (int trial = 0; trial < 3; ++trial) {
    const Point p = cloud.cloud().point((cloud.size() / 4) * static_cast<std::size_t>(trial + 1));
    for (PlaneFamily fam : {PlaneFamily::vertical, PlaneFamily::affine}) {
      const BetaValue b = bilateral_beta(cloud, p, 0.5, fam, BetaBudget{});
      const BetaValue bm = bilateral_beta(moved, compose(g, p), 0.5, fam, BetaBudget{});
      const BetaValue bs = bilateral_beta(scaled, dilate(2.0, p), 1.0, fam, BetaBudget{});
      CHECK(std::abs(b.value - bm.value) <= 1e-9);
      CHECK(std::abs(b.value - bs.value) <= 1e-9);
    }
  }
}

TEST_CASE("budget monotonicity and doubling") {
  const IndexedCloud cloud = graph_cloud(0.06, 5);
  const Point p = cloud.cloud().point(cloud.size() / 3);
  for (PlaneFamily fam : {PlaneFamily::vertical, PlaneFamily::affine}) {
    double last = 1e300;
    for (int evals : {0, 5, 10, 20, 40, 80}) {
      BetaBudget b;
      b.refine_evals = evals;
      const double v = bilateral_beta(cloud, p, 0.5, fam, b).value;
      CHECK(v <= last);
      last = v;
    }
    last = 1e300;
    for (int starts : {0, 1, 2, 4}) {
      BetaBudget b;
      b.refine_starts = starts;
      const double v = bilateral_beta(cloud, p, 0.5, fam, b).value;
      CHECK(v <= last);
      last = v;
    }
    // s′ ≤ s ≤ 2s′; with the s-argmin plane offered, the bound is exact
    for (double s2 : {0.35, 0.4, 0.5}) {
      const BetaValue big = bilateral_beta(cloud, p, 2 * s2 * 0.9, fam, BetaBudget{});
      const BetaValue small = bilateral_beta(cloud, p, s2, fam, BetaBudget{}, {big.plane});
      CHECK(small.value <= 2 * big.value * (1 + 1e-12));
      const BetaValue plain = bilateral_beta(cloud, p, s2, fam, BetaBudget{});
      CHECK(plain.value <= 2 * big.value + plain.grid_error);
    }
  }
}

TEST_CASE("L-shaped crease") {
  // {(0, y, t) : y ≥ 0} ∪ {(x, 0, t) : x ≥ 0}
  const double delta = 0.04;
  const auto all = [](double, double, double) { return true; };
  const PointCloud a = grid_cloud(delta, all, [](double u, double t) { return Eigen::Vector3d(0, u, t); }, 1.2, 0.4, 0);
  const PointCloud b =
      grid_cloud(delta, all, [](double u, double t) { return Eigen::Vector3d(u, 0, t); }, 1.2, 0.4, delta);
  const IndexedCloud cloud(merge(a, b));
  const double s = 0.4;
  const BetaValue crease = bilateral_beta(cloud, Point::identity(H1), s, PlaneFamily::vertical, BetaBudget{});
  // oracle: the first sup alone over a fine brute-force grid of vertical planes bounds the inf below
  const std::vector<std::size_t> ball = cloud.index().within(Eigen::Vector3d::Zero(), s);
  double lower = 1e300;
  for (int i = 0; i < 720; ++i) {
    const double th = std::numbers::pi * i / 720;
    const Eigen::Vector2d nu(std::cos(th), std::sin(th));
    double lo = 1e300, hi = -1e300;
    for (std::size_t j : ball) {
      const double x = cloud.cloud().column(j).head(2).dot(nu);
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
    lower = std::min(lower, (hi - lo) / 2);
  }
  MESSAGE("crease beta=" << crease.value << " brute lower=" << lower / s);
  CHECK(crease.value >= lower / s - 1e-12);
  CHECK(crease.value > 0.05);

  const Point flat_p = P({0, 0.7}, 0);
  const BetaValue flat = bilateral_beta(cloud, flat_p, 0.25, PlaneFamily::vertical, BetaBudget{});
  MESSAGE("flat beta=" << flat.value);
  CHECK(flat.value <= 2 * delta / 0.25);
}

TEST_CASE("cube β and scale containment") {
  const IndexedCloud cloud = graph_cloud(0.08, 6);
  const CubeTree tree = build_cube_tree(cloud, -3, 2, 1);
  const auto& lvl = tree.level(-3);
  std::mt19937_64 rng(37);
  int checked = 0;
  for (std::size_t id : lvl) {
    const Cube& q = tree.cube(id);
    if (koranyi_norm(cloud.cloud().point(q.center)) > 0.2 || checked >= 4) continue;
    ++checked;
    const Point p = cloud.cloud().point(q.members[rng() % q.members.size()]);
    const BetaValue outer = bilateral_beta(cloud, p, 3 * tree.ball_scale(q), PlaneFamily::vertical, BetaBudget{});
    const BetaValue inner = beta_for_cube(tree, id, PlaneFamily::vertical, BetaBudget{}, {outer.plane});
    CHECK(inner.scale == tree.ball_scale(q));
    CHECK(inner.value <= 3 * outer.value * (1 + 1e-12));
  }
  CHECK(checked > 0);

  const std::vector<std::size_t> ids(lvl.begin(), lvl.begin() + 3);
  const std::vector<BetaValue> prof = beta_profile(tree, ids, PlaneFamily::vertical, BetaBudget{});
  REQUIRE(prof.size() == 3);
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(prof[i].value == beta_for_cube(tree, ids[i], PlaneFamily::vertical, BetaBudget{}).value);
  std::ostringstream out;
  write_beta_csv(out, tree, ids, prof);
  std::string header;
  std::istringstream in(out.str());
  std::getline(in, header);
  CHECK(header == "cube_id,level,center_index,scale,family,beta,plane_params,grid_error");
  std::string row;
  std::getline(in, row);
  CHECK(std::count(row.begin(), row.end(), ',') == 7);
}

TEST_CASE("errors") {
  const IndexedCloud cloud = graph_cloud(0.1, 7);
  CHECK_THROWS_AS(bilateral_beta(cloud, P({50, 0}, 0), 1.0, PlaneFamily::vertical, BetaBudget{}),
                  std::invalid_argument);
  CHECK_THROWS_AS(bilateral_beta(cloud, cloud.cloud().point(0), 0.3, PlaneFamily::vertical, BetaBudget{}),
                  std::invalid_argument);
  BetaBudget bad;
  bad.offset_steps = 1;
  CHECK_THROWS_AS(bilateral_beta(cloud, cloud.cloud().point(0), 1.0, PlaneFamily::vertical, bad),
                  std::invalid_argument);
}
