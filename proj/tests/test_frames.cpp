#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "hkrect/frames.hpp"
#include "test_util.hpp"

using namespace hkrect;
using testutil::P;

namespace {

Frame e1() { return Frame::axis(GroupDim(1), 0); }

// Dense scan of d(p,(sν,0))/|s| built from the group primitives.
double brute_ball_ratio(const Frame& f, const Point& p, double bracket) {
  double best = 1e300;
  const int n = 20000;
  for (int i = 1; i <= n; ++i) {
    for (double sign : {1.0, -1.0}) {
      const double s = sign * bracket * i / n;
      const Point q(Eigen::VectorXd(s * f.nu()), 0.0);
      best = std::min(best, distance(p, q) / std::abs(s));
    }
  }
  return best;
}

}  // namespace

TEST_CASE("projections: worked example") {
  const Point p = P({1, 1}, 1);
  const Point pv = proj_vertical(e1(), p), pl = proj_line(e1(), p);
  CHECK(pv.v()(0) == 0);
  CHECK(pv.v()(1) == 1);
  CHECK(pv.t() == 1.5);
  CHECK(pl.v()(0) == 1);
  CHECK(pl.v()(1) == 0);
  CHECK(pl.t() == 0);
}

TEST_CASE("projections: splitting, fixed points, dilations") {
  std::mt19937_64 rng(11);
  for (int k : {1, 2, 3}) {
    const Frame f(testutil::random_unit(2 * k, rng));
    for (int i = 0; i < 500; ++i) {
      const Point p = testutil::random_point(k, rng);
      const Point pv = proj_vertical(f, p), pl = proj_line(f, p);
      CHECK(testutil::packed_rel_err(compose(pv, pl), p) < 1e-12);
      CHECK(std::abs(pv.v().dot(f.nu())) < 1e-12);
      CHECK(testutil::packed_rel_err(proj_vertical(f, pv), pv) < 1e-12);
      CHECK(testutil::packed_rel_err(proj_line(f, pl), pl) < 1e-12);
      CHECK(koranyi_norm(pl) <= koranyi_norm(p) * (1 + 1e-12));
      const double s = 0.1 + 0.01 * i;
      CHECK(testutil::packed_rel_err(proj_vertical(f, dilate(s, p)), dilate(s, pv)) < 1e-12);
    }
  }
}

TEST_CASE("cone gauge") {
  const Frame f = e1();
  CHECK(cone_gauge(f, P({3, 0}, 0)) == 1);
  CHECK(cone_gauge(f, P({-0.25, 0}, 0)) == 1);
  CHECK(cone_gauge(f, P({0, 2}, 1)) == 0);
  CHECK(cone_gauge(f, P({1, 1}, 0)) == doctest::Approx(1 / std::pow(4.0, 0.25)).epsilon(1e-15));
  CHECK_THROWS_AS(cone_gauge(f, P({0, 0}, 0)), std::invalid_argument);
  std::mt19937_64 rng(12);
  for (int i = 0; i < 1000; ++i) {
    const Frame g(testutil::random_unit(4, rng));
    const double s = std::normal_distribution<double>(0, 3)(rng);
    CHECK(cone_gauge(g, Point(Eigen::VectorXd(s * g.nu()), 0.0)) == 1);
    const Point p = testutil::random_point(2, rng);
    const double gp = cone_gauge(g, p);
    CHECK(gp < 1);
    CHECK(gp >= 0);
    CHECK(gp == doctest::Approx(koranyi_norm(proj_line(g, p)) / koranyi_norm(p)).epsilon(1e-12));
  }
}

TEST_CASE("cone membership basics") {
  const Frame f = e1();
  for (ConeFamily fam : {ConeFamily::koranyi, ConeFamily::ball_union, ConeFamily::inf_norm}) {
    const ConeSpec spec(fam, 0.5, f);
    CHECK(cone_member(spec, P({2, 0}, 0)));
    CHECK(cone_member(spec, P({-0.1, 0}, 0)));
    CHECK_FALSE(cone_member(spec, P({0, 0}, 0)));
  }
  CHECK_FALSE(cone_member(ConeSpec(ConeFamily::ball_union, 0.5, f), P({0, 1}, 0)));
  CHECK_THROWS_AS(ConeSpec(ConeFamily::koranyi, 1.0, f), std::invalid_argument);
  CHECK_THROWS_AS(ConeSpec(ConeFamily::ball_union, 0.0, f), std::invalid_argument);
  CHECK_NOTHROW(ConeSpec(ConeFamily::inf_norm, 3.0, f));
}

TEST_CASE("ball-union ratio agrees with a dense scan") {
  std::mt19937_64 rng(13);
  const Frame f = e1();
  for (int i = 0; i < 40; ++i) {
    const Point p = testutil::random_point(1, rng);
    const double bracket = koranyi_norm(p) / (1 - 0.7);
    const double fast = ball_union_ratio(f, p, bracket);
    const double slow = brute_ball_ratio(f, p, bracket);
    CHECK(fast <= slow + 1e-9);
    CHECK(fast >= slow - 1e-3);
  }
}

TEST_CASE("cone nesting and dilation invariance") {
  std::mt19937_64 rng(14);
  const Frame f(testutil::random_unit(2, rng));
  for (int i = 0; i < 2000; ++i) {
    const Point p = testutil::random_point(1, rng);
    const double s = std::exp(std::normal_distribution<double>(0, 1)(rng));
    for (ConeFamily fam : {ConeFamily::koranyi, ConeFamily::ball_union, ConeFamily::inf_norm}) {
      const bool small = cone_member(ConeSpec(fam, 0.3, f), p);
      const bool big = cone_member(ConeSpec(fam, 0.6, f), p);
      if (fam == ConeFamily::koranyi) {
        CHECK((!big || small));  // C_0.6 ⊂ C_0.3
      } else {
        CHECK((!small || big));  // increasing in the parameter
      }
      CHECK(cone_member(ConeSpec(fam, 0.45, f), p) == cone_member(ConeSpec(fam, 0.45, f), dilate(s, p)));
    }
  }
}

TEST_CASE("cone inclusion search") {
  const Frame f = e1();
  const double b5 = cone_inclusion_search(0.5, f, 20000, 1);
  CHECK(b5 > 0);
  CHECK(b5 < 1);
  CHECK(cone_inclusion_search(0.7, f, 20000, 1) <= b5);
  CHECK(cone_inclusion_search(0.3, f, 20000, 1) >= b5);
  CHECK(std::abs(cone_inclusion_search(0.5, f, 20000, 2) - b5) <= 0.02);
  CHECK_THROWS_AS(cone_inclusion_search(0.5, f, 99, 1), std::invalid_argument);
  CHECK_THROWS_AS(cone_inclusion_search(1.0, f, 1000, 1), std::invalid_argument);

  // fresh points of D_β̂ on the unit sphere all lie in C_0.5
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> unit(0, 1);
  int bad = 0;
  for (int i = 0; i < 20000; ++i) {
    const Eigen::VectorXd w = sample_unit_sphere(GroupDim(1), rng);
    const double sign = unit(rng) < 0.5 ? -1 : 1;
    const Point center(Eigen::VectorXd(sign * f.nu()), 0.0);
    const Point q = compose(center, dilate(b5 * unit(rng), Point::from_packed(w)));
    if (q.packed().isZero(0)) continue;
    const Point on_sphere = dilate(1 / koranyi_norm(q), q);
    if (!(cone_gauge(f, on_sphere) > 0.5)) ++bad;
  }
  CHECK(bad == 0);
}

TEST_CASE("frame isometry") {
  const Frame a = Frame::axis(GroupDim(1), 1), b = Frame::axis(GroupDim(1), 0);
  const Eigen::MatrixXd rho = frame_isometry(a, b);
  Eigen::Matrix2d expect;
  expect << 0, 1, -1, 0;
  CHECK((rho - expect).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(frame_isometry(a, a) == Eigen::MatrixXd::Identity(2, 2));
  std::mt19937_64 rng(15);
  for (int k : {1, 2, 3}) {
    for (int i = 0; i < 20; ++i) {
      const Frame from(testutil::random_unit(2 * k, rng)), to(testutil::random_unit(2 * k, rng));
      const Eigen::MatrixXd r = frame_isometry(from, to);
      CHECK(is_horizontal_isometry(r, 1e-12));
      CHECK((r * from.nu() - to.nu()).cwiseAbs().maxCoeff() < 1e-12);
      const Point p = testutil::random_point(k, rng);
      const Point ip = horizontal_isometry(r, p);
      CHECK(testutil::packed_rel_err(proj_line(to, ip), horizontal_isometry(r, proj_line(from, p))) < 1e-12);
      CHECK(std::abs(cone_gauge(to, ip) - cone_gauge(from, p)) < 1e-12);
    }
  }
  CHECK_THROWS_AS(frame_isometry(a, Frame::axis(GroupDim(2), 0)), DimensionMismatch);
}

TEST_CASE("frame validation") {
  CHECK_THROWS_AS(Frame(Eigen::Vector2d(1, 1)), std::invalid_argument);
  CHECK_THROWS_AS(Frame(Eigen::Vector3d(1, 0, 0)), DimensionMismatch);
  const Frame f(Eigen::Vector2d(1 + 1e-10, 0));
  CHECK(std::abs(f.nu().norm() - 1) <= 1e-12);
  const Eigen::MatrixXd B = Frame::normalized(Eigen::Vector4d(1, 2, 3, 4)).complement();
  CHECK((B.transpose() * B - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-14);
}
