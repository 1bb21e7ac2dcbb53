#include "hkrect/frames.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

#include "hkrect/optimize.hpp"

namespace hkrect {

namespace {

Eigen::MatrixXd complement_basis(const Eigen::VectorXd& nu) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(nu);
  const Eigen::Index n = nu.size();
  Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
  return Q.rightCols(n - 1);
}

void require_dim(const Frame& f, const Point& p, const char* op) {
  if (f.k() != p.k()) throw DimensionMismatch(std::string(op) + ": frame and point differ in dimension");
}

}  // namespace

Frame::Frame(const Eigen::VectorXd& nu, double tol) {
  if (nu.size() == 0 || nu.size() % 2 != 0) throw DimensionMismatch("Frame: direction must have length 2k");
  if (!nu.allFinite()) throw std::invalid_argument("Frame: non-finite direction");
  const double n = nu.norm();
  if (std::abs(n - 1) > tol) throw std::invalid_argument("Frame: direction is not a unit vector");
  nu_ = nu / n;
  complement_ = complement_basis(nu_);
}

Frame Frame::normalized(const Eigen::VectorXd& direction) {
  const double n = direction.norm();
  if (!(n > 0)) throw std::invalid_argument("Frame: zero direction");
  return Frame(direction / n);
}

Frame Frame::axis(GroupDim dim, int i) {
  if (i < 0 || i >= dim.horizontal()) throw std::out_of_range("Frame::axis: index out of range");
  Eigen::VectorXd e = Eigen::VectorXd::Zero(dim.horizontal());
  e(i) = 1;
  return Frame(e);
}

ConeSpec::ConeSpec(ConeFamily f, double param, Frame fr) : family(f), parameter(param), frame(std::move(fr)) {
  const bool ok = f == ConeFamily::inf_norm ? param > 0 : (param > 0 && param < 1);
  if (!ok || !std::isfinite(param)) throw std::invalid_argument("ConeSpec: parameter outside legal range");
}

Point proj_vertical(const Frame& frame, const Point& p) {
  require_dim(frame, p, "proj_vertical");
  const double a = p.v().dot(frame.nu());
  const Eigen::VectorXd w = p.v() - a * frame.nu();
  return Point(w, p.t() - a * symplectic(p.v(), frame.nu()) / 2);
}

Point proj_line(const Frame& frame, const Point& p) {
  require_dim(frame, p, "proj_line");
  const double a = p.v().dot(frame.nu());
  return Point(Eigen::VectorXd(a * frame.nu()), 0.0);
}

double packed_cone_gauge(const Frame& frame, const Eigen::Ref<const Eigen::VectorXd>& x) {
  const Eigen::Index n = x.size() - 1;
  const auto v = x.head(n);
  const double a = v.dot(frame.nu());
  // |v|² split as a² + |w|² keeps the ratio exactly 1 on L_ν.
  const double w2 = (v - a * frame.nu()).squaredNorm();
  const double r2 = a * a + w2;
  const double t = x(n);
  const double den = std::sqrt(std::sqrt(r2 * r2 + 16 * t * t));
  if (!(den > 0)) throw std::invalid_argument("cone_gauge: undefined at the identity");
  return std::min(1.0, std::abs(a) / den);
}

double cone_gauge(const Frame& frame, const Point& p) {
  require_dim(frame, p, "cone_gauge");
  return packed_cone_gauge(frame, p.packed());
}

double inf_norm(const Point& p) { return std::max(p.v().norm(), 2 * std::sqrt(std::abs(p.t()))); }

double ball_union_ratio(const Frame& frame, const Point& p, double bracket) {
  require_dim(frame, p, "ball_union_ratio");
  const double a = p.v().dot(frame.nu());
  const double w2 = (p.v() - a * frame.nu()).squaredNorm();
  const double b = symplectic(frame.nu(), p.v()) / 2;
  const double t = p.t();
  // ratio⁴ as a function of s
  auto g = [&](double s) {
    const double r2 = w2 + (a - s) * (a - s);
    const double tt = t - s * b;
    const double s2 = s * s;
    return (r2 * r2 + 16 * tt * tt) / (s2 * s2);
  };
  constexpr int scan = 256;
  double best = std::numeric_limits<double>::infinity();
  for (double sign : {1.0, -1.0}) {
    const double h = bracket / scan;
    int arg = 1;
    double low = std::numeric_limits<double>::infinity();
    for (int i = 1; i <= scan; ++i) {
      const double val = g(sign * i * h);
      if (val < low) {
        low = val;
        arg = i;
      }
    }
    const double lo = std::max(arg - 1, 0) * h, hi = std::min(arg + 1, scan) * h;
    const double s = golden_section([&](double u) { return u > 0 ? g(sign * u) : low * 2 + 1; },
                                    std::max(lo, 1e-3 * h), hi, 1e-9 * bracket);
    best = std::min({best, low, g(sign * s)});
  }
  return std::sqrt(std::sqrt(best));
}

bool cone_member(const ConeSpec& spec, const Point& p) {
  require_dim(spec.frame, p, "cone_member");
  if (p.packed().isZero(0)) return false;
  switch (spec.family) {
    case ConeFamily::koranyi:
      return cone_gauge(spec.frame, p) > spec.parameter;
    case ConeFamily::inf_norm: {
      const double vn = inf_norm(proj_vertical(spec.frame, p));
      const double ln = std::abs(p.v().dot(spec.frame.nu()));
      return vn < spec.parameter * ln;
    }
    case ConeFamily::ball_union: {
      const double bracket = koranyi_norm(p) / (1 - spec.parameter);
      return ball_union_ratio(spec.frame, p, bracket) < spec.parameter - 1e-12;
    }
  }
  return false;
}

namespace {

// Point at distance b from (σν, 0) in direction w.
Eigen::VectorXd ball_point(const Frame& f, const Eigen::VectorXd& w, double sigma, double b) {
  const Eigen::Index n = w.size() - 1;
  Eigen::VectorXd q(w.size());
  q.head(n) = sigma * f.nu() + b * w.head(n);
  q(n) = b * b * w(n) + sigma * b * symplectic(f.nu(), w.head(n)) / 2;
  return q;
}

// First radius at which the ball point leaves C_λ; 1 if none below 1.
double first_exit(const Frame& f, const Eigen::VectorXd& w, double sigma, double lambda) {
  constexpr int scan = 128;
  double prev = 0;
  for (int j = 1; j < scan; ++j) {
    const double b = double(j) / scan;
    if (packed_cone_gauge(f, ball_point(f, w, sigma, b)) <= lambda) {
      double lo = prev, hi = b;
      for (int it = 0; it < 60; ++it) {
        const double mid = (lo + hi) / 2;
        if (packed_cone_gauge(f, ball_point(f, w, sigma, mid)) <= lambda)
          hi = mid;
        else
          lo = mid;
      }
      return lo;
    }
    prev = b;
  }
  return 1.0;
}

Eigen::VectorXd to_sphere(Eigen::VectorXd x) {
  const Eigen::Index n = x.size() - 1;
  const double r = packed_norm(x);
  x.head(n) /= r;
  x(n) /= r * r;
  return x;
}

}  // namespace

double cone_inclusion_search(double lambda, const Frame& frame, int samples, std::uint64_t seed) {
  if (!(lambda > 0 && lambda < 1)) throw std::invalid_argument("cone_inclusion_search: λ must lie in (0,1)");
  if (samples < 100) throw std::invalid_argument("cone_inclusion_search: at least 100 samples required");
  std::mt19937_64 rng(seed);
  struct Dir {
    Eigen::VectorXd w;
    double sigma;
    double exit;
  };
  std::vector<Dir> dirs;
  dirs.reserve(samples);
  for (int i = 0; i < samples; ++i) {
    Eigen::VectorXd w = sample_unit_sphere(frame.dim(), rng);
    const double sigma = (i % 2 == 0) ? 1.0 : -1.0;
    const double e = first_exit(frame, w, sigma, lambda);
    dirs.push_back({std::move(w), sigma, e});
  }
  std::sort(dirs.begin(), dirs.end(), [](const Dir& a, const Dir& b) { return a.exit < b.exit; });
  double beta = dirs.front().exit;

  // Polish the worst directions: the sampled minimum overestimates the true one.
  const int polish = std::min<int>(8, static_cast<int>(dirs.size()));
  for (int i = 0; i < polish; ++i) {
    const Dir& d = dirs[i];
    if (d.exit >= 1) break;
    auto obj = [&](const Eigen::VectorXd& xi) { return first_exit(frame, to_sphere(d.w + xi), d.sigma, lambda); };
    const Eigen::VectorXd step = Eigen::VectorXd::Constant(d.w.size(), 0.05);
    const MinimizeResult r = nelder_mead(obj, Eigen::VectorXd::Zero(d.w.size()), step, 300, 1e-14);
    beta = std::min(beta, r.value);
  }
  // Margin for what the polish might still miss.
  beta *= 1 - 1e-3;
  return std::clamp(beta, 1e-12, 1 - 1e-12);
}

Eigen::MatrixXd frame_isometry(const Frame& from, const Frame& to) {
  if (from.k() != to.k()) throw DimensionMismatch("frame_isometry: frames differ in dimension");
  const int k = from.k();
  if (from.nu() == to.nu()) return Eigen::MatrixXd::Identity(2 * k, 2 * k);
  using CVec = Eigen::VectorXcd;
  using CMat = Eigen::MatrixXcd;
  auto as_complex = [k](const Eigen::VectorXd& v) {
    CVec z(k);
    for (int j = 0; j < k; ++j) z(j) = {v(j), v(j + k)};
    return z;
  };
  auto unitary_with_first = [k](const CVec& a) {
    Eigen::HouseholderQR<CMat> qr(a);
    CMat Q = qr.householderQ() * CMat::Identity(k, k);
    Q.col(0) = a;
    return Q;
  };
  const CMat A = unitary_with_first(as_complex(from.nu()));
  const CMat B = unitary_with_first(as_complex(to.nu()));
  const CMat U = B * A.adjoint();
  Eigen::MatrixXd rho(2 * k, 2 * k);
  rho.topLeftCorner(k, k) = U.real();
  rho.topRightCorner(k, k) = -U.imag();
  rho.bottomLeftCorner(k, k) = U.imag();
  rho.bottomRightCorner(k, k) = U.real();
  if (!is_horizontal_isometry(rho, 1e-9)) throw std::runtime_error("frame_isometry: construction failed");
  return rho;
}

}  // namespace hkrect
