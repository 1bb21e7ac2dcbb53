#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace hkrect {

class DimensionMismatch : public std::invalid_argument {
 public:
  explicit DimensionMismatch(const std::string& what) : std::invalid_argument(what) {}
};

class GroupDim {
 public:
  explicit GroupDim(int k) : k_(k) {
    if (k < 1) throw std::invalid_argument("GroupDim: k must be >= 1");
  }
  int k() const { return k_; }
  int horizontal() const { return 2 * k_; }
  int packed() const { return 2 * k_ + 1; }
  friend bool operator==(GroupDim a, GroupDim b) { return a.k_ == b.k_; }
  friend bool operator!=(GroupDim a, GroupDim b) { return a.k_ != b.k_; }

 private:
  int k_;
};

// Packed kernels. A point of H^k is stored as a (2k+1)-vector (v, t); these
// functions work on any Eigen expression with that layout.

template <typename A, typename B>
typename A::Scalar symplectic(const Eigen::MatrixBase<A>& v, const Eigen::MatrixBase<B>& w) {
  if (v.size() != w.size() || v.size() % 2 != 0 || v.size() == 0)
    throw DimensionMismatch("symplectic: vectors must share an even length");
  const Eigen::Index k = v.size() / 2;
  return v.head(k).dot(w.tail(k)) - v.tail(k).dot(w.head(k));
}

// Gradient of x -> ω(a, x).
template <typename A>
Eigen::Matrix<typename A::Scalar, Eigen::Dynamic, 1> symplectic_gradient(
    const Eigen::MatrixBase<A>& a) {
  const Eigen::Index k = a.size() / 2;
  Eigen::Matrix<typename A::Scalar, Eigen::Dynamic, 1> g(a.size());
  g.head(k) = -a.tail(k);
  g.tail(k) = a.head(k);
  return g;
}

// Matrix J with ω(v, w) = vᵀ J w.
template <typename Scalar = double>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> symplectic_matrix(GroupDim dim) {
  const int k = dim.k();
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> J =
      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>::Zero(2 * k, 2 * k);
  J.topRightCorner(k, k).setIdentity();
  J.bottomLeftCorner(k, k) = -Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>::Identity(k, k);
  return J;
}

template <typename X>
typename X::Scalar packed_norm(const Eigen::MatrixBase<X>& x) {
  using std::sqrt;
  const Eigen::Index n = x.size() - 1;
  const auto r2 = x.head(n).squaredNorm();
  const auto t = x(n);
  return sqrt(sqrt(r2 * r2 + 16 * t * t));
}

// d(x, y) = ‖y⁻¹ x‖.
template <typename X, typename Y>
typename X::Scalar packed_distance(const Eigen::MatrixBase<X>& x, const Eigen::MatrixBase<Y>& y) {
  using std::sqrt;
  const Eigen::Index n = x.size() - 1;
  const auto r2 = (x.head(n) - y.head(n)).squaredNorm();
  const auto t = x(n) - y(n) - symplectic(y.head(n), x.head(n)) / 2;
  return sqrt(sqrt(r2 * r2 + 16 * t * t));
}

// Raw-pointer distance for hot loops; n = 2k.
inline double raw_distance(const double* x, const double* y, int k) {
  double r2 = 0, w = 0;
  for (int j = 0; j < k; ++j) {
    const double a = x[j] - y[j], b = x[j + k] - y[j + k];
    r2 += a * a + b * b;
    w += y[j] * x[j + k] - y[j + k] * x[j];
  }
  const double t = x[2 * k] - y[2 * k] - w / 2;
  return std::sqrt(std::sqrt(r2 * r2 + 16 * t * t));
}

template <typename Scalar>
class BasicPoint {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  template <typename D>
  BasicPoint(const Eigen::MatrixBase<D>& v, Scalar t) : x_(v.size() + 1) {
    if (v.size() == 0 || v.size() % 2 != 0)
      throw DimensionMismatch("Point: horizontal part must have even positive length");
    x_.head(v.size()) = v;
    x_(v.size()) = t;
    check_finite();
  }

  static BasicPoint from_packed(Vector x) {
    if (x.size() < 3 || x.size() % 2 != 1)
      throw DimensionMismatch("Point: packed length must be 2k+1");
    BasicPoint p;
    p.x_ = std::move(x);
    p.check_finite();
    return p;
  }

  template <typename D>
  static BasicPoint from_packed(const Eigen::MatrixBase<D>& x) {
    return from_packed(Vector(x));
  }

  static BasicPoint identity(GroupDim dim) { return from_packed(Vector::Zero(dim.packed())); }

  int k() const { return static_cast<int>(x_.size() / 2); }
  GroupDim dim() const { return GroupDim(k()); }
  auto v() const { return x_.head(x_.size() - 1); }
  Scalar t() const { return x_(x_.size() - 1); }
  const Vector& packed() const { return x_; }

 private:
  BasicPoint() = default;
  void check_finite() const {
    if (!x_.allFinite()) throw std::invalid_argument("Point: non-finite coordinate");
  }
  Vector x_;
};

using Point = BasicPoint<double>;

namespace detail {
template <typename Scalar>
void require_same(const BasicPoint<Scalar>& p, const BasicPoint<Scalar>& q, const char* op) {
  if (p.k() != q.k()) throw DimensionMismatch(std::string(op) + ": points of different dimension");
}
}  // namespace detail

template <typename Scalar>
BasicPoint<Scalar> compose(const BasicPoint<Scalar>& p, const BasicPoint<Scalar>& q) {
  detail::require_same(p, q, "compose");
  typename BasicPoint<Scalar>::Vector x = p.packed() + q.packed();
  x(x.size() - 1) += symplectic(p.v(), q.v()) / 2;
  return BasicPoint<Scalar>::from_packed(std::move(x));
}

template <typename Scalar>
BasicPoint<Scalar> invert(const BasicPoint<Scalar>& p) {
  return BasicPoint<Scalar>::from_packed(typename BasicPoint<Scalar>::Vector(-p.packed()));
}

template <typename Scalar>
BasicPoint<Scalar> dilate(Scalar s, const BasicPoint<Scalar>& p) {
  if (!(s > 0)) throw std::invalid_argument("dilate: scale must be positive");
  typename BasicPoint<Scalar>::Vector x = s * p.packed();
  x(x.size() - 1) *= s;
  return BasicPoint<Scalar>::from_packed(std::move(x));
}

template <typename Scalar>
Scalar koranyi_norm(const BasicPoint<Scalar>& p) {
  return packed_norm(p.packed());
}

template <typename Scalar>
Scalar distance(const BasicPoint<Scalar>& p, const BasicPoint<Scalar>& q) {
  detail::require_same(p, q, "distance");
  return packed_distance(p.packed(), q.packed());
}

// True when ρ preserves both the Euclidean product and ω.
template <typename M>
bool is_horizontal_isometry(const Eigen::MatrixBase<M>& rho, double tol = 1e-9) {
  if (rho.rows() != rho.cols() || rho.rows() % 2 != 0 || rho.rows() == 0) return false;
  using Scalar = typename M::Scalar;
  const int k = static_cast<int>(rho.rows() / 2);
  const auto n = rho.rows();
  const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> J = symplectic_matrix<Scalar>(GroupDim(k));
  const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> I =
      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>::Identity(n, n);
  const Scalar e1 = (rho.transpose() * rho - I).cwiseAbs().maxCoeff();
  const Scalar e2 = (rho.transpose() * J * rho - J).cwiseAbs().maxCoeff();
  return e1 <= tol && e2 <= tol;
}

template <typename M, typename Scalar>
BasicPoint<Scalar> horizontal_isometry(const Eigen::MatrixBase<M>& rho, const BasicPoint<Scalar>& p,
                                       double tol = 1e-9) {
  if (rho.rows() != 2 * p.k() || rho.cols() != 2 * p.k())
    throw DimensionMismatch("horizontal_isometry: matrix size does not match point");
  if (!is_horizontal_isometry(rho, tol))
    throw std::invalid_argument("horizontal_isometry: matrix is not orthogonal and symplectic");
  return BasicPoint<Scalar>(rho * p.v(), p.t());
}

}  // namespace hkrect
