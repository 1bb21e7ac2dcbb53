#pragma once

#include <cstdint>

#include <Eigen/Dense>

#include "hkrect/hgroup.hpp"

namespace hkrect {

// A horizontal unit direction ν and the splitting H^k = V_ν · L_ν.
class Frame {
 public:
  explicit Frame(const Eigen::VectorXd& nu, double tol = 1e-9);
  static Frame normalized(const Eigen::VectorXd& direction);
  static Frame axis(GroupDim dim, int i);

  const Eigen::VectorXd& nu() const { return nu_; }
  int k() const { return static_cast<int>(nu_.size() / 2); }
  GroupDim dim() const { return GroupDim(k()); }

  // 2k × (2k−1) orthonormal basis of ν^⊥, fixed per frame.
  const Eigen::MatrixXd& complement() const { return complement_; }

 private:
  Eigen::VectorXd nu_;
  Eigen::MatrixXd complement_;
};

enum class ConeFamily { koranyi, ball_union, inf_norm };

struct ConeSpec {
  ConeSpec(ConeFamily family, double parameter, Frame frame);
  ConeFamily family;
  double parameter;
  Frame frame;
};

Point proj_vertical(const Frame& frame, const Point& p);
Point proj_line(const Frame& frame, const Point& p);

// ‖π_L p‖ / ‖p‖ on packed coordinates; exactly 1 on L_ν.
double packed_cone_gauge(const Frame& frame, const Eigen::Ref<const Eigen::VectorXd>& x);
double cone_gauge(const Frame& frame, const Point& p);

// inf over s ≠ 0 of d(p, (sν,0)) / |s|, searched on |s| ≤ bracket.
double ball_union_ratio(const Frame& frame, const Point& p, double bracket);

// max(|v|, 2√|t|)
double inf_norm(const Point& p);

bool cone_member(const ConeSpec& spec, const Point& p);

// Largest β found with D_β(ν) ∩ S ⊂ C_λ(ν) on the sampled sphere.
double cone_inclusion_search(double lambda, const Frame& frame, int samples, std::uint64_t seed);

// Random point of the Korányi unit sphere: a Gaussian draw pushed onto it by δ_{1/‖·‖}.
template <typename Rng>
Eigen::VectorXd sample_unit_sphere(GroupDim dim, Rng& rng);

// Orthogonal, symplectic ρ with ρ ν_from = ν_to.
Eigen::MatrixXd frame_isometry(const Frame& from, const Frame& to);

}  // namespace hkrect

#include <random>

namespace hkrect {

template <typename Rng>
Eigen::VectorXd sample_unit_sphere(GroupDim dim, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::VectorXd x(dim.packed());
  double n = 0;
  do {
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = g(rng);
    n = packed_norm(x);
  } while (!(n > 1e-300));
  x.head(dim.horizontal()) /= n;
  x(dim.horizontal()) /= n * n;
  return x;
}

}  // namespace hkrect
