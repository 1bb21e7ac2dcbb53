#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "hkrect/frames.hpp"
#include "hkrect/metric_index.hpp"
#include "hkrect/point_cloud.hpp"

namespace hkrect {

// Box in V_ν-coordinates w = (u, τ), u ∈ R^{2k−1}.
struct ParamBox {
  ParamBox(Eigen::VectorXd lower, Eigen::VectorXd upper);
  // u ∈ [−a, a]^{2k−1}, τ ∈ [−b, b]
  static ParamBox centered(GroupDim dim, double a, double b);

  Eigen::VectorXd lower, upper;
  int size() const { return static_cast<int>(lower.size()); }
  Eigen::VectorXd center() const { return (lower + upper) / 2; }
  bool contains(const Eigen::VectorXd& w, double tol = 1e-12) const;
  // Radius of the largest Korányi ball of V_ν about the centre inside the box (k = 1 exact).
  double inner_radius() const;
};

using GraphFunction = std::function<double(const Eigen::VectorXd&)>;

struct GraphSpec {
  GraphSpec(Frame frame, double lambda, GraphFunction phi, ParamBox box);
  Frame frame;
  double lambda;
  GraphFunction phi;
  ParamBox box;
};

// (u, τ) ↦ (B u, τ) ∈ V_ν, with B the frame's basis of ν^⊥.
Point vertical_point(const Frame& frame, const Eigen::VectorXd& w);
// Inverse of vertical_point on V_ν.
Eigen::VectorXd vertical_coords(const Frame& frame, const Point& p);

Point graph_point(const GraphSpec& spec, const Eigen::VectorXd& w);

// φ(w) = Σ a_i exp(−‖c_i⁻¹w‖⁴/σ⁴) with the Korányi-type gauge |Δu|⁴ + 16Δτ².
struct BumpField {
  Eigen::MatrixXd centers;  // one column per bump, in (u, τ)
  Eigen::VectorXd amplitudes;
  double width = 1;
  double operator()(const Eigen::VectorXd& w) const;
};

BumpField random_bumps(const ParamBox& box, int count, double amplitude, double width, std::uint64_t seed);

// Grid with steps δ in u and δ² in τ. The reported resolution is the larger of
// δ and the measured covering radius at cell centres (about 1.42δ on V_ν).
PointCloud sample_graph(const GraphSpec& spec, const ParamBox& box, double delta, std::uint64_t seed = 0);

struct ConeConditionReport {
  double tightest_lambda = 0;
  std::pair<std::size_t, std::size_t> worst_pair{0, 0};
  std::size_t violations = 0;  // unordered pairs with gauge > queried λ
  std::optional<double> queried_lambda;
};

ConeConditionReport cone_condition_check(const PointCloud& cloud, const Frame& frame,
                                         std::optional<double> query = std::nullopt);

struct SynthesizedGraph {
  GraphSpec spec;
  BumpField field;
  int halvings = 0;
  double tightest_lambda = 0;
};

// Random bump field over the box, amplitudes halved until the δ-sample passes the cone test at λ.
SynthesizedGraph synthesize_graph(const Frame& frame, double lambda, const ParamBox& box, int bumps,
                                  double amplitude, double width, double delta, std::uint64_t seed);

class GraphError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Recovered graph map: one entry per point, π_V(p) ↦ ⟨v_p, ν⟩.
class GraphTable {
 public:
  GraphTable(const PointCloud& cloud, const Frame& frame);

  struct Entry {
    Eigen::VectorXd base;  // π_V(p), packed
    double value;
    std::size_t index;
  };
  const std::vector<Entry>& entries() const { return entries_; }
  const Frame& frame() const { return frame_; }
  // Value of the entry whose base is nearest to y ∈ V_ν.
  double lookup(const Point& y) const;

 private:
  Frame frame_;
  std::vector<Entry> entries_;
  KoranyiIndex index_;
};

GraphTable graph_function_recover(const PointCloud& cloud, const Frame& frame);

struct ConditionBWitness {
  Point p1, p2;
  double clearance1 = 0, clearance2 = 0;  // d(cloud, p_i)
  double required = 0;                    // βr/2 − resolution
  bool clear = false;
  bool inside = false;
  bool sign_change = false;
  std::vector<double> h;  // h along the probed path
  bool passed() const { return clear && inside && sign_change; }
};

using Path = std::vector<Point>;

// phi: optional V_ν-coordinate map used for h; defaults to the recovered table.
ConditionBWitness condition_b_witness(const IndexedCloud& cloud, const GraphTable& table, double beta,
                                      std::size_t p_index, double r, const std::vector<Path>& paths = {},
                                      const GraphFunction& phi = nullptr);
ConditionBWitness condition_b_witness(const IndexedCloud& cloud, const Frame& frame, double beta,
                                      const Point& p, double r);

struct AhlforsEstimate {
  double min_ratio = 0;
  double max_ratio = 0;
  double constant = 0;  // max(max ratio, 1/min ratio)
  std::size_t queries = 0;
};

// Weighted mass of cloud ∩ B(p, r) divided by r^{2k+1}, extremes over all (p, r).
// With restrict_radii, radii outside [4·resolution, diameter/4] are skipped.
AhlforsEstimate ahlfors_ratio(const IndexedCloud& cloud, const std::vector<std::size_t>& centers,
                              const std::vector<double>& radii, bool restrict_radii = true);

double ball_mass(const IndexedCloud& cloud, const Eigen::Ref<const Eigen::VectorXd>& p, double r);

}  // namespace hkrect
