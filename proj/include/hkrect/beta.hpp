#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hkrect/cubes.hpp"
#include "hkrect/frames.hpp"
#include "hkrect/metric_index.hpp"

namespace hkrect {

enum class PlaneFamily { affine, vertical };

std::string to_string(PlaneFamily f);
PlaneFamily parse_family(const std::string& s);

// Affine hyperplane {x : ⟨n, x⟩ = c} in packed (v, t) coordinates. The anchor
// (a point of the plane) and reference scale fix the lattice on which the
// second sup of a β-number is sampled, so the same plane always yields the
// same lattice.
class Hyperplane {
 public:
  // p₀·V_ν
  static Hyperplane vertical(const Point& base, const Frame& frame, double reference_scale = 1.0);
  // Anchor defaults to the Euclidean foot point c·n.
  static Hyperplane affine(const Eigen::VectorXd& normal, double offset, double reference_scale = 1.0);
  static Hyperplane through(const Eigen::VectorXd& normal, const Point& anchor, double reference_scale = 1.0);

  PlaneFamily kind() const { return kind_; }
  const Eigen::VectorXd& normal() const { return normal_; }
  double offset() const { return offset_; }
  const Point& anchor() const { return anchor_; }
  double reference_scale() const { return reference_scale_; }
  int k() const { return anchor_.k(); }
  // Horizontal normal of a vertical plane.
  Frame frame() const;
  bool contains(const Point& q, double tol = 1e-12) const;
  std::string describe() const;

 private:
  Hyperplane(PlaneFamily kind, Eigen::VectorXd normal, double offset, Point anchor, double reference_scale);
  PlaneFamily kind_;
  Eigen::VectorXd normal_;
  double offset_;
  Point anchor_;
  double reference_scale_;
};

// inf over w ∈ P of d(q, w), in closed form.
double dist_point_to_plane(const Point& q, const Hyperplane& plane);
// Same on raw packed data; n must be a unit (2k+1)-vector.
double plane_distance(const double* q, const double* n, double c, int k);

struct BetaBudget {
  int angle_steps = 64;         // vertical, k = 1: directions θ ∈ [0, π)
  int offset_steps = 64;        // vertical offsets in [−1, 1] (ball-normalized)
  int polar_steps = 32;         // affine, k = 1: normals on the upper hemisphere
  int azimuth_steps = 32;
  int affine_offset_steps = 32;
  int directions = 256;         // k ≥ 2: quasi-random directions per family
  int screen = 6;               // grid planes whose second sup is evaluated
  int refine_starts = 2;
  int refine_evals = 40;
  std::uint64_t seed = 0;       // draws for k ≥ 2
};

struct BetaValue {
  double value;        // (first_sup + second_sup) / s
  double first_sup;    // max over E ∩ B(p,s) of dist(q, P)
  double second_sup;   // max over the P-lattice ∩ B(p,s) of dist(q, E)
  Hyperplane plane;
  Point center;
  double scale;
  PlaneFamily family;
  double grid_error;   // resolution / s
  int evaluations;     // plane fits spent
};

// Both sups for one fixed plane. Evaluation of the second sup stops once
// first + second reaches abort_at; `aborted` reports whether that happened.
struct PlaneFit {
  double first_sup = 0;
  double second_sup = 0;
  bool aborted = false;
  double total() const { return first_sup + second_sup; }
};
PlaneFit fit_plane(const IndexedCloud& cloud, const Point& p, double s, const Hyperplane& plane,
                   double abort_at = std::numeric_limits<double>::infinity());

// Lattice nodes of `plane` inside B(p, s), in the order the sup visits them (for tests).
std::vector<Point> plane_lattice(const Hyperplane& plane, const Point& p, double s, double resolution);

BetaValue bilateral_beta(const IndexedCloud& cloud, const Point& p, double s, PlaneFamily family,
                         const BetaBudget& budget, const std::vector<Hyperplane>& extra = {});

BetaValue beta_for_cube(const CubeTree& tree, std::size_t cube_id, PlaneFamily family, const BetaBudget& budget,
                        const std::vector<Hyperplane>& extra = {});

// β for many cubes, computed in parallel; result i belongs to cube_ids[i].
std::vector<BetaValue> beta_profile(const CubeTree& tree, const std::vector<std::size_t>& cube_ids,
                                    PlaneFamily family, const BetaBudget& budget);

// CSV: cube_id, level, center_index, scale, family, beta, plane_params, grid_error
void write_beta_csv(std::ostream& out, const CubeTree& tree, const std::vector<std::size_t>& cube_ids,
                    const std::vector<BetaValue>& values);

}  // namespace hkrect
