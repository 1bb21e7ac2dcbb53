#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "hkrect/beta.hpp"
#include "hkrect/cubes.hpp"

namespace hkrect {

// A ⊂ E × (0, ∞) given by its indicator, sampled over E ∩ B(center, radius)
// and scales in [s_min, radius) on a geometric grid anchored at the top.
struct CarlesonQuery {
  std::function<bool(const Point&, double)> indicator;
  Point center;
  double radius;
  double s_min;
  double factor = std::pow(2.0, 0.25);
};

struct CarlesonEstimate {
  double value;       // Σ over slices of Δ(log s) · Σ_q w_q χ_A(q, s_mid)
  double normalized;  // value / radius^{2k+1}
  int slices;
};

CarlesonEstimate carleson_integral_estimate(const IndexedCloud& cloud, const CarlesonQuery& query);

struct PackingReport {
  std::vector<std::size_t> roots;
  std::vector<double> ratio;  // ratio[i] belongs to roots[i]
  double gamma_hat = 0;
  std::size_t offending_root = no_cube;  // no_cube when γ̂ = 0
};

// Σ_{Q ⊆ R, Q bad} |Q| / |R| with |Q| = ℓ(Q)^{2k+1}, for every root R
// (all cubes when roots is empty).
PackingReport packing_ratio(const CubeTree& tree, const std::vector<std::size_t>& bad,
                            const std::vector<std::size_t>& roots = {});

// Cubes whose β exceeds eps after subtracting the grid error; ascending ids.
std::vector<std::size_t> bad_cubes(const std::vector<std::size_t>& ids, const std::vector<BetaValue>& betas,
                                   double eps);
std::vector<std::size_t> bad_cube_set(const CubeTree& tree, double eps, PlaneFamily family, const BetaBudget& budget,
                                      const std::vector<std::size_t>& ids = {});

// s⁻¹ max { dist(q, E2) : q ∈ E1 ∩ B(p, s), dist(q, E2) < s }, 0 over the empty set.
double i_functional(const IndexedCloud& e1, const IndexedCloud& e2, const Point& p, double s);

// Sampled constants in f(Q) ≤ c·f(q, s) for s ∈ (4C₀ℓ, 8C₀ℓ] and
// f(q, s) ≤ c·f(Q) for s ∈ [C₀ℓ/2, C₀ℓ), with q ∈ Q.
struct ComparisonReport {
  double upper_constant = 0;  // worst f(Q) / f(q, s), upper window
  double lower_constant = 0;  // worst f(q, s) / f(Q), lower window
  double upper_excess = 0;    // worst f(Q) − 4 f(q, s)
  double lower_excess = 0;    // worst f(q, s) − 4 f(Q)
  int samples = 0;
  bool holds(double slack = 0) const { return upper_excess <= slack && lower_excess <= slack; }
};

using ScaleFunction = std::function<double(const Point&, double)>;

ComparisonReport comparison_condition_check(const CubeTree& tree, const ScaleFunction& f,
                                            const std::vector<std::size_t>& cubes, int per_cube,
                                            std::uint64_t seed);

// Region in which cube balls are trusted to see the whole local geometry.
struct Window {
  Point center;
  double radius;
};

// Cubes with d(p_Q, c) + 2C₀ℓ(Q) ≤ R and 2C₀ℓ(Q) ≥ 4·resolution. Descendants
// of an admissible cube are admissible.
std::vector<std::size_t> admissible_cubes(const CubeTree& tree, const Window& window);

struct CarlesonRow {
  double epsilon;
  PlaneFamily family;
  double gamma_hat;
  std::size_t offending_root;
  std::size_t bad_count;
};

// CSV: epsilon, family, gamma_hat, offending_root, levels, resolution
void write_carleson_csv(std::ostream& out, const std::vector<CarlesonRow>& rows, int j_min, int j_max,
                        double resolution);

}  // namespace hkrect
