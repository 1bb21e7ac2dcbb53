#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "hkrect/metric_index.hpp"

namespace hkrect {

constexpr std::size_t no_cube = std::numeric_limits<std::size_t>::max();

struct Cube {
  std::size_t id = 0;
  int level = 0;
  std::size_t parent = no_cube;
  std::vector<std::size_t> children;
  std::size_t center = 0;                // cloud index of p_Q
  std::vector<std::size_t> members;      // ascending cloud indices
  double weight = 0;
};

class CubeTree {
 public:
  // Takes cubes as given; use build_cube_tree for a checked construction.
  CubeTree(IndexedCloud cloud, int j_min, int j_max, std::vector<Cube> cubes, double c0);

  const IndexedCloud& cloud() const { return cloud_; }
  int j_min() const { return j_min_; }
  int j_max() const { return j_max_; }
  double c0() const { return c0_; }
  std::size_t size() const { return cubes_.size(); }
  const std::vector<Cube>& cubes() const { return cubes_; }
  const Cube& cube(std::size_t id) const;
  // Cube ids at level j, in construction order.
  const std::vector<std::size_t>& level(int j) const;
  // Level-j cube containing cloud point i (no_cube if none).
  std::size_t cube_of(int j, std::size_t i) const;

  static double side(int level) { return std::ldexp(1.0, level); }
  double side(const Cube& q) const { return side(q.level); }
  // |Q| = ℓ(Q)^{2k+1}
  double nominal_mass(const Cube& q) const;
  // Scale of the ball B(Q) = B(p_Q, 2C₀ℓ(Q)).
  double ball_scale(const Cube& q) const { return 2 * c0_ * side(q); }
  // Number of levels below q in the tree (0 at j_min).
  int depth(const Cube& q) const { return q.level - j_min_; }

 private:
  IndexedCloud cloud_;
  int j_min_, j_max_;
  std::vector<Cube> cubes_;
  double c0_;
  std::vector<std::vector<std::size_t>> levels_;
  std::vector<std::vector<std::size_t>> labels_;  // per level: point -> cube id
};

CubeTree build_cube_tree(const IndexedCloud& cloud, int j_min, int j_max, std::uint64_t seed);

// Smallest C₀ ≥ 1 for which the diameter bound and the inner-ball condition hold for q.
double cube_constant(const CubeTree& tree, const Cube& q);

struct CubeAxiomReport {
  bool axiom_i = false;
  bool axiom_ii = false;
  bool axiom_iii = false;
  double measured_c0 = 0;
  std::vector<std::string> failures;
  bool passed() const { return axiom_i && axiom_ii && axiom_iii; }
};

CubeAxiomReport verify_cube_axioms(const CubeTree& tree);

double cube_mass_ratio(const CubeTree& tree, std::size_t cube_id);

// One cube per line: `cube <id> <level> <parent_id|-> <center_index> <member_count>`.
void write_cube_dump(std::ostream& out, const CubeTree& tree);

// Smallest and largest usable levels for a cloud: 2^{j_min} ≥ resolution, 2^{j_max} ≥ diameter.
int finest_level(double resolution);
int coarsest_level(double diameter);

}  // namespace hkrect
