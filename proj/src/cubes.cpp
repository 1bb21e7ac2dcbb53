#include "hkrect/cubes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>

#include "hkrect/parallel.hpp"

namespace hkrect {

CubeTree::CubeTree(IndexedCloud cloud, int j_min, int j_max, std::vector<Cube> cubes, double c0)
    : cloud_(std::move(cloud)), j_min_(j_min), j_max_(j_max), cubes_(std::move(cubes)), c0_(c0) {
  if (j_min > j_max) throw std::invalid_argument("CubeTree: inverted level range");
  const std::size_t L = static_cast<std::size_t>(j_max - j_min + 1);
  levels_.assign(L, {});
  labels_.assign(L, std::vector<std::size_t>(cloud_.size(), no_cube));
  for (std::size_t id = 0; id < cubes_.size(); ++id) {
    const Cube& q = cubes_[id];
    if (q.id != id) throw std::invalid_argument("CubeTree: cube ids must match positions");
    if (q.level < j_min || q.level > j_max) throw std::invalid_argument("CubeTree: cube level out of range");
    const std::size_t l = static_cast<std::size_t>(q.level - j_min);
    levels_[l].push_back(id);
    for (std::size_t m : q.members) {
      if (m >= cloud_.size()) throw std::out_of_range("CubeTree: member index out of range");
      // Later cubes overwrite; duplicates are reported by verify_cube_axioms.
      labels_[l][m] = id;
    }
  }
}

const Cube& CubeTree::cube(std::size_t id) const {
  if (id >= cubes_.size()) throw std::out_of_range("CubeTree: unknown cube id " + std::to_string(id));
  return cubes_[id];
}

const std::vector<std::size_t>& CubeTree::level(int j) const {
  if (j < j_min_ || j > j_max_) throw std::out_of_range("CubeTree: level out of range");
  return levels_[static_cast<std::size_t>(j - j_min_)];
}

std::size_t CubeTree::cube_of(int j, std::size_t i) const {
  if (j < j_min_ || j > j_max_) throw std::out_of_range("CubeTree: level out of range");
  return labels_[static_cast<std::size_t>(j - j_min_)].at(i);
}

double CubeTree::nominal_mass(const Cube& q) const { return std::pow(side(q), 2 * cloud_.k() + 1); }

int finest_level(double resolution) { return static_cast<int>(std::ceil(std::log2(resolution))); }
int coarsest_level(double diameter) { return static_cast<int>(std::ceil(std::log2(std::max(diameter, 1e-300)))); }

namespace {

// Extend `net` (already 2^{j+1}-separated) to a maximal 2^j-separated net, visiting points in `order`.
void refine_net(const IndexedCloud& cloud, const std::vector<std::size_t>& order, double radius,
                std::vector<std::size_t>& net) {
  std::vector<char> covered(cloud.size(), 0);
  auto cover = [&](std::size_t c) {
    for (std::size_t i : cloud.index().within(cloud.cloud().column(c), radius)) covered[i] = 1;
  };
  for (std::size_t c : net) cover(c);
  for (std::size_t c : order) {
    if (covered[c]) continue;
    net.push_back(c);
    cover(c);
  }
}

Eigen::MatrixXd net_coords(const PointCloud& cloud, const std::vector<std::size_t>& net) {
  Eigen::MatrixXd c(cloud.coords().rows(), static_cast<Eigen::Index>(net.size()));
  for (std::size_t i = 0; i < net.size(); ++i) c.col(static_cast<Eigen::Index>(i)) = cloud.column(net[i]);
  return c;
}

}  // namespace

CubeTree build_cube_tree(const IndexedCloud& cloud, int j_min, int j_max, std::uint64_t seed) {
  if (cloud.size() == 0) throw std::invalid_argument("build_cube_tree: empty cloud");
  if (j_min > j_max) throw std::invalid_argument("build_cube_tree: inverted level range");
  if (CubeTree::side(j_min) < cloud.resolution() * (1 - 1e-12))
    throw std::invalid_argument("build_cube_tree: 2^j_min is below the cloud resolution");
  if (CubeTree::side(j_max) < estimate_diameter(cloud.cloud()))
    throw std::invalid_argument("build_cube_tree: 2^j_max is below the cloud diameter");

  const std::size_t n = cloud.size();
  const int L = j_max - j_min + 1;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  // nets[l] for level j_min + l; each net is a prefix-extension of the coarser one.
  std::vector<std::vector<std::size_t>> nets(static_cast<std::size_t>(L));
  std::vector<std::size_t> net;
  for (int l = L - 1; l >= 0; --l) {
    refine_net(cloud, order, CubeTree::side(j_min + l), net);
    nets[static_cast<std::size_t>(l)] = net;
  }

  // parent_slot[l][a]: position in nets[l+1] of the nearest coarser net point to nets[l][a]
  std::vector<std::vector<std::size_t>> parent_slot(static_cast<std::size_t>(L));
  // assign[l][i]: position in nets[l] of point i's level cube
  std::vector<std::vector<std::size_t>> assign(static_cast<std::size_t>(L), std::vector<std::size_t>(n));
  {
    const KoranyiIndex finest(net_coords(cloud.cloud(), nets[0]));
    parallel_for(n, [&](std::size_t i) { assign[0][i] = finest.nearest(cloud.cloud().column(i)).index; });
  }
  for (int l = 0; l + 1 < L; ++l) {
    const auto& fine = nets[static_cast<std::size_t>(l)];
    const KoranyiIndex coarse(net_coords(cloud.cloud(), nets[static_cast<std::size_t>(l + 1)]));
    auto& ps = parent_slot[static_cast<std::size_t>(l)];
    ps.resize(fine.size());
    parallel_for(fine.size(), [&](std::size_t a) { ps[a] = coarse.nearest(cloud.cloud().column(fine[a])).index; });
    for (std::size_t i = 0; i < n; ++i) assign[static_cast<std::size_t>(l + 1)][i] = ps[assign[static_cast<std::size_t>(l)][i]];
  }

  // Cube ids: coarsest level first, net order within a level.
  std::vector<std::size_t> first_id(static_cast<std::size_t>(L));
  std::size_t total = 0;
  for (int l = L - 1; l >= 0; --l) {
    first_id[static_cast<std::size_t>(l)] = total;
    total += nets[static_cast<std::size_t>(l)].size();
  }
  std::vector<Cube> cubes(total);
  for (int l = 0; l < L; ++l) {
    const auto& nl = nets[static_cast<std::size_t>(l)];
    for (std::size_t a = 0; a < nl.size(); ++a) {
      Cube& q = cubes[first_id[static_cast<std::size_t>(l)] + a];
      q.id = first_id[static_cast<std::size_t>(l)] + a;
      q.level = j_min + l;
      q.center = nl[a];
      if (l + 1 < L) q.parent = first_id[static_cast<std::size_t>(l + 1)] + parent_slot[static_cast<std::size_t>(l)][a];
    }
    for (std::size_t i = 0; i < n; ++i) {
      Cube& q = cubes[first_id[static_cast<std::size_t>(l)] + assign[static_cast<std::size_t>(l)][i]];
      q.members.push_back(i);
      q.weight += cloud.cloud().weight(i);
    }
  }
  for (const Cube& q : cubes)
    if (q.parent != no_cube) cubes[q.parent].children.push_back(q.id);

  CubeTree provisional(cloud, j_min, j_max, cubes, 1.0);
  std::vector<double> c(total);
  parallel_for(total, [&](std::size_t id) { c[id] = cube_constant(provisional, provisional.cube(id)); });
  const double c0 = std::max(1.0, *std::max_element(c.begin(), c.end()));
  return CubeTree(cloud, j_min, j_max, std::move(cubes), c0);
}

namespace {

struct CubeGeometry {
  double radius;  // max d(p_Q, member)
  double inner;   // largest empty-of-non-members radius around a candidate centre in Q
};

CubeGeometry geometry(const CubeTree& tree, const Cube& q) {
  const PointCloud& cloud = tree.cloud().cloud();
  const int k = cloud.k();
  const double* pq = cloud.column(q.center).data();
  double radius = 0;
  for (std::size_t m : q.members) radius = std::max(radius, raw_distance(cloud.column(m).data(), pq, k));
  // The inner ball only has to be centred on Q. A net point near the boundary of a coarse cube
  // would otherwise set C₀ for the whole tree, so children and grandchildren centres compete too.
  std::vector<std::size_t> candidates{q.center};
  for (std::size_t c : q.children) {
    candidates.push_back(tree.cube(c).center);
    for (std::size_t g : tree.cube(c).children) candidates.push_back(tree.cube(g).center);
  }
  const auto outside = [&](std::size_t i) { return tree.cube_of(q.level, i) != q.id; };
  double inner = 0;
  for (std::size_t c : candidates) {
    if (outside(c)) continue;
    const auto nb = tree.cloud().index().nearest_if(cloud.column(c).data(), outside);
    if (!nb.found()) return {radius, std::numeric_limits<double>::infinity()};
    inner = std::max(inner, nb.distance);
  }
  return {radius, inner};
}

}  // namespace

double cube_constant(const CubeTree& tree, const Cube& q) {
  const CubeGeometry g = geometry(tree, q);
  const double side = tree.side(q);
  return std::max({1.0, 2 * g.radius / side, side / (g.inner + tree.cloud().resolution())});
}

CubeAxiomReport verify_cube_axioms(const CubeTree& tree) {
  CubeAxiomReport rep;
  const std::size_t n = tree.cloud().size();
  const PointCloud& cloud = tree.cloud().cloud();
  auto fail = [&](std::string msg) {
    if (rep.failures.size() < 20) rep.failures.push_back(std::move(msg));
  };

  rep.axiom_i = true;
  for (int j = tree.j_min(); j <= tree.j_max(); ++j) {
    std::vector<int> seen(n, 0);
    double w = 0;
    for (std::size_t id : tree.level(j))
      for (std::size_t m : tree.cube(id).members) {
        ++seen[m];
        w += cloud.weight(m);
      }
    for (std::size_t i = 0; i < n; ++i)
      if (seen[i] != 1) {
        rep.axiom_i = false;
        fail("level " + std::to_string(j) + ": point " + std::to_string(i) + " lies in " + std::to_string(seen[i]) + " cubes");
        break;
      }
    if (std::abs(w - cloud.total_weight()) > 1e-9 * cloud.total_weight()) rep.axiom_i = false;
  }

  rep.axiom_ii = true;
  for (const Cube& q : tree.cubes()) {
    if (q.level == tree.j_max()) continue;
    if (q.parent == no_cube) {
      rep.axiom_ii = false;
      fail("cube " + std::to_string(q.id) + " has no parent");
      continue;
    }
    for (std::size_t m : q.members)
      if (tree.cube_of(q.level + 1, m) != q.parent) {
        rep.axiom_ii = false;
        fail("cube " + std::to_string(q.id) + " is not contained in its parent");
        break;
      }
  }

  rep.axiom_iii = true;
  std::vector<double> constants(tree.size());
  std::vector<char> ok(tree.size(), 1);
  parallel_for(tree.size(), [&](std::size_t id) {
    const Cube& q = tree.cube(id);
    if (q.members.empty() || !std::binary_search(q.members.begin(), q.members.end(), q.center)) {
      ok[id] = 0;
      constants[id] = std::numeric_limits<double>::infinity();
      return;
    }
    const CubeGeometry g = geometry(tree, q);
    const double side = tree.side(q);
    const double limit = tree.c0() * side;
    bool diam_ok = 2 * g.radius <= limit * (1 + 1e-12);
    if (!diam_ok && q.members.size() <= 4000) {
      double diam = 0;
      for (std::size_t a = 0; a < q.members.size(); ++a)
        for (std::size_t b = a + 1; b < q.members.size(); ++b)
          diam = std::max(diam, packed_distance(cloud.column(q.members[a]), cloud.column(q.members[b])));
      diam_ok = diam <= limit * (1 + 1e-12);
    }
    const bool inner_ok = g.inner + tree.cloud().resolution() >= side / tree.c0() * (1 - 1e-12);
    ok[id] = diam_ok && inner_ok;
    constants[id] = std::max({1.0, 2 * g.radius / side, side / (g.inner + tree.cloud().resolution())});
  });
  for (std::size_t id = 0; id < tree.size(); ++id)
    if (!ok[id]) {
      rep.axiom_iii = false;
      fail("cube " + std::to_string(id) + " violates the diameter or inner-ball bound for C0 = " + std::to_string(tree.c0()));
    }
  rep.measured_c0 = constants.empty() ? 1.0 : *std::max_element(constants.begin(), constants.end());
  return rep;
}

double cube_mass_ratio(const CubeTree& tree, std::size_t cube_id) {
  const Cube& q = tree.cube(cube_id);
  return q.weight / tree.nominal_mass(q);
}

void write_cube_dump(std::ostream& out, const CubeTree& tree) {
  for (const Cube& q : tree.cubes()) {
    out << "cube " << q.id << ' ' << q.level << ' ';
    if (q.parent == no_cube)
      out << '-';
    else
      out << q.parent;
    out << ' ' << q.center << ' ' << q.members.size() << '\n';
  }
}

}  // namespace hkrect
