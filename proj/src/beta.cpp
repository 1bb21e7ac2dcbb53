#include "hkrect/beta.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "hkrect/optimize.hpp"
#include "hkrect/parallel.hpp"

namespace hkrect {

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();

// ω(a, x) = ⟨g(a), x⟩
void omega_grad(const double* a, int k, double* g) {
  for (int j = 0; j < k; ++j) {
    g[j] = -a[j + k];
    g[j + k] = a[j];
  }
}

double omega(const double* a, const double* b, int k) {
  double w = 0;
  for (int j = 0; j < k; ++j) w += a[j] * b[j + k] - a[j + k] * b[j];
  return w;
}

Eigen::VectorXd unit_normal(const Eigen::VectorXd& n, const char* op) {
  if (n.size() < 3 || n.size() % 2 != 1) throw DimensionMismatch(std::string(op) + ": normal must have length 2k+1");
  if (!n.allFinite()) throw std::invalid_argument(std::string(op) + ": non-finite normal");
  if (std::abs(n.norm() - 1) > 1e-9) throw std::invalid_argument(std::string(op) + ": non-unit normal");
  return n / n.norm();
}

// A plane in ball-normalized coordinates y = δ_{1/s}(p⁻¹x).
struct NPlane {
  Eigen::VectorXd n;
  double c;
};

Hyperplane original_plane(const NPlane& np, const Point& p, double s, PlaneFamily family) {
  const int k = p.k(), h = 2 * k;
  Eigen::VectorXd foot = np.c * np.n;
  foot.head(h) *= s;
  foot(h) *= s * s;
  const Point anchor = compose(p, Point::from_packed(foot));
  if (family == PlaneFamily::vertical) return Hyperplane::vertical(anchor, Frame::normalized(np.n.head(h)), s);
  std::vector<double> g(h);
  omega_grad(p.packed().data(), k, g.data());
  Eigen::VectorXd N(h + 1);
  for (int i = 0; i < h; ++i) N(i) = np.n(i) / s - np.n(h) * g[i] / (2 * s * s);
  N(h) = np.n(h) / (s * s);
  return Hyperplane::through(N / N.norm(), anchor, s);
}

// Lattice on the plane, fixed by (normal, anchor, reference scale). Nodes are
// x = p₀·δ_ref(ζ) with ζ = Σ αᵢ eᵢ bᵢ, αᵢ ∈ Z, where {bᵢ} is an orthonormal
// basis of the plane through 0 in ζ-coordinates. Spacing is δ along
// directions that commute with the plane and δ² against the shear, for
// |ζ_v| up to reach.
struct Lattice {
  int k;
  Eigen::MatrixXd basis;   // (2k+1) × 2k
  Eigen::VectorXd step;
  Eigen::VectorXd hnorm;   // |b_{i,v}|
  Eigen::VectorXd anchor;
  double ref;
};

constexpr double lattice_reach = 2;

Lattice make_lattice(const Hyperplane& P, double delta) {
  const int k = P.k(), h = 2 * k;
  const double ref = P.reference_scale();
  const Eigen::VectorXd& n = P.normal();
  const Eigen::VectorXd& a = P.anchor().packed();
  std::vector<double> g(h);
  omega_grad(a.data(), k, g.data());
  Eigen::VectorXd m(h + 1);
  for (int i = 0; i < h; ++i) m(i) = ref * n(i) + ref * n(h) / 2 * g[i];
  m(h) = ref * ref * n(h);
  m /= m.norm();

  Lattice L{k, Eigen::MatrixXd::Zero(h + 1, h), Eigen::VectorXd(h), Eigen::VectorXd(h), a, ref};
  const double mv = m.head(h).norm(), mt = m(h);
  const double dz = delta / ref;
  if (mv > 1e-12) {
    const Eigen::VectorXd u = m.head(h) / mv;
    const Eigen::MatrixXd C = Frame(u).complement();
    L.basis.topLeftCorner(h, h - 1) = C;
    L.basis.col(h - 1).head(h) = -mt * u;
    L.basis(h, h - 1) = mv;
    double coupling = 0;
    for (int i = 0; i < h - 1; ++i) {
      const double w = std::abs(omega(C.col(i).data(), u.data(), k));
      coupling += w;
      const double K = lattice_reach / 2 * std::abs(mt) * w;
      L.step(i) = K > 0 ? std::min(dz, dz * dz / K) : dz;
    }
    const double K = mv + lattice_reach / 2 * std::abs(mt) * coupling;
    L.step(h - 1) = std::min(dz, dz * dz / K);
  } else {
    L.basis.topRows(h).setIdentity();
    for (int i = 0; i < h; ++i) L.step(i) = std::min(dz, dz * dz / (lattice_reach / 2));
  }
  for (int i = 0; i < h; ++i) L.hnorm(i) = L.basis.col(i).head(h).norm();
  return L;
}

// Index boxes of lattice nodes near B(p, s). A box is summarized by its middle
// node x and a radius bounding d(x, y) for every node y of the box.
class LatticeBoxes {
 public:
  struct Box {
    std::vector<long long> lo, hi;
    Eigen::VectorXd x;
    double dp = 0;      // d(x, p)
    double radius = 0;
    int split = -1;     // −1 for a single node
  };

  LatticeBoxes(const Lattice& L, const double* p, double s) : L_(L), p_(p), s_(s) {
    const int h = 2 * L.k, n = h + 1;
    const double* a = L.anchor.data();
    // ball center in ζ-coordinates
    Eigen::VectorXd o(n);
    for (int i = 0; i < h; ++i) o(i) = (p[i] - a[i]) / L.ref;
    o(h) = (p[h] - a[h] - omega(a, p, L.k) / 2) / (L.ref * L.ref);
    const double rho = s / L.ref;
    const double ov = o.head(h).norm();
    Eigen::VectorXd w = Eigen::VectorXd::Constant(n, rho);
    w(h) = rho * rho / 4 + ov * rho / 2;
    lo_.resize(h);
    hi_.resize(h);
    double count = 1;
    for (int i = 0; i < h; ++i) {
      const double c = o.dot(L.basis.col(i));
      const double r = L.basis.col(i).cwiseAbs().dot(w);
      const double l = std::ceil((c - r) / L.step(i)), u = std::floor((c + r) / L.step(i));
      if (l > u) {
        empty_ = true;
        return;
      }
      lo_[i] = static_cast<long long>(l);
      hi_[i] = static_cast<long long>(u);
      count *= u - l + 1;
    }
    if (count > 1e12) throw std::runtime_error("plane lattice is too fine for this ball");
  }

  bool empty() const { return empty_; }
  Box root() const { return make(lo_, hi_); }
  double scale() const { return s_; }

  Box make(const std::vector<long long>& lo, const std::vector<long long>& hi) const {
    const int k = L_.k, h = 2 * k;
    const double* a = L_.anchor.data();
    const double ref = L_.ref;
    Box b{lo, hi, Eigen::VectorXd(h + 1), 0, 0, -1};
    Eigen::VectorXd zeta = Eigen::VectorXd::Zero(h + 1);
    std::vector<double> half(h);
    for (int i = 0; i < h; ++i) {
      const long long mid = lo[i] + (hi[i] - lo[i]) / 2;
      half[i] = static_cast<double>(std::max(mid - lo[i], hi[i] - mid)) * L_.step(i);
      zeta += (static_cast<double>(mid) * L_.step(i)) * L_.basis.col(i);
    }
    for (int i = 0; i < h; ++i) b.x(i) = a[i] + ref * zeta(i);
    b.x(h) = a[h] + ref * ref * zeta(h) + ref * omega(a, zeta.data(), k) / 2;
    b.dp = raw_distance(b.x.data(), p_, k);
    double Hv = 0, Ht = 0, widest = -1;
    for (int i = 0; i < h; ++i) {
      const double bt = std::abs(L_.basis(h, i) - omega(zeta.data(), L_.basis.col(i).data(), k) / 2);
      Hv += half[i] * L_.hnorm(i);
      Ht += half[i] * bt;
      const double reach = std::max(half[i] * L_.hnorm(i), 2 * std::sqrt(half[i] * bt));
      if (hi[i] > lo[i] && reach > widest) {
        widest = reach;
        b.split = i;
      }
    }
    b.radius = ref * std::sqrt(std::sqrt(Hv * Hv * Hv * Hv + 16 * Ht * Ht));
    return b;
  }

  // Boxes that may still hold nodes of the ball.
  bool reaches_ball(const Box& b) const { return b.dp < s_ + b.radius; }
  bool node_in_ball(const Box& b) const { return b.split < 0 && b.dp < s_; }

  std::pair<Box, Box> halves(const Box& b) const {
    const int i = b.split;
    const long long mid = b.lo[i] + (b.hi[i] - b.lo[i]) / 2;
    std::vector<long long> l2 = b.lo, u2 = b.hi;
    l2[i] = mid + 1;
    u2[i] = mid;
    return {make(b.lo, u2), make(l2, b.hi)};
  }

 private:
  const Lattice& L_;
  const double* p_;
  double s_;
  std::vector<long long> lo_, hi_;
  bool empty_ = false;
};

// Visits every lattice node of B(p, s); visit(x) returns false to stop.
template <typename Visit>
void walk_lattice(const Lattice& L, const double* p, double s, Visit&& visit) {
  const LatticeBoxes boxes(L, p, s);
  if (boxes.empty()) return;
  std::vector<LatticeBoxes::Box> stack{boxes.root()};
  while (!stack.empty()) {
    LatticeBoxes::Box b = std::move(stack.back());
    stack.pop_back();
    if (!boxes.reaches_ball(b)) continue;
    if (b.split < 0) {
      if (boxes.node_in_ball(b) && !visit(b.x)) return;
      continue;
    }
    auto [first, second] = boxes.halves(b);
    stack.push_back(std::move(second));
    stack.push_back(std::move(first));
  }
}

// max over lattice nodes in B(p, s) of the distance to the cloud; a box is
// skipped once some cloud point lies within best − radius of its middle node.
// Stops once bound is reached.
double lattice_sup(const KoranyiIndex& index, const Lattice& L, const double* p, double s, double bound,
                   bool& aborted) {
  aborted = false;
  const LatticeBoxes boxes(L, p, s);
  if (boxes.empty()) return 0;
  double best = 0;
  std::vector<LatticeBoxes::Box> stack{boxes.root()};
  while (!stack.empty()) {
    LatticeBoxes::Box b = std::move(stack.back());
    stack.pop_back();
    if (!boxes.reaches_ball(b)) continue;
    if (b.split < 0) {
      best = std::max(best, index.nearest(b.x.data()).distance);
      if (best >= bound) {
        aborted = true;
        return best;
      }
      continue;
    }
    if (best > b.radius && index.any_within(b.x.data(), best - b.radius)) continue;
    auto [first, second] = boxes.halves(b);
    stack.push_back(std::move(second));
    stack.push_back(std::move(first));
  }
  return best;
}

// The ball B(p, s) ∩ E, in original and normalized coordinates.
struct Ball {
  const IndexedCloud& cloud;
  Point p;
  double s;
  std::vector<std::size_t> members;
  Eigen::MatrixXd Y;  // normalized, by decreasing norm so early exits trigger sooner
};

Ball make_ball(const IndexedCloud& cloud, const Point& p, double s) {
  if (p.k() != cloud.k()) throw DimensionMismatch("bilateral_beta: point and cloud differ in dimension");
  if (!(s > 0) || !std::isfinite(s)) throw std::invalid_argument("bilateral_beta: scale must be positive");
  if (s < 4 * cloud.resolution())
    throw std::invalid_argument("bilateral_beta: scale is below 4x the cloud resolution");
  Ball b{cloud, p, s, cloud.index().within(p.packed(), s), {}};
  if (b.members.empty()) throw std::invalid_argument("bilateral_beta: empty ball");
  const int k = p.k(), h = 2 * k;
  const Point pinv = invert(p);
  std::vector<std::pair<double, Eigen::VectorXd>> ys;
  ys.reserve(b.members.size());
  for (std::size_t i : b.members) {
    Eigen::VectorXd y = compose(pinv, cloud.cloud().point(i)).packed();
    y.head(h) /= s;
    y(h) /= s * s;
    ys.emplace_back(packed_norm(y), std::move(y));
  }
  std::stable_sort(ys.begin(), ys.end(), [](const auto& x, const auto& y) { return x.first > y.first; });
  b.Y.resize(h + 1, static_cast<Eigen::Index>(ys.size()));
  for (std::size_t j = 0; j < ys.size(); ++j) b.Y.col(static_cast<Eigen::Index>(j)) = ys[j].second;
  return b;
}

double first_sup(const Ball& b, const Hyperplane& P) {
  const auto& coords = b.cloud.cloud().coords();
  double best = 0;
  for (std::size_t i : b.members)
    best = std::max(best, plane_distance(coords.col(static_cast<Eigen::Index>(i)).data(), P.normal().data(),
                                         P.offset(), P.k()));
  return best;
}

PlaneFit fit(const Ball& b, const Hyperplane& P, double abort_at) {
  PlaneFit f;
  f.first_sup = first_sup(b, P);
  if (f.first_sup >= abort_at) {
    f.aborted = true;
    return f;
  }
  const Lattice L = make_lattice(P, b.cloud.resolution());
  f.second_sup = lattice_sup(b.cloud.index(), L, b.p.packed().data(), b.s, abort_at - f.first_sup, f.aborted);
  return f;
}

// Normalized first sup with early exit at bound.
double normalized_first_sup(const Eigen::MatrixXd& Y, const NPlane& np, double bound) {
  const int k = static_cast<int>(Y.rows() / 2);
  double best = 0;
  for (Eigen::Index j = 0; j < Y.cols(); ++j) {
    best = std::max(best, plane_distance(Y.col(j).data(), np.n.data(), np.c, k));
    if (best >= bound) break;
  }
  return best;
}

struct Candidate {
  NPlane np;
  double first;  // normalized first sup
};

std::vector<Eigen::VectorXd> sphere_draws(int dim, int count, std::uint64_t seed, bool upper) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Eigen::VectorXd> out;
  out.reserve(static_cast<std::size_t>(count));
  while (static_cast<int>(out.size()) < count) {
    Eigen::VectorXd x(dim);
    for (int i = 0; i < dim; ++i) x(i) = g(rng);
    const double n = x.norm();
    if (!(n > 1e-12)) continue;
    x /= n;
    if (upper && x(dim - 1) < 0) x = -x;
    out.push_back(x);
  }
  return out;
}

// Evenly spaced in [−m, m]; 0 is always present, since planes through the centre (a point of E) come first.
std::vector<double> offsets(int steps, double m) {
  std::vector<double> c;
  for (int j = 0; j < steps; ++j) c.push_back(m * (-1 + 2.0 * j / (steps - 1)));
  if (steps % 2 == 0) c.insert(c.begin() + steps / 2, 0.0);
  return c;
}

std::vector<Candidate> vertical_grid(const Eigen::MatrixXd& Y, const BetaBudget& budget) {
  const int h = static_cast<int>(Y.rows()) - 1;
  std::vector<Eigen::VectorXd> dirs;
  if (h == 2) {
    for (int i = 0; i < budget.angle_steps; ++i) {
      const double th = std::numbers::pi * i / budget.angle_steps;
      dirs.push_back(Eigen::Vector2d(std::cos(th), std::sin(th)));
    }
  } else {
    dirs = sphere_draws(h, budget.directions, budget.seed, false);
  }
  std::vector<Candidate> out;
  out.reserve(dirs.size() * static_cast<std::size_t>(budget.offset_steps));
  for (const Eigen::VectorXd& nu : dirs) {
    const Eigen::VectorXd proj = Y.topRows(h).transpose() * nu;
    const double lo = proj.minCoeff(), hi = proj.maxCoeff();
    Eigen::VectorXd n = Eigen::VectorXd::Zero(h + 1);
    n.head(h) = nu;
    for (double c : offsets(budget.offset_steps, 1)) out.push_back({{n, c}, std::max(hi - c, c - lo)});
  }
  return out;
}

void affine_grid(const Eigen::MatrixXd& Y, const BetaBudget& budget, double bound, std::vector<Candidate>& out) {
  const int h = static_cast<int>(Y.rows()) - 1;
  std::vector<Eigen::VectorXd> normals;
  if (h == 2) {
    for (int i = 0; i < budget.polar_steps; ++i) {
      const double phi = std::numbers::pi / 2 * i / (budget.polar_steps - 1);
      for (int j = 0; j < (i == 0 ? 1 : budget.azimuth_steps); ++j) {
        const double psi = 2 * std::numbers::pi * j / budget.azimuth_steps;
        normals.push_back(Eigen::Vector3d(std::sin(phi) * std::cos(psi), std::sin(phi) * std::sin(psi), std::cos(phi)));
      }
    }
  } else {
    normals = sphere_draws(h + 1, budget.directions, budget.seed + 1, true);
  }
  for (const Eigen::VectorXd& n : normals) {
    const double cmax = n.head(h).norm() + std::abs(n(h)) / 4;
    for (double c : offsets(budget.affine_offset_steps, cmax)) {
      const NPlane np{n, c};
      const double a = normalized_first_sup(Y, np, bound);
      if (a < bound) out.push_back({np, a});
    }
  }
}

// Tangent chart around a unit normal: n(ξ) = normalize(n₀ + T ξ).
Eigen::MatrixXd tangent(const Eigen::VectorXd& n0) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(n0);
  const Eigen::Index m = n0.size();
  const Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(m, m);
  return Q.rightCols(m - 1);
}

void check_budget(const BetaBudget& b) {
  if (b.angle_steps < 1 || b.offset_steps < 2 || b.polar_steps < 2 || b.azimuth_steps < 1 ||
      b.affine_offset_steps < 2 || b.directions < 1 || b.screen < 1 || b.refine_starts < 0 || b.refine_evals < 0)
    throw std::invalid_argument("BetaBudget: grid sizes out of range");
}

}  // namespace

std::string to_string(PlaneFamily f) { return f == PlaneFamily::affine ? "affine" : "vertical"; }

PlaneFamily parse_family(const std::string& s) {
  if (s == "affine") return PlaneFamily::affine;
  if (s == "vertical") return PlaneFamily::vertical;
  throw std::invalid_argument("unknown plane family '" + s + "'");
}

Hyperplane::Hyperplane(PlaneFamily kind, Eigen::VectorXd normal, double offset, Point anchor, double ref)
    : kind_(kind), normal_(std::move(normal)), offset_(offset), anchor_(std::move(anchor)), reference_scale_(ref) {
  if (!(ref > 0) || !std::isfinite(ref)) throw std::invalid_argument("Hyperplane: reference scale must be positive");
  if (normal_.size() != anchor_.packed().size()) throw DimensionMismatch("Hyperplane: normal and anchor differ");
}

Hyperplane Hyperplane::vertical(const Point& base, const Frame& frame, double ref) {
  if (base.k() != frame.k()) throw DimensionMismatch("Hyperplane::vertical: base and frame differ in dimension");
  Eigen::VectorXd n = Eigen::VectorXd::Zero(base.packed().size());
  n.head(2 * base.k()) = frame.nu();
  return Hyperplane(PlaneFamily::vertical, n, base.v().dot(frame.nu()), base, ref);
}

Hyperplane Hyperplane::affine(const Eigen::VectorXd& normal, double offset, double ref) {
  const Eigen::VectorXd n = unit_normal(normal, "Hyperplane::affine");
  if (!std::isfinite(offset)) throw std::invalid_argument("Hyperplane::affine: non-finite offset");
  return Hyperplane(PlaneFamily::affine, n, offset, Point::from_packed(Eigen::VectorXd(offset * n)), ref);
}

Hyperplane Hyperplane::through(const Eigen::VectorXd& normal, const Point& anchor, double ref) {
  const Eigen::VectorXd n = unit_normal(normal, "Hyperplane::through");
  return Hyperplane(PlaneFamily::affine, n, n.dot(anchor.packed()), anchor, ref);
}

Frame Hyperplane::frame() const {
  if (kind_ != PlaneFamily::vertical) throw std::logic_error("Hyperplane::frame: plane is not vertical");
  return Frame(normal_.head(normal_.size() - 1));
}

bool Hyperplane::contains(const Point& q, double tol) const {
  return std::abs(normal_.dot(q.packed()) - offset_) <= tol * (1 + std::abs(offset_));
}

std::string Hyperplane::describe() const {
  std::ostringstream o;
  auto vec = [&](const Eigen::VectorXd& x) {
    for (Eigen::Index i = 0; i < x.size(); ++i) o << (i ? " " : "") << format_double(x(i));
  };
  o << to_string(kind_) << ";n=";
  vec(normal_);
  o << ";c=" << format_double(offset_) << ";p0=";
  vec(anchor_.packed());
  o << ";ref=" << format_double(reference_scale_);
  return o.str();
}

double plane_distance(const double* q, const double* n, double c, int k) {
  const int h = 2 * k;
  const double nt = n[h];
  double M2 = 0, dot = 0;
  for (int j = 0; j < k; ++j) {
    const double m1 = n[j] - nt / 2 * q[j + k];
    const double m2 = n[j + k] + nt / 2 * q[j];
    M2 += m1 * m1 + m2 * m2;
    dot += n[j] * q[j] + n[j + k] * q[j + k];
  }
  const double r = std::abs(c - dot - nt * q[h]);
  if (r == 0) return 0;
  if (nt == 0) return r / std::sqrt(M2);
  if (M2 == 0) return 2 * std::sqrt(r / std::abs(nt));
  // Minimize |z_v|⁴ + 16 z_t² on ⟨m, z_v⟩ + n_t z_t = r: z_v = y·m/|m| with
  // n_t² y³ + 8M² y − 8M r = 0, convex and increasing in y > 0.
  const double M = std::sqrt(M2), nt2 = nt * nt;
  double y = std::min(r / M, std::cbrt(8 * M * r / nt2));
  for (int it = 0; it < 100; ++it) {
    const double f = nt2 * y * y * y + 8 * M2 * y - 8 * M * r;
    const double step = f / (3 * nt2 * y * y + 8 * M2);
    y -= step;
    if (!(std::abs(step) > 1e-16 * y)) break;
  }
  const double tau = nt * y * y * y / (8 * M);
  return std::sqrt(std::sqrt(y * y * y * y + 16 * tau * tau));
}

double dist_point_to_plane(const Point& q, const Hyperplane& plane) {
  if (q.k() != plane.k()) throw DimensionMismatch("dist_point_to_plane: point and plane differ in dimension");
  return plane_distance(q.packed().data(), plane.normal().data(), plane.offset(), q.k());
}

PlaneFit fit_plane(const IndexedCloud& cloud, const Point& p, double s, const Hyperplane& plane, double abort_at) {
  if (plane.k() != cloud.k()) throw DimensionMismatch("fit_plane: plane and cloud differ in dimension");
  return fit(make_ball(cloud, p, s), plane, abort_at);
}

std::vector<Point> plane_lattice(const Hyperplane& plane, const Point& p, double s, double resolution) {
  if (!(resolution > 0)) throw std::invalid_argument("plane_lattice: resolution must be positive");
  std::vector<Point> out;
  walk_lattice(make_lattice(plane, resolution), p.packed().data(), s, [&](const Eigen::VectorXd& x) {
    out.push_back(Point::from_packed(x));
    return true;
  });
  return out;
}

BetaValue bilateral_beta(const IndexedCloud& cloud, const Point& p, double s, PlaneFamily family,
                         const BetaBudget& budget, const std::vector<Hyperplane>& extra) {
  check_budget(budget);
  const Ball ball = make_ball(cloud, p, s);
  const int k = p.k(), h = 2 * k;
  int evaluations = 0;

  // Best full fit so far; ties keep the earlier plane.
  std::optional<Hyperplane> best_plane;
  PlaneFit best_fit;
  double best = inf;
  auto consider = [&](const Hyperplane& P, double bound) {
    ++evaluations;
    const PlaneFit f = fit(ball, P, bound);
    if (!f.aborted && f.total() < best) {
      best = f.total();
      best_fit = f;
      best_plane = P;
    }
    return f;
  };

  for (const Hyperplane& P : extra) {
    if (P.k() != k) throw DimensionMismatch("bilateral_beta: extra plane differs in dimension");
    if (family == PlaneFamily::vertical && P.kind() != PlaneFamily::vertical) continue;
    consider(P, best);
  }

  struct Start {
    NPlane np;
    double value;
    PlaneFamily chart;
  };
  std::vector<Start> starts[2];
  auto by_first = [](const Candidate& a, const Candidate& b) { return a.first < b.first; };
  // Full fits for the `screen` most promising grid planes.
  auto screen = [&](std::vector<Candidate>& cands, PlaneFamily chart) {
    std::stable_sort(cands.begin(), cands.end(), by_first);
    auto& out = starts[chart == PlaneFamily::affine];
    for (std::size_t i = 0; i < cands.size() && static_cast<int>(i) < budget.screen; ++i) {
      if (cands[i].first * s >= best) break;
      const PlaneFit f = consider(original_plane(cands[i].np, p, s, chart), best);
      if (!f.aborted) out.push_back({cands[i].np, f.total(), chart});
    }
    std::stable_sort(out.begin(), out.end(), [](const Start& a, const Start& b) { return a.value < b.value; });
  };

  std::vector<Candidate> vgrid = vertical_grid(ball.Y, budget);
  screen(vgrid, PlaneFamily::vertical);
  if (family == PlaneFamily::affine) {
    std::vector<Candidate> agrid;
    affine_grid(ball.Y, budget, best / s, agrid);
    screen(agrid, PlaneFamily::affine);
    // vertical starts also seed the affine chart
    for (const Start& st : starts[0]) starts[1].push_back({st.np, st.value, PlaneFamily::affine});
    std::stable_sort(starts[1].begin(), starts[1].end(),
                     [](const Start& a, const Start& b) { return a.value < b.value; });
  }

  // Local refinement in a tangent chart around each start. A run aborts fits
  // against its own best only, so runs never influence each other and a
  // larger budget only adds fits.
  auto refine = [&](const Start& st) {
    const bool vertical = st.chart == PlaneFamily::vertical;
    const Eigen::VectorXd n0 = vertical ? Eigen::VectorXd(st.np.n.head(h)) : st.np.n;
    const Eigen::MatrixXd T = tangent(n0);
    const Eigen::Index dof = T.cols();
    double local = st.value;
    auto objective = [&](const Eigen::VectorXd& xi) {
      Eigen::VectorXd n = n0 + T * xi.head(dof);
      n /= n.norm();
      NPlane np{Eigen::VectorXd::Zero(h + 1), st.np.c + xi(dof)};
      if (vertical) np.n.head(h) = n;
      else np.n = n;
      const PlaneFit f = consider(original_plane(np, p, s, st.chart), local);
      if (!f.aborted) local = std::min(local, f.total());
      return f.total() / s;
    };
    Eigen::VectorXd step(dof + 1);
    const double angle = h != 2 ? 0.1 : vertical ? std::numbers::pi / budget.angle_steps
                                                 : std::numbers::pi / 2 / (budget.polar_steps - 1);
    step.head(dof).setConstant(angle);
    step(dof) = 2.0 / ((vertical ? budget.offset_steps : budget.affine_offset_steps) - 1);
    nelder_mead(objective, Eigen::VectorXd::Zero(dof + 1), step, budget.refine_evals);
  };
  if (budget.refine_evals > 0)
    for (const auto& pool : starts)
      for (int r = 0; r < budget.refine_starts && r < static_cast<int>(pool.size()); ++r)
        refine(pool[static_cast<std::size_t>(r)]);

  if (!best_plane) throw std::logic_error("bilateral_beta: no plane was fitted");
  return BetaValue{best / s,    best_fit.first_sup, best_fit.second_sup,     *best_plane, p,
                   s,           family,             cloud.resolution() / s, evaluations};
}

BetaValue beta_for_cube(const CubeTree& tree, std::size_t cube_id, PlaneFamily family, const BetaBudget& budget,
                        const std::vector<Hyperplane>& extra) {
  const Cube& q = tree.cube(cube_id);
  return bilateral_beta(tree.cloud(), tree.cloud().cloud().point(q.center), tree.ball_scale(q), family, budget, extra);
}

std::vector<BetaValue> beta_profile(const CubeTree& tree, const std::vector<std::size_t>& cube_ids,
                                    PlaneFamily family, const BetaBudget& budget) {
  std::vector<std::optional<BetaValue>> slots(cube_ids.size());
  parallel_for(cube_ids.size(), [&](std::size_t i) { slots[i] = beta_for_cube(tree, cube_ids[i], family, budget); });
  std::vector<BetaValue> out;
  out.reserve(slots.size());
  for (auto& v : slots) out.push_back(std::move(*v));
  return out;
}

void write_beta_csv(std::ostream& out, const CubeTree& tree, const std::vector<std::size_t>& cube_ids,
                    const std::vector<BetaValue>& values) {
  if (cube_ids.size() != values.size()) throw std::invalid_argument("write_beta_csv: ids and values differ in length");
  out << "cube_id,level,center_index,scale,family,beta,plane_params,grid_error\n";
  for (std::size_t i = 0; i < values.size(); ++i) {
    const Cube& q = tree.cube(cube_ids[i]);
    const BetaValue& b = values[i];
    out << q.id << ',' << q.level << ',' << q.center << ',' << format_double(b.scale) << ',' << to_string(b.family)
        << ',' << format_double(b.value) << ',' << b.plane.describe() << ',' << format_double(b.grid_error) << '\n';
  }
}

}  // namespace hkrect
