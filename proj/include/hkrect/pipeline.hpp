#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "hkrect/carleson.hpp"
#include "hkrect/graphs.hpp"

namespace hkrect {

// One intrinsic Lipschitz graph piece, sampled over `region` and moved by `offset`.
struct GraphPiece {
  GraphSpec spec;
  ParamBox region;
  Point offset;
};

// Junk: a translated vertical plane patch, thinned to a fraction of its points.
struct Contamination {
  Frame frame;
  ParamBox region;
  Point offset;
  double keep = 1.0;  // in (0, 1]
};

struct BPiLGSpec {
  double lambda = 0.5;  // (0, 1)
  double theta = 0.1;   // (0, 1]
  std::vector<GraphPiece> pieces;
  std::vector<Contamination> junk;
  int audit_samples = 100;
  void validate() const;
};

struct BPiLGAudit {
  double min_ratio = 0;  // worst best-piece mass / r^{2k+1}
  std::size_t worst_center = 0;
  double worst_radius = 0;
  int samples = 0;
  bool passed = false;
};

struct BPiLGSet {
  PointCloud cloud;
  std::vector<int> piece;  // piece index per point, −1 for junk
  BPiLGAudit audit;
};

class AuditFailure : public std::runtime_error {
 public:
  AuditFailure(const std::string& what, BPiLGAudit audit) : std::runtime_error(what), audit(audit) {}
  BPiLGAudit audit;
};

// Samples each piece at δ (cone-checked at λ), adds the junk, keeps a δ/2-net
// with pieces before junk, and audits the big-piece inequality on random
// (p, r) with r ∈ [4δ, diam/4]. Throws AuditFailure if the audit fails.
BPiLGSet synth_bpilg_set(const BPiLGSpec& spec, double delta, std::uint64_t seed);

// Recomputes the audit for an existing labelled cloud.
BPiLGAudit audit_big_pieces(const IndexedCloud& cloud, const std::vector<int>& piece, double theta, int samples,
                            std::uint64_t seed);

struct TransferRecord {
  std::size_t cube = 0;
  double lhs = 0;        // bβ_E(Q)
  double beta_tilde = 0;  // bβ_Ẽ(p, 6C₀ℓ)
  double i = 0;          // I_{E,Ẽ}(p, 6C₀ℓ)
  double i_tilde = 0;    // I_{Ẽ,E}(p, 6C₀ℓ)
  double rhs = 0;        // 3(β̃ + I + Ĩ)
  double slack = 0.1;
  bool holds() const { return lhs <= rhs * (1 + slack); }
};

// E is the tree's cloud; p must lie within resolution of both clouds and in Q.
TransferRecord transfer_inequality_check(const IndexedCloud& e_tilde, const CubeTree& tree, std::size_t cube,
                                         const Point& p, PlaneFamily family, const BetaBudget& budget,
                                         double slack = 0.1);

struct StoppingTimeReport {
  std::size_t root = 0;
  int n = 0;
  double eta_hat = 0;           // qualifying weight / |R|
  double qualifying_weight = 0;
  double root_weight = 0;
};

StoppingTimeReport stopping_time_profile(const CubeTree& tree, const std::vector<std::size_t>& bad, std::size_t root,
                                         int n);

struct BWGLOptions {
  std::optional<int> j_min, j_max;  // default: finest and coarsest usable levels
  std::optional<Window> window;     // default: point nearest the centroid, radius diam/4
  std::uint64_t seed = 1;
};

struct BWGLReport {
  Window window{Point::identity(GroupDim(1)), 0};
  std::vector<CarlesonRow> rows;  // one per ε, in the order given
  PlaneFamily family = PlaneFamily::vertical;
  int j_min = 0, j_max = 0;
  double c0 = 0;
  double resolution = 0;
  std::size_t cubes = 0;
  std::vector<std::size_t> admissible;
  std::vector<BetaValue> betas;  // per admissible cube
  std::optional<AhlforsEstimate> ahlfors;
};

// Cloud point nearest the coordinate mean, radius diam/4.
Window default_window(const IndexedCloud& cloud);

BWGLReport bwgl_report(const IndexedCloud& cloud, const std::vector<double>& eps, PlaneFamily family,
                       const BetaBudget& budget, const BWGLOptions& options = {});
// Rows recomputed from a report's β values using only admissible cubes at
// level ≥ min_level; the coarse part of a finer run, without new β work.
std::vector<CarlesonRow> bwgl_rows(const CubeTree& tree, const BWGLReport& report, const std::vector<double>& eps,
                                   int min_level);

// Same on a prebuilt tree.
BWGLReport bwgl_report(const CubeTree& tree, const std::vector<double>& eps, PlaneFamily family,
                       const BetaBudget& budget, const std::optional<Window>& window = std::nullopt);

}  // namespace hkrect
