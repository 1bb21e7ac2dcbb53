#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "hkrect/point_cloud.hpp"

namespace hkrect {

// Vantage-point tree over packed H^k points, keyed by the Korányi distance.
// Balls are open: within(q, r) returns points with d < r.
class KoranyiIndex {
 public:
  struct Neighbor {
    std::size_t index = std::numeric_limits<std::size_t>::max();
    double distance = std::numeric_limits<double>::infinity();
    bool found() const { return index != std::numeric_limits<std::size_t>::max(); }
  };

  KoranyiIndex() = default;
  explicit KoranyiIndex(const Eigen::MatrixXd& coords, std::size_t leaf_size = 8);

  std::size_t size() const { return ids_.size(); }
  int k() const { return k_; }

  // Nearest point; equal distances resolve to the smaller index.
  Neighbor nearest(const double* q) const;
  Neighbor nearest(const Eigen::Ref<const Eigen::VectorXd>& q) const { return nearest(q.data()); }
  // Nearest point among those accepted by keep(index).
  Neighbor nearest_if(const double* q, const std::function<bool(std::size_t)>& keep) const;

  bool any_within(const double* q, double r) const;
  bool any_within(const Eigen::Ref<const Eigen::VectorXd>& q, double r) const { return any_within(q.data(), r); }
  // Indices with d < r, ascending.
  std::vector<std::size_t> within(const double* q, double r) const;
  std::vector<std::size_t> within(const Eigen::Ref<const Eigen::VectorXd>& q, double r) const {
    return within(q.data(), r);
  }

 private:
  struct Node {
    std::int32_t begin, end;  // slot range; the vantage is slot `begin` for inner nodes
    std::int32_t child[2];    // -1 for leaves
    double lo[2], hi[2];      // distance shell of each child around the vantage
  };
  std::int32_t build(std::int32_t begin, std::int32_t end, std::uint64_t& state);
  const double* slot(std::size_t s) const { return data_.data() + s * stride_; }

  int k_ = 0;
  std::size_t stride_ = 0;
  std::size_t leaf_size_ = 8;
  std::vector<double> data_;        // coordinates in slot order
  std::vector<std::size_t> ids_;    // slot -> original index
  std::vector<Node> nodes_;
};

// A cloud together with its index; cheap to copy.
class IndexedCloud {
 public:
  explicit IndexedCloud(PointCloud cloud)
      : cloud_(std::make_shared<const PointCloud>(std::move(cloud))),
        index_(std::make_shared<const KoranyiIndex>(cloud_->coords())) {}

  const PointCloud& cloud() const { return *cloud_; }
  const KoranyiIndex& index() const { return *index_; }
  std::size_t size() const { return cloud_->size(); }
  int k() const { return cloud_->k(); }
  double resolution() const { return cloud_->resolution(); }

  double distance_to(const double* q) const { return index_->nearest(q).distance; }
  double distance_to(const Eigen::Ref<const Eigen::VectorXd>& q) const { return distance_to(q.data()); }
  // Index of a cloud point within tol of p; throws if there is none.
  std::size_t locate(const Eigen::Ref<const Eigen::VectorXd>& p, double tol) const;

 private:
  std::shared_ptr<const PointCloud> cloud_;
  std::shared_ptr<const KoranyiIndex> index_;
};

}  // namespace hkrect
