#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hkrect/hgroup.hpp"

namespace hkrect {

// Finite weighted sample of a codimension-one set. Points are the columns of
// a (2k+1) × n matrix in packed (v, t) layout.
class PointCloud {
 public:
  PointCloud(GroupDim dim, Eigen::MatrixXd coords, Eigen::VectorXd weights, double resolution);

  GroupDim dim() const { return dim_; }
  int k() const { return dim_.k(); }
  std::size_t size() const { return static_cast<std::size_t>(coords_.cols()); }
  bool empty() const { return coords_.cols() == 0; }
  double resolution() const { return resolution_; }

  const Eigen::MatrixXd& coords() const { return coords_; }
  auto column(std::size_t i) const { return coords_.col(static_cast<Eigen::Index>(i)); }
  Point point(std::size_t i) const { return Point::from_packed(Eigen::VectorXd(column(i))); }
  double weight(std::size_t i) const { return weights_(static_cast<Eigen::Index>(i)); }
  const Eigen::VectorXd& weights() const { return weights_; }
  double total_weight() const { return weights_.sum(); }

  PointCloud subset(const std::vector<std::size_t>& indices) const;

 private:
  GroupDim dim_;
  Eigen::MatrixXd coords_;
  Eigen::VectorXd weights_;
  double resolution_;
};

// Left translation g·E; resolution unchanged.
PointCloud left_translate(const Point& g, const PointCloud& cloud);
// δ_s E with weights scaled by s^{2k+1} and resolution by s.
PointCloud dilate(double s, const PointCloud& cloud);
// Concatenation; resolution is the smaller of the two.
PointCloud merge(const PointCloud& a, const PointCloud& b);

// Lower bound from a double sweep; within a factor 2 of the true diameter.
double estimate_diameter(const PointCloud& cloud);

// Text format: a header `hk <k> <resolution>`, then one point per line
// (2k+1 coordinates, then the weight). Lines starting with '#' are comments.
void write_point_cloud(std::ostream& out, const PointCloud& cloud);
PointCloud read_point_cloud(std::istream& in);

// Shortest decimal text that reads back to the same double.
std::string format_double(double x);

}  // namespace hkrect
