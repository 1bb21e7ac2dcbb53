#include "hkrect/point_cloud.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace hkrect {

PointCloud::PointCloud(GroupDim dim, Eigen::MatrixXd coords, Eigen::VectorXd weights, double resolution)
    : dim_(dim), coords_(std::move(coords)), weights_(std::move(weights)), resolution_(resolution) {
  if (coords_.rows() != dim_.packed()) throw DimensionMismatch("PointCloud: coordinate rows must be 2k+1");
  if (weights_.size() != coords_.cols()) throw std::invalid_argument("PointCloud: one weight per point required");
  if (!(resolution_ > 0) || !std::isfinite(resolution_))
    throw std::invalid_argument("PointCloud: resolution must be positive");
  if (!coords_.allFinite()) throw std::invalid_argument("PointCloud: non-finite coordinate");
  for (Eigen::Index i = 0; i < weights_.size(); ++i)
    if (!(weights_(i) > 0) || !std::isfinite(weights_(i)))
      throw std::invalid_argument("PointCloud: weights must be positive");
}

PointCloud PointCloud::subset(const std::vector<std::size_t>& indices) const {
  Eigen::MatrixXd c(coords_.rows(), static_cast<Eigen::Index>(indices.size()));
  Eigen::VectorXd w(static_cast<Eigen::Index>(indices.size()));
  for (std::size_t j = 0; j < indices.size(); ++j) {
    if (indices[j] >= size()) throw std::out_of_range("PointCloud::subset: index out of range");
    c.col(static_cast<Eigen::Index>(j)) = column(indices[j]);
    w(static_cast<Eigen::Index>(j)) = weight(indices[j]);
  }
  return PointCloud(dim_, std::move(c), std::move(w), resolution_);
}

PointCloud left_translate(const Point& g, const PointCloud& cloud) {
  if (g.k() != cloud.k()) throw DimensionMismatch("left_translate: dimension mismatch");
  const int n = 2 * cloud.k();
  Eigen::MatrixXd c = cloud.coords();
  for (Eigen::Index i = 0; i < c.cols(); ++i) {
    const double tw = symplectic(g.v(), c.col(i).head(n)) / 2;
    c.col(i).head(n) += g.v();
    c(n, i) += g.t() + tw;
  }
  return PointCloud(cloud.dim(), std::move(c), cloud.weights(), cloud.resolution());
}

PointCloud dilate(double s, const PointCloud& cloud) {
  if (!(s > 0)) throw std::invalid_argument("dilate: scale must be positive");
  Eigen::MatrixXd c = s * cloud.coords();
  c.row(c.rows() - 1) *= s;
  const double w = std::pow(s, 2 * cloud.k() + 1);
  return PointCloud(cloud.dim(), std::move(c), cloud.weights() * w, cloud.resolution() * s);
}

PointCloud merge(const PointCloud& a, const PointCloud& b) {
  if (a.dim() != b.dim()) throw DimensionMismatch("merge: dimension mismatch");
  Eigen::MatrixXd c(a.coords().rows(), a.coords().cols() + b.coords().cols());
  c << a.coords(), b.coords();
  Eigen::VectorXd w(a.weights().size() + b.weights().size());
  w << a.weights(), b.weights();
  return PointCloud(a.dim(), std::move(c), std::move(w), std::min(a.resolution(), b.resolution()));
}

double estimate_diameter(const PointCloud& cloud) {
  if (cloud.empty()) return 0;
  const int k = cloud.k();
  const double* base = cloud.coords().data();
  const Eigen::Index stride = cloud.coords().rows();
  std::size_t from = 0;
  double best = 0;
  for (int sweep = 0; sweep < 3; ++sweep) {
    std::size_t arg = from;
    double far = 0;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      const double d = raw_distance(base + i * stride, base + from * stride, k);
      if (d > far) {
        far = d;
        arg = i;
      }
    }
    best = std::max(best, far);
    from = arg;
  }
  return best;
}

std::string format_double(double x) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  if (ec != std::errc()) throw std::runtime_error("format_double: conversion failed");
  return std::string(buf, end);
}

void write_point_cloud(std::ostream& out, const PointCloud& cloud) {
  out << "hk " << cloud.k() << ' ' << format_double(cloud.resolution()) << '\n';
  const Eigen::Index rows = cloud.coords().rows();
  std::string line;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    line.clear();
    for (Eigen::Index r = 0; r < rows; ++r) {
      line += format_double(cloud.coords()(r, static_cast<Eigen::Index>(i)));
      line += ' ';
    }
    line += format_double(cloud.weight(i));
    line += '\n';
    out << line;
  }
}

PointCloud read_point_cloud(std::istream& in) {
  std::string line;
  auto next = [&]() -> bool {
    while (std::getline(in, line)) {
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos || line[first] == '#') continue;
      return true;
    }
    return false;
  };
  if (!next()) throw std::runtime_error("read_point_cloud: missing header");
  std::istringstream header(line);
  std::string magic;
  int k = 0;
  double res = 0;
  if (!(header >> magic >> k >> res) || magic != "hk")
    throw std::runtime_error("read_point_cloud: malformed header");
  const GroupDim dim(k);
  std::vector<double> values;
  std::size_t n = 0;
  while (next()) {
    std::istringstream rec(line);
    double x;
    int count = 0;
    while (rec >> x) {
      values.push_back(x);
      ++count;
    }
    if (!rec.eof() || count != dim.packed() + 1)
      throw std::runtime_error("read_point_cloud: malformed record on point " + std::to_string(n));
    ++n;
  }
  Eigen::MatrixXd c(dim.packed(), static_cast<Eigen::Index>(n));
  Eigen::VectorXd w(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (int r = 0; r < dim.packed(); ++r) c(r, static_cast<Eigen::Index>(i)) = values[i * (dim.packed() + 1) + r];
    w(static_cast<Eigen::Index>(i)) = values[i * (dim.packed() + 1) + dim.packed()];
  }
  return PointCloud(dim, std::move(c), std::move(w), res);
}

}  // namespace hkrect
