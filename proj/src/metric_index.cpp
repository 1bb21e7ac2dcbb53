#include "hkrect/metric_index.hpp"

#include <algorithm>
#include <stdexcept>
#include <utility>

#include "hkrect/hgroup.hpp"

namespace hkrect {

namespace {

std::uint64_t splitmix(std::uint64_t& s) {
  std::uint64_t z = (s += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline double lower_bound(double dq, double lo, double hi) { return std::max({lo - dq, dq - hi, 0.0}); }

}  // namespace

KoranyiIndex::KoranyiIndex(const Eigen::MatrixXd& coords, std::size_t leaf_size)
    : k_(static_cast<int>(coords.rows() / 2)),
      stride_(static_cast<std::size_t>(coords.rows())),
      leaf_size_(std::max<std::size_t>(leaf_size, 1)) {
  if (coords.rows() < 3 || coords.rows() % 2 != 1) throw DimensionMismatch("KoranyiIndex: rows must be 2k+1");
  const std::size_t n = static_cast<std::size_t>(coords.cols());
  if (n > static_cast<std::size_t>(std::numeric_limits<std::int32_t>::max()))
    throw std::length_error("KoranyiIndex: too many points");
  ids_.resize(n);
  for (std::size_t i = 0; i < n; ++i) ids_[i] = i;
  // data_ temporarily holds the original layout so build() can measure distances.
  data_.assign(coords.data(), coords.data() + coords.size());
  if (n > 0) {
    std::uint64_t state = 0x5eed;
    nodes_.reserve(2 * n / leaf_size_ + 1);
    build(0, static_cast<std::int32_t>(n), state);
  }
  std::vector<double> ordered(data_.size());
  for (std::size_t s = 0; s < n; ++s)
    std::copy_n(data_.data() + ids_[s] * stride_, stride_, ordered.data() + s * stride_);
  data_ = std::move(ordered);
}

std::int32_t KoranyiIndex::build(std::int32_t begin, std::int32_t end, std::uint64_t& state) {
  const std::int32_t id = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back(Node{begin, end, {-1, -1}, {0, 0}, {0, 0}});
  if (static_cast<std::size_t>(end - begin) <= leaf_size_) return id;
  const std::int32_t pick = begin + static_cast<std::int32_t>(splitmix(state) % static_cast<std::uint64_t>(end - begin));
  std::swap(ids_[begin], ids_[pick]);
  const double* vp = data_.data() + ids_[begin] * stride_;
  std::vector<std::pair<double, std::size_t>> d;
  d.reserve(static_cast<std::size_t>(end - begin - 1));
  for (std::int32_t s = begin + 1; s < end; ++s) d.emplace_back(raw_distance(data_.data() + ids_[s] * stride_, vp, k_), ids_[s]);
  const std::size_t half = d.size() / 2;
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(half), d.end());
  for (std::size_t i = 0; i < d.size(); ++i) ids_[begin + 1 + i] = d[i].second;
  const std::int32_t mid = begin + 1 + static_cast<std::int32_t>(half);
  double lo[2] = {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  double hi[2] = {0, 0};
  for (std::size_t i = 0; i < d.size(); ++i) {
    const int c = i < half ? 0 : 1;
    lo[c] = std::min(lo[c], d[i].first);
    hi[c] = std::max(hi[c], d[i].first);
  }
  d.clear();
  d.shrink_to_fit();
  std::int32_t c0 = -1, c1 = -1;
  if (mid > begin + 1) c0 = build(begin + 1, mid, state);
  if (end > mid) c1 = build(mid, end, state);
  Node& node = nodes_[id];
  node.child[0] = c0;
  node.child[1] = c1;
  for (int c = 0; c < 2; ++c) {
    node.lo[c] = lo[c];
    node.hi[c] = hi[c];
  }
  return id;
}

namespace {

struct NearestState {
  KoranyiIndex::Neighbor best;
  void offer(double d, std::size_t id) {
    if (d < best.distance || (d == best.distance && id < best.index)) {
      best.distance = d;
      best.index = id;
    }
  }
};

}  // namespace

KoranyiIndex::Neighbor KoranyiIndex::nearest(const double* q) const {
  return nearest_if(q, nullptr);
}

KoranyiIndex::Neighbor KoranyiIndex::nearest_if(const double* q, const std::function<bool(std::size_t)>& keep) const {
  NearestState st;
  if (nodes_.empty()) return st.best;
  auto ok = [&](std::size_t id) { return !keep || keep(id); };
  auto rec = [&](auto&& self, std::int32_t ni) -> void {
    const Node& n = nodes_[ni];
    const bool leaf = n.child[0] < 0 && n.child[1] < 0 && static_cast<std::size_t>(n.end - n.begin) <= leaf_size_;
    if (leaf) {
      for (std::int32_t s = n.begin; s < n.end; ++s) {
        const std::size_t id = ids_[s];
        if (!ok(id)) continue;
        st.offer(raw_distance(q, slot(s), k_), id);
      }
      return;
    }
    const double dq = raw_distance(q, slot(n.begin), k_);
    if (ok(ids_[n.begin])) st.offer(dq, ids_[n.begin]);
    double lb[2];
    for (int c = 0; c < 2; ++c) lb[c] = n.child[c] < 0 ? std::numeric_limits<double>::infinity() : lower_bound(dq, n.lo[c], n.hi[c]);
    const int first = lb[0] <= lb[1] ? 0 : 1;
    for (int c : {first, 1 - first}) {
      if (n.child[c] < 0 || lb[c] > st.best.distance) continue;
      self(self, n.child[c]);
    }
  };
  rec(rec, 0);
  return st.best;
}

bool KoranyiIndex::any_within(const double* q, double r) const {
  if (nodes_.empty() || !(r > 0)) return false;
  auto rec = [&](auto&& self, std::int32_t ni) -> bool {
    const Node& n = nodes_[ni];
    if (n.child[0] < 0 && n.child[1] < 0 && static_cast<std::size_t>(n.end - n.begin) <= leaf_size_) {
      for (std::int32_t s = n.begin; s < n.end; ++s)
        if (raw_distance(q, slot(s), k_) < r) return true;
      return false;
    }
    const double dq = raw_distance(q, slot(n.begin), k_);
    if (dq < r) return true;
    double lb[2];
    for (int c = 0; c < 2; ++c) {
      if (n.child[c] < 0) continue;
      // a non-empty shell entirely inside the ball settles it
      if (dq + n.hi[c] < r) return true;
      lb[c] = lower_bound(dq, n.lo[c], n.hi[c]);
    }
    const int first = n.child[1] >= 0 && (n.child[0] < 0 || lb[1] < lb[0]) ? 1 : 0;
    for (int c : {first, 1 - first}) {
      if (n.child[c] < 0 || lb[c] >= r) continue;
      if (self(self, n.child[c])) return true;
    }
    return false;
  };
  return rec(rec, 0);
}

std::vector<std::size_t> KoranyiIndex::within(const double* q, double r) const {
  std::vector<std::size_t> out;
  if (nodes_.empty() || !(r > 0)) return out;
  auto rec = [&](auto&& self, std::int32_t ni) -> void {
    const Node& n = nodes_[ni];
    if (n.child[0] < 0 && n.child[1] < 0 && static_cast<std::size_t>(n.end - n.begin) <= leaf_size_) {
      for (std::int32_t s = n.begin; s < n.end; ++s)
        if (raw_distance(q, slot(s), k_) < r) out.push_back(ids_[s]);
      return;
    }
    const double dq = raw_distance(q, slot(n.begin), k_);
    if (dq < r) out.push_back(ids_[n.begin]);
    for (int c = 0; c < 2; ++c)
      if (n.child[c] >= 0 && lower_bound(dq, n.lo[c], n.hi[c]) < r) self(self, n.child[c]);
  };
  rec(rec, 0);
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t IndexedCloud::locate(const Eigen::Ref<const Eigen::VectorXd>& p, double tol) const {
  if (p.size() != cloud_->dim().packed()) throw DimensionMismatch("IndexedCloud::locate: dimension mismatch");
  const auto nb = index_->nearest(p.data());
  if (!nb.found() || nb.distance > tol) throw std::invalid_argument("point is not in the cloud");
  return nb.index;
}

}  // namespace hkrect
