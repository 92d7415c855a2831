#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace crossloc {

struct Neighbor {
  int index = -1;
  double distance = 0.0;
};

/// Exact k-d tree. Results are sorted by (distance, index), so ties resolve
/// to the earliest inserted point.
template <int Dim>
class KdTree {
 public:
  using Point = Eigen::Matrix<double, Dim, 1>;

  KdTree() = default;
  explicit KdTree(std::span<const Point> points) { build(points); }

  void build(std::span<const Point> points) {
    points_.assign(points.begin(), points.end());
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), 0);
    nodes_.clear();
    if (!points_.empty()) build_node(0, static_cast<int>(order_.size()));
  }

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const Point& point(int i) const { return points_[i]; }

  std::vector<Neighbor> knn(const Point& q, int k) const {
    std::vector<std::pair<double, int>> heap;  // max-heap on (d2, index)
    if (points_.empty() || k <= 0) return {};
    heap.reserve(k + 1);
    search(0, q, static_cast<std::size_t>(k), heap);
    std::sort_heap(heap.begin(), heap.end());
    std::vector<Neighbor> out;
    out.reserve(heap.size());
    for (const auto& [d2, idx] : heap) out.push_back(Neighbor{idx, std::sqrt(d2)});
    return out;
  }

  Neighbor nearest(const Point& q) const {
    auto r = knn(q, 1);
    return r.empty() ? Neighbor{} : r.front();
  }

  /// Indices of all points with distance <= r, ascending.
  std::vector<int> within(const Point& q, double r) const {
    std::vector<int> out;
    if (!points_.empty() && r >= 0.0) radius_search(0, q, r * r, out);
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  static constexpr int kLeafSize = 8;

  struct Node {
    int begin, end;
    int axis = -1;  // -1 for leaves
    double split = 0.0;
    int left = -1, right = -1;
  };

  int build_node(int begin, int end) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(Node{begin, end});
    if (end - begin <= kLeafSize) return id;
    Point lo = points_[order_[begin]], hi = lo;
    for (int i = begin + 1; i < end; ++i) {
      lo = lo.cwiseMin(points_[order_[i]]);
      hi = hi.cwiseMax(points_[order_[i]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    if (hi[axis] - lo[axis] <= 0.0) return id;  // all coincident
    const int mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](int a, int b) {
                       const double va = points_[a][axis], vb = points_[b][axis];
                       return va < vb || (va == vb && a < b);
                     });
    const double split = points_[order_[mid]][axis];
    const int left = build_node(begin, mid);
    const int right = build_node(mid, end);
    nodes_[id].axis = axis;
    nodes_[id].split = split;
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  void search(int node_id, const Point& q, std::size_t k,
              std::vector<std::pair<double, int>>& heap) const {
    const Node& node = nodes_[node_id];
    if (node.axis < 0) {
      for (int i = node.begin; i < node.end; ++i) {
        const int idx = order_[i];
        const std::pair<double, int> cand{(points_[idx] - q).squaredNorm(), idx};
        if (heap.size() < k) {
          heap.push_back(cand);
          std::push_heap(heap.begin(), heap.end());
        } else if (cand < heap.front()) {
          std::pop_heap(heap.begin(), heap.end());
          heap.back() = cand;
          std::push_heap(heap.begin(), heap.end());
        }
      }
      return;
    }
    const double diff = q[node.axis] - node.split;
    // Points equal to the split value can sit on either side.
    const int first = diff < 0.0 ? node.left : node.right;
    const int second = diff < 0.0 ? node.right : node.left;
    search(first, q, k, heap);
    if (heap.size() < k || diff * diff <= heap.front().first) search(second, q, k, heap);
  }

  void radius_search(int node_id, const Point& q, double r2, std::vector<int>& out) const {
    const Node& node = nodes_[node_id];
    if (node.axis < 0) {
      for (int i = node.begin; i < node.end; ++i)
        if ((points_[order_[i]] - q).squaredNorm() <= r2) out.push_back(order_[i]);
      return;
    }
    const double diff = q[node.axis] - node.split;
    if (diff <= 0.0 || diff * diff <= r2) radius_search(node.left, q, r2, out);
    if (diff >= 0.0 || diff * diff <= r2) radius_search(node.right, q, r2, out);
  }

  std::vector<Point> points_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
};

}  // namespace crossloc
