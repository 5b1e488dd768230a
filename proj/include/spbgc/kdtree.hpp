#pragma once

#include <queue>
#include <utility>
#include <vector>

#include "spbgc/types.hpp"

namespace spbgc {

/// Incrementally built 2-d kd-tree for exact k-nearest-neighbor queries.
/// Querying before inserting site i gives "nearest among predecessors" for
/// sequential conditioning-set construction. Ties in distance are broken by
/// the smaller id so results are deterministic.
class KdTree2d {
 public:
  void reserve(Index n) { nodes_.reserve(static_cast<std::size_t>(n)); }

  void insert(double x, double y, Index id) {
    const int idx = static_cast<int>(nodes_.size());
    nodes_.push_back(Node{{x, y}, id, -1, -1});
    if (root_ < 0) {
      root_ = idx;
      return;
    }
    int cur = root_;
    int axis = 0;
    for (;;) {
      Node& node = nodes_[static_cast<std::size_t>(cur)];
      int& child = (nodes_[static_cast<std::size_t>(idx)].pt[axis] < node.pt[axis])
                       ? node.left
                       : node.right;
      if (child < 0) {
        child = idx;
        return;
      }
      cur = child;
      axis ^= 1;
    }
  }

  Index size() const { return static_cast<Index>(nodes_.size()); }

  /// Ids of the k nearest inserted points to (x, y), ascending by
  /// (distance, id).
  IndexVector knn(double x, double y, Index k) const {
    Heap heap;
    if (root_ >= 0 && k > 0) search(root_, 0, x, y, k, heap);
    std::vector<std::pair<double, Index>> found;
    found.reserve(heap.size());
    while (!heap.empty()) {
      found.push_back(heap.top());
      heap.pop();
    }
    IndexVector out(found.size());
    for (std::size_t i = 0; i < found.size(); ++i)
      out[found.size() - 1 - i] = found[i].second;
    return out;
  }

 private:
  struct Node {
    double pt[2];
    Index id;
    int left, right;
  };
  using Heap = std::priority_queue<std::pair<double, Index>>;

  void search(int cur, int axis, double x, double y, Index k, Heap& heap) const {
    const Node& node = nodes_[static_cast<std::size_t>(cur)];
    const double dx = x - node.pt[0];
    const double dy = y - node.pt[1];
    const std::pair<double, Index> cand{dx * dx + dy * dy, node.id};
    if (static_cast<Index>(heap.size()) < k) {
      heap.push(cand);
    } else if (cand < heap.top()) {
      heap.pop();
      heap.push(cand);
    }
    const double delta = (axis == 0) ? dx : dy;
    const int near = (delta < 0.0) ? node.left : node.right;
    const int far = (delta < 0.0) ? node.right : node.left;
    if (near >= 0) search(near, axis ^ 1, x, y, k, heap);
    if (far >= 0 &&
        (static_cast<Index>(heap.size()) < k || delta * delta <= heap.top().first))
      search(far, axis ^ 1, x, y, k, heap);
  }

  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace spbgc
