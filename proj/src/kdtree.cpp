#include <algorithm>
#include <cmath>
#include <queue>

#include "iternorm/kdtree.hpp"

namespace iternorm {

KdTree::KdTree(std::span<const Vec3> points, int leaf_size)
    : points_(points.begin(), points.end()), leaf_size_(std::max(1, leaf_size)) {
  order_.resize(points_.size());
  for (int i = 0; i < size(); ++i) order_[i] = i;
  nodes_.reserve(points_.empty() ? 1 : 2 * points_.size() / leaf_size_ + 2);
  if (!points_.empty()) build(0, size());
}

int KdTree::build(int begin, int end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.emplace_back();
  nodes_[id].begin = begin;
  nodes_[id].end = end;
  if (end - begin <= leaf_size_) return id;

  Vec3 lo = points_[order_[begin]], hi = lo;
  for (int i = begin + 1; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  Vec3 extent = hi - lo;
  int axis = 0;
  if (extent.y() > extent.x()) axis = 1;
  if (extent.z() > extent[axis]) axis = 2;
  if (extent[axis] <= 0.0) return id;  // all points coincide, keep as leaf

  const int mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid,
                   order_.begin() + end, [&](int a, int b) {
                     double pa = points_[a][axis], pb = points_[b][axis];
                     return pa < pb || (pa == pb && a < b);
                   });
  nodes_[id].axis = axis;
  nodes_[id].split = points_[order_[mid]][axis];
  int l = build(begin, mid);
  int r = build(mid, end);
  nodes_[id].left = l;
  nodes_[id].right = r;
  return id;
}

namespace {

// (distance², index) with lexicographic order; the heap keeps the current
// worst candidate on top.
using Cand = std::pair<double, int>;

struct KnnHeap {
  std::vector<Cand> heap;
  int capacity;

  explicit KnnHeap(int k) : capacity(k) { heap.reserve(k + 1); }

  double worst() const { return heap.front().first; }
  bool full() const { return static_cast<int>(heap.size()) == capacity; }

  void offer(double d2, int idx) {
    Cand c{d2, idx};
    if (!full()) {
      heap.push_back(c);
      std::push_heap(heap.begin(), heap.end());
    } else if (c < heap.front()) {
      std::pop_heap(heap.begin(), heap.end());
      heap.back() = c;
      std::push_heap(heap.begin(), heap.end());
    }
  }
};

}  // namespace

void KdTree::knn(const Vec3& query, int k, int exclude,
                 std::vector<int>& out) const {
  out.clear();
  if (k <= 0 || nodes_.empty()) return;
  KnnHeap best(k);

  // explicit stack; (node, distance² from query to the node's half-space)
  std::vector<std::pair<int, double>> stack;
  stack.reserve(64);
  stack.emplace_back(0, 0.0);
  while (!stack.empty()) {
    auto [id, bound] = stack.back();
    stack.pop_back();
    if (best.full() && bound > best.worst()) continue;
    const Node& node = nodes_[id];
    if (node.axis < 0) {
      for (int i = node.begin; i < node.end; ++i) {
        int idx = order_[i];
        if (idx == exclude) continue;
        best.offer((points_[idx] - query).squaredNorm(), idx);
      }
      continue;
    }
    const double delta = query[node.axis] - node.split;
    const int near = delta < 0.0 ? node.left : node.right;
    const int far = delta < 0.0 ? node.right : node.left;
    stack.emplace_back(far, delta * delta);
    stack.emplace_back(near, bound);
  }
  std::sort_heap(best.heap.begin(), best.heap.end());
  out.reserve(best.heap.size());
  for (const auto& [d2, idx] : best.heap) out.push_back(idx);
}

void KdTree::radius(const Vec3& query, double radius, int exclude,
                    std::vector<int>& out) const {
  out.clear();
  if (nodes_.empty() || radius <= 0.0) return;
  const double r2 = radius * radius;
  std::vector<Cand> found;

  std::vector<std::pair<int, double>> stack;
  stack.reserve(64);
  stack.emplace_back(0, 0.0);
  while (!stack.empty()) {
    auto [id, bound] = stack.back();
    stack.pop_back();
    if (bound >= r2) continue;
    const Node& node = nodes_[id];
    if (node.axis < 0) {
      for (int i = node.begin; i < node.end; ++i) {
        int idx = order_[i];
        if (idx == exclude) continue;
        double d2 = (points_[idx] - query).squaredNorm();
        if (d2 < r2) found.emplace_back(d2, idx);
      }
      continue;
    }
    const double delta = query[node.axis] - node.split;
    const int near = delta < 0.0 ? node.left : node.right;
    const int far = delta < 0.0 ? node.right : node.left;
    stack.emplace_back(far, delta * delta);
    stack.emplace_back(near, bound);
  }
  std::sort(found.begin(), found.end());
  out.reserve(found.size());
  for (const auto& [d2, idx] : found) out.push_back(idx);
}

}  // namespace iternorm
