#pragma once

#include <span>
#include <vector>

#include "iternorm/common.hpp"

namespace iternorm {

/// Exact nearest-neighbor search tree with median splits on the widest axis.
/// Queries are read-only and safe to run concurrently.
class KdTree {
 public:
  explicit KdTree(std::span<const Vec3> points, int leaf_size = 16);

  /// The k nearest points to `query` ordered by (distance², index), ties
  /// broken by ascending index. `exclude` (usually the query's own index) is
  /// skipped; pass -1 to keep all candidates.
  void knn(const Vec3& query, int k, int exclude, std::vector<int>& out) const;

  /// All points with distance strictly < radius, same exclusion and ordering.
  void radius(const Vec3& query, double radius, int exclude,
              std::vector<int>& out) const;

  int size() const { return static_cast<int>(points_.size()); }

 private:
  struct Node {
    double split = 0.0;
    int axis = -1;  // -1 marks a leaf
    int left = -1, right = -1;
    int begin = 0, end = 0;  // range into order_
  };

  int build(int begin, int end);

  std::vector<Vec3> points_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
  int leaf_size_;
};

}  // namespace iternorm
