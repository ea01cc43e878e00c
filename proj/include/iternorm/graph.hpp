#pragma once

#include <cstdint>
#include <vector>

#include "iternorm/common.hpp"
#include "iternorm/kdtree.hpp"
#include "iternorm/pointcloud.hpp"

namespace iternorm {

/// Directed neighborhood graph in structure-of-arrays form. Edges of node i
/// occupy the contiguous range [node_offsets[i], node_offsets[i+1]) and are
/// kept sorted by destination index; every neighborhood contains the self
/// edge (i,i). All segment reductions iterate this canonical order, which is
/// what makes downstream results invariant to neighbor-order shuffles.
struct NeighborGraph {
  enum class Mode { Knn, Radius };

  Mode mode = Mode::Knn;
  int k = 0;       // knn mode
  double r = 0.0;  // radius mode
  std::vector<int> edge_src;
  std::vector<int> edge_dst;
  std::vector<std::int64_t> node_offsets;  // m+1 entries
  std::vector<int> underpopulated;  // radius mode: nodes with < 3 points

  int num_nodes() const { return static_cast<int>(node_offsets.size()) - 1; }
  std::int64_t num_edges() const { return static_cast<std::int64_t>(edge_dst.size()); }
  int degree(int i) const {
    return static_cast<int>(node_offsets[i + 1] - node_offsets[i]);
  }

  /// Builds a graph from raw parallel (src, dst) arrays in any order;
  /// segments are re-sorted into canonical form. Throws on inconsistent data.
  static NeighborGraph from_arrays(std::vector<int> src, std::vector<int> dst,
                                   int num_nodes);

  /// Edge list as CSV ("src,dst") for debugging.
  void dump_csv(const std::string& path) const;
};

/// Self edge plus the k nearest neighbors per node (k_i = k+1), exact search,
/// distance ties broken by ascending index. Requires k >= 2 and m >= k+1.
NeighborGraph build_knn_graph(const PointCloud& cloud, int k);
NeighborGraph build_knn_graph(const PointCloud& cloud, const KdTree& tree, int k);

/// Self edge plus all points strictly within r. Nodes with fewer than 3
/// total points are listed in `underpopulated` for the caller to patch.
NeighborGraph build_radius_graph(const PointCloud& cloud, double r);
NeighborGraph build_radius_graph(const PointCloud& cloud, const KdTree& tree,
                                 double r);

/// Replaces each underpopulated neighborhood with self + 2 nearest neighbors
/// so plane fitting stays well-posed everywhere.
NeighborGraph patch_underpopulated(const NeighborGraph& graph,
                                   const PointCloud& cloud, const KdTree& tree);

/// Per-edge coordinates centered on the unweighted neighborhood mean (the
/// mean includes the self point).
struct CenteredNeighborhoods {
  std::vector<Vec3> centered;           // one per edge
  std::vector<Vec3> neighborhood_mean;  // one per node
};

CenteredNeighborhoods centered_coords(const PointCloud& cloud,
                                      const NeighborGraph& graph);

}  // namespace iternorm
