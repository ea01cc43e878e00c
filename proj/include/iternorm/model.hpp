#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "iternorm/graph.hpp"
#include "iternorm/nn.hpp"

namespace iternorm {

/// Per-node output of the message-passing network: kernel parameters and a
/// raw (unnormalized) quaternion.
struct NodeHead {
  MatX theta;  // 8 x S
  MatX quat;   // 4 x S
};

/// Modified point pair features per edge:
///   (|n_i . d|, |n_j . d|, |n_i . n_j|, ||d||²),  d = p_j - p_i.
/// The first component is the point-plane residual of the previous fit.
MatX compute_ppf(const PointCloud& cloud, const NeighborGraph& graph,
                 const std::vector<Vec3>& prev_normals);

/// A packed set of neighborhoods (a node block or a sampled subset) with all
/// per-edge geometry gathered; edge order is the graph's canonical order.
/// Offsets fed to the network (d, zgeo) are expressed in units of the
/// neighborhood's mean edge length so feature magnitudes stay O(1) across
/// sampling densities and k; `centered` keeps true coordinates for the fit.
struct NeighborhoodBatch {
  std::vector<int> node_ids;               // S original node indices
  std::vector<std::int64_t> offsets;       // S+1, rebased to 0
  std::vector<int> edge_src_local;         // B, in [0, S)
  std::vector<int> edge_dst;               // B, original point indices
  std::vector<std::int64_t> edge_global;   // B, position in the full graph
  MatX d;         // 3 x B  (p_j - p_i, in neighborhood units)
  MatX zgeo;      // 7 x B  (d stacked with the ppf features)
  MatX centered;  // 3 x B  (true coordinates)
  MatX f0;        // 3 x S  (previous normals of node_ids)
  std::vector<double> edge_scale;  // S, mean edge length per neighborhood

  int num_nodes() const { return static_cast<int>(node_ids.size()); }
  std::int64_t num_edges() const { return static_cast<std::int64_t>(edge_dst.size()); }
};

/// Contiguous node block [node_begin, node_end).
NeighborhoodBatch make_batch(const PointCloud& cloud, const NeighborGraph& graph,
                             const CenteredNeighborhoods& centered,
                             const std::vector<Vec3>& prev_normals,
                             int node_begin, int node_end);

/// Arbitrary node subset (training subsample).
NeighborhoodBatch make_batch(const PointCloud& cloud, const NeighborGraph& graph,
                             const CenteredNeighborhoods& centered,
                             const std::vector<Vec3>& prev_normals,
                             std::span<const int> node_ids);

/// In-place variant for block streaming: reuses the batch's buffers when the
/// geometry matches the previous fill.
void fill_batch(const PointCloud& cloud, const NeighborGraph& graph,
                const CenteredNeighborhoods& centered,
                const std::vector<Vec3>& prev_normals,
                std::span<const int> node_ids, NeighborhoodBatch& batch);

/// Forward intermediates, retained for the backward pass. Also serves as a
/// reusable workspace for inference blocks: buffers keep their allocations
/// across blocks of equal geometry.
///
/// The first layer of every edge MLP is evaluated in two parts: the node
/// feature columns of W hit each node once (P), the geometry columns hit
/// each edge (A), and A gets P broadcast over its segment. Same split for
/// the kernel MLP with (rotated offset | theta).
struct GnnTape {
  MatX P[3], A[3], M[3], E[3];  // edge stage per round
  MatX S[3], G[3], H[3], F[3];  // node stage per round
  MatX rotd;                    // 3 x B rotated offsets
  MatX ktheta;                  // 8 x S kernel parameters as consumed
  MatX kp, ka, km, kw;          // kernel stage
  std::vector<Mat3> rot;        // per node
};

/// Three message-passing rounds. Permutation of neighbor order cannot change
/// the result because batches inherit the graph's canonical edge order.
NodeHead message_rounds(const NeighborhoodBatch& batch,
                        const nn::ModelParams& params, GnnTape* tape);

/// Raw per-edge kernel outputs w_ij = psi([R_i (p_j - p_i); theta_i]).
/// Rotations come from quat_to_rot of the head's quaternions.
VecX kernel_weights(const NeighborhoodBatch& batch, const NodeHead& head,
                    const nn::ModelParams& params, GnnTape* tape);

/// Reverse pass through the kernel MLP. Accumulates psi's parameter
/// gradients, adds the per-node theta gradients into dTheta and returns the
/// per-node rotation gradients (sum over edges of drot d^T).
void kernel_backward(const NeighborhoodBatch& batch, nn::ModelParams& params,
                     const GnnTape& tape, const VecX& dRaw, MatX& dTheta,
                     std::vector<Mat3>& dRot);

/// Reverse pass through the three rounds given head gradients. Previous
/// normals are iteration inputs and treated as constants, so nothing flows
/// upstream; all parameter gradients are accumulated into `params`.
void gnn_backward(const NeighborhoodBatch& batch, nn::ModelParams& params,
                  const GnnTape& tape, const MatX& dTheta, const MatX& dQuat);

/// Convenience composition used by training and tests: dRaw -> kernel ->
/// rotations -> quaternions -> message rounds.
void backward_from_raw(const NeighborhoodBatch& batch, nn::ModelParams& params,
                       const GnnTape& tape, const NodeHead& head,
                       const VecX& dRaw);

/// Whole-graph wrappers (small inputs and tests; the estimator streams node
/// blocks instead).
NodeHead message_rounds(const PointCloud& cloud, const NeighborGraph& graph,
                        const std::vector<Vec3>& prev_normals,
                        const nn::ModelParams& params);
VecX kernel_weights(const PointCloud& cloud, const NeighborGraph& graph,
                    const std::vector<Vec3>& prev_normals, const NodeHead& head,
                    const nn::ModelParams& params);

}  // namespace iternorm
