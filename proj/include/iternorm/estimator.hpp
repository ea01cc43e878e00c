#pragma once

#include <optional>
#include <vector>

#include "iternorm/linalg3.hpp"
#include "iternorm/model.hpp"

namespace iternorm {

struct EstimatorConfig {
  NeighborGraph::Mode mode = NeighborGraph::Mode::Knn;
  int k = 64;
  double r = 0.0;
  int iters = 4;  // L
  double reg_scale = 1e-9;   // eps = max(reg_scale * trace(C), reg_floor)
  double reg_floor = 1e-12;
  double clip_tau = 1e3;     // entrywise clip on dC in the backward pass
  double gap_floor = 1e-6;   // eigen-gap floor inside sym_eig3_backward
  bool deterministic = true;
  std::uint64_t seed = 0;
  bool snapshots = false;
};

/// Estimated normals plus the eigenvalues of each regularized covariance
/// (ascending). Snapshots, when requested, store the normals after every
/// iteration including the PCA initialization.
struct NormalField {
  std::vector<Vec3> normals;
  MatX eigvals;  // 3 x m
  std::vector<std::vector<Vec3>> snapshots;
};

/// C(i) = sum_j w_ij x_ij x_ij^T over each node's edges (canonical order).
/// Weights are expected to be the per-segment softmax outputs.
std::vector<Mat3> weighted_covariances(const CenteredNeighborhoods& centered,
                                       const VecX& weights,
                                       std::span<const std::int64_t> offsets);

/// Smallest-eigenvalue eigenvectors under the module sign convention.
std::vector<Vec3> extract_normals(std::span<const SymEigResult> eig);

/// Uniform-weight plane fit per neighborhood: iteration 0 of the algorithm.
NormalField pca_baseline(const PointCloud& cloud, const NeighborGraph& graph,
                         const EstimatorConfig& cfg = {});
NormalField pca_baseline(const PointCloud& cloud, int k);

/// Per-edge tensors of one re-weighting iteration, exposed for debugging.
struct EdgeState {
  MatX centered;
  MatX ppf;
  VecX raw_weights;
  VecX softmax_weights;
};

struct IterationOptions {
  double reg_scale = 1e-9;
  double reg_floor = 1e-12;
  bool training = false;
  double dropout_p = 0.0;
  std::uint64_t dropout_seed = 0;
};

/// One full re-weighting pass over all nodes (GNN -> rotations -> kernel ->
/// softmax -> weighted covariances -> regularize -> eigensolve -> extract),
/// streamed over node blocks in parallel.
void reweight_iteration(const PointCloud& cloud, const NeighborGraph& graph,
                        const CenteredNeighborhoods& centered,
                        const std::vector<Vec3>& prev_normals,
                        const nn::ModelParams& params,
                        const IterationOptions& opts,
                        std::vector<Vec3>& out_normals, MatX* out_eigvals,
                        EdgeState* dump = nullptr);

struct EstimateTiming {
  double graph_s = 0.0;
  double init_s = 0.0;
  double iters_s = 0.0;
};

/// Algorithm: build graph, PCA-initialize, then run cfg.iters re-weighting
/// iterations. params may be null only when iters == 0. Radius graphs fall
/// back to self + 2 nearest neighbors on underpopulated nodes.
NormalField estimate(const PointCloud& cloud, const EstimatorConfig& cfg,
                     const nn::ModelParams* params,
                     EstimateTiming* timing = nullptr);

}  // namespace iternorm
