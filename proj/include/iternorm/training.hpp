#pragma once

#include <string>
#include <vector>

#include "iternorm/estimator.hpp"
#include "iternorm/metrics.hpp"

namespace iternorm {

struct TrainConfig {
  std::string train_dir;
  std::string val_dir;     // optional; when empty, val_split carves the
  double val_split = 0.25; // validation set out of the training clouds
  int epochs = 50;
  int k = 32;
  int iters = 8;  // unrolled re-weighting iterations during training
  int points_per_step = 512;
  double lr = 1e-3;
  double rho = 0.9;
  double eps = 1e-8;
  double dropout = 0.25;
  std::uint64_t seed = 1;
  std::string out_dir = "run";
  int checkpoint_every = 10;  // epochs; 0 disables periodic checkpoints
  bool allow_small_k = false; // k < 30 is refused unless set
  std::string resume;         // checkpoint to continue from
  double clip_tau = 1e3;
  double gap_floor = 1e-6;
  int eval_iters = 4;  // iterations used for validation RMSE

  static TrainConfig parse_file(const std::string& path);
  std::uint64_t config_hash() const;
};

/// Mean over `subset` of min(||est - gt||, ||est + gt||); ties take the
/// unflipped branch. Both inputs are expected unit length.
double sign_flip_loss(const std::vector<Vec3>& est, const std::vector<Vec3>& gt,
                      std::span<const int> subset);

/// Gradient of sign_flip_loss w.r.t. est, nonzero only on the subset.
void sign_flip_loss_backward(const std::vector<Vec3>& est,
                             const std::vector<Vec3>& gt,
                             std::span<const int> subset,
                             std::vector<Vec3>& dEst);

/// One training cloud with everything that survives across epochs.
struct TrainContext {
  std::string name;
  PointCloud cloud;  // normalized
  NeighborGraph graph;
  CenteredNeighborhoods centered;
  std::vector<Vec3> init_normals;  // PCA initialization (model independent)

  static TrainContext build(const std::string& name, PointCloud cloud, int k,
                            const EstimatorConfig& cfg = {});
};

/// Differentiable forward for a sampled node subset from a fixed previous
/// state. Returns the loss; fills `sampled_normals` when non-null.
double sampled_loss(const TrainContext& ctx, const std::vector<Vec3>& state,
                    std::span<const int> sample, const nn::ModelParams& params,
                    const IterationOptions& opts,
                    std::vector<Vec3>* sampled_normals = nullptr);

/// Forward + backward for the same computation; accumulates parameter
/// gradients (eigensolve backward runs with zero eigenvalue gradient, then
/// entrywise clipping at clip_tau). Returns the loss.
double sampled_loss_backward(const TrainContext& ctx,
                             const std::vector<Vec3>& state,
                             std::span<const int> sample,
                             nn::ModelParams& params,
                             const IterationOptions& opts, double clip_tau,
                             double gap_floor);

/// One pass of per-iteration training on a cloud: for l = 1..iters, advance
/// the detached full-cloud state, compute the loss on a sampled subset,
/// backpropagate and take an RMSProp step. Returns the per-iteration losses.
std::vector<double> train_step(TrainContext& ctx, nn::ModelParams& params,
                               const TrainConfig& cfg, int epoch,
                               int cloud_index);

struct TrainResult {
  std::string best_checkpoint;
  std::string last_checkpoint;
  double best_val_rmse_deg = 0.0;
  int epochs_run = 0;
};

/// Full training loop: epoch shuffling, per-cloud train_step, validation
/// RMSE after each epoch, model selection on the validation score, periodic
/// checkpoints and a metrics CSV under cfg.out_dir. Deterministic for a
/// fixed config (dropout and sampling seeds derive from epoch and cloud).
TrainResult train(const TrainConfig& cfg);

}  // namespace iternorm
