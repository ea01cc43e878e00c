#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "iternorm/common.hpp"

namespace iternorm::nn {

/// One fully-connected layer plus its gradient and RMSProp accumulators.
/// Feature blocks are column-per-item: X is (in x B), Y is (out x B).
struct Linear {
  std::string name;
  MatX W;  // out x in
  VecX b;
  MatX gW;
  VecX gb;
  MatX vW;
  VecX vb;

  void init(const std::string& layer_name, int out, int in, std::mt19937_64& rng);
  int fan_in() const { return static_cast<int>(W.cols()); }
  int fan_out() const { return static_cast<int>(W.rows()); }
  std::int64_t num_parameters() const { return W.size() + b.size(); }
};

void linear_forward(const Linear& lin, const MatX& X, MatX& Y);

/// Accumulates gW += dY Xᵀ and gb += Σ_cols dY; writes dX = Wᵀ dY when
/// dX != nullptr.
void linear_backward(Linear& lin, const MatX& X, const MatX& dY, MatX* dX);

void relu_forward(const MatX& A, MatX& Y);
/// In place: zeroes dY where the pre-activation A was <= 0.
void relu_backward(const MatX& A, MatX& dY);

/// Two linear layers separated by a ReLU (the only MLP shape in the model).
struct Mlp {
  Linear l0, l1;
  std::int64_t num_parameters() const {
    return l0.num_parameters() + l1.num_parameters();
  }
};

/// All trainable weights: message MLPs h1..h3, node MLPs g1..g3 and the
/// kernel MLP psi, with layer widths fixed by the architecture.
struct ModelParams {
  // layer widths
  static constexpr int kNodeFeat0 = 3;   // initial node feature: previous normal
  static constexpr int kEdgeHidden = 32;
  static constexpr int kEdgeOut = 16;
  static constexpr int kNodeHidden = 32;
  static constexpr int kNodeOut = 8;
  static constexpr int kHeadOut = 12;  // 8 kernel parameters + 4 quaternion
  static constexpr int kTheta = 8;
  static constexpr int kQuat = 4;
  static constexpr int kPsiHidden = 64;
  static constexpr int kEdgeGeom = 7;  // d_ij (3) + ppf (4)

  Mlp h1, g1, h2, g2, h3, g3, psi;
  std::uint64_t step = 0;

  /// Glorot-uniform weights, zero biases; deterministic per seed.
  void init(std::uint64_t seed);

  std::vector<Linear*> linears();
  std::vector<const Linear*> linears() const;
  std::int64_t num_parameters() const;
  void zero_grads();
  bool grads_finite(std::string* offending = nullptr) const;
};

struct RmsPropConfig {
  double lr = 1e-3;
  double rho = 0.9;
  double eps = 1e-8;
};

/// v <- rho v + (1-rho) g²; theta <- theta - lr g/(sqrt(v)+eps); grads are
/// zeroed and the step counter advances. Throws NumericError naming the
/// offending layer if any gradient is non-finite (parameters untouched).
void rmsprop_step(ModelParams& params, const RmsPropConfig& cfg);

/// Exp-normalization with max subtraction within each segment
/// [offsets[i], offsets[i+1]). Throws NumericError on an empty segment.
void segment_softmax(const VecX& raw, std::span<const std::int64_t> offsets,
                     VecX& out);
void segment_softmax_backward(const VecX& softmax_out,
                              std::span<const std::int64_t> offsets,
                              const VecX& dOut, VecX& dRaw);

/// Per-segment arithmetic mean of edge feature columns into node columns.
void segment_mean(const MatX& edge_feats, std::span<const std::int64_t> offsets,
                  MatX& node_feats);
void segment_mean_backward(const MatX& dNode,
                           std::span<const std::int64_t> offsets, MatX& dEdge);

/// Zeroes each raw kernel output independently with probability p (training
/// mode only; identity otherwise). The mask is a pure function of the seed
/// and the entry's id (global_ids when given, else its position), so it does
/// not depend on how edges are batched. Returned for the backward pass.
void dropout_edges(const VecX& raw, double p, std::uint64_t seed, bool training,
                   VecX& out, std::vector<std::uint8_t>& mask,
                   std::span<const std::int64_t> global_ids = {});

/// Binary checkpoint (layout documented in docs/formats.md). Saves
/// parameters, optimizer state and the caller's config hash.
void save_checkpoint(const std::string& path, const ModelParams& params,
                     std::uint64_t config_hash);

/// Restores a checkpoint; returns the stored config hash. Throws IoError on
/// version mismatch or truncation. Shape mismatches against the fixed
/// architecture are errors too.
std::uint64_t load_checkpoint(const std::string& path, ModelParams& params);

}  // namespace iternorm::nn
