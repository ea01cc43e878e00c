#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "iternorm/parallel.hpp"
#include "iternorm/training.hpp"

namespace iternorm {

namespace fs = std::filesystem;

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  a ^= b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2);
  a *= 0xff51afd7ed558ccdull;
  a ^= a >> 33;
  return a;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t epoch,
                          std::uint64_t cloud, std::uint64_t salt) {
  return mix(mix(mix(seed, epoch + 1), cloud + 1), salt);
}

}  // namespace

TrainConfig TrainConfig::parse_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config: " + path);
  TrainConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      if (line.find_first_not_of(" \t\r") != std::string::npos)
        throw IoError(path + ":" + std::to_string(lineno) +
                      ": expected key = value");
      continue;
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    try {
      if (key == "train_dir") cfg.train_dir = val;
      else if (key == "val_dir") cfg.val_dir = val;
      else if (key == "val_split") cfg.val_split = std::stod(val);
      else if (key == "epochs") cfg.epochs = std::stoi(val);
      else if (key == "k") cfg.k = std::stoi(val);
      else if (key == "iters") cfg.iters = std::stoi(val);
      else if (key == "points_per_step") cfg.points_per_step = std::stoi(val);
      else if (key == "lr") cfg.lr = std::stod(val);
      else if (key == "rho") cfg.rho = std::stod(val);
      else if (key == "eps") cfg.eps = std::stod(val);
      else if (key == "dropout") cfg.dropout = std::stod(val);
      else if (key == "seed") cfg.seed = std::stoull(val);
      else if (key == "out_dir") cfg.out_dir = val;
      else if (key == "checkpoint_every") cfg.checkpoint_every = std::stoi(val);
      else if (key == "allow_small_k") cfg.allow_small_k = (val == "1" || val == "true");
      else if (key == "resume") cfg.resume = val;
      else if (key == "clip_tau") cfg.clip_tau = std::stod(val);
      else if (key == "gap_floor") cfg.gap_floor = std::stod(val);
      else if (key == "eval_iters") cfg.eval_iters = std::stoi(val);
      else throw IoError(path + ":" + std::to_string(lineno) + ": unknown key " + key);
    } catch (const std::invalid_argument&) {
      throw IoError(path + ":" + std::to_string(lineno) + ": bad value for " + key);
    }
  }
  if (cfg.epochs < 1) throw IoError(path + ": epochs must be >= 1");
  if (cfg.iters < 1) throw IoError(path + ": iters must be >= 1");
  if (cfg.dropout < 0.0 || cfg.dropout >= 1.0)
    throw IoError(path + ": dropout must be in [0, 1)");
  return cfg;
}

std::uint64_t TrainConfig::config_hash() const {
  std::ostringstream ss;
  ss << "iternorm-v1;k=" << k << ";L=" << iters << ";lr=" << lr << ";rho=" << rho
     << ";eps=" << eps << ";dropout=" << dropout << ";seed=" << seed;
  return fnv1a(ss.str());
}

double sign_flip_loss(const std::vector<Vec3>& est, const std::vector<Vec3>& gt,
                      std::span<const int> subset) {
  if (est.size() != gt.size()) throw NumericError("sign_flip_loss: size mismatch");
  std::vector<int> all;
  if (subset.empty()) {
    all.resize(est.size());
    for (std::size_t i = 0; i < est.size(); ++i) all[i] = static_cast<int>(i);
    subset = all;
  }
  if (subset.empty()) throw NumericError("sign_flip_loss: empty subset");
  double acc = 0.0;
  for (int i : subset) {
    const double dm = (est[i] - gt[i]).norm();
    const double dp = (est[i] + gt[i]).norm();
    acc += std::min(dm, dp);
  }
  return acc / static_cast<double>(subset.size());
}

void sign_flip_loss_backward(const std::vector<Vec3>& est,
                             const std::vector<Vec3>& gt,
                             std::span<const int> subset,
                             std::vector<Vec3>& dEst) {
  dEst.assign(est.size(), Vec3::Zero());
  const double inv = 1.0 / static_cast<double>(subset.size());
  for (int i : subset) {
    const Vec3 vm = est[i] - gt[i];
    const Vec3 vp = est[i] + gt[i];
    const double dm = vm.norm(), dp = vp.norm();
    const Vec3& v = dm <= dp ? vm : vp;  // tie -> unflipped branch
    const double n = std::min(dm, dp);
    if (n > 0.0) dEst[i] = v / n * inv;
  }
}

TrainContext TrainContext::build(const std::string& name, PointCloud cloud,
                                 int k, const EstimatorConfig& cfg) {
  TrainContext ctx;
  ctx.name = name;
  ctx.cloud = std::move(cloud);
  ctx.graph = build_knn_graph(ctx.cloud, k);
  ctx.centered = centered_coords(ctx.cloud, ctx.graph);
  ctx.init_normals = pca_baseline(ctx.cloud, ctx.graph, cfg).normals;
  return ctx;
}

namespace {

struct SampledForward {
  NeighborhoodBatch batch;
  GnnTape tape;
  NodeHead head;
  VecX raw, dropped, soft;
  std::vector<std::uint8_t> mask;
  std::vector<SymEigResult> eig;
  std::vector<Vec3> normals;  // one per sampled node
  double loss = 0.0;
};

void run_sampled_forward(const TrainContext& ctx, const std::vector<Vec3>& state,
                         std::span<const int> sample,
                         const nn::ModelParams& params,
                         const IterationOptions& opts, SampledForward& fwd) {
  if (sample.empty()) throw NumericError("sampled_loss: empty sample");
  fwd.batch = make_batch(ctx.cloud, ctx.graph, ctx.centered, state, sample);
  fwd.head = message_rounds(fwd.batch, params, &fwd.tape);
  fwd.raw = kernel_weights(fwd.batch, fwd.head, params, &fwd.tape);
  nn::dropout_edges(fwd.raw, opts.dropout_p, opts.dropout_seed, opts.training,
                    fwd.dropped, fwd.mask, fwd.batch.edge_global);
  nn::segment_softmax(fwd.dropped, fwd.batch.offsets, fwd.soft);

  const int S = fwd.batch.num_nodes();
  fwd.eig.resize(S);
  fwd.normals.resize(S);
  double acc = 0.0;
  for (int s = 0; s < S; ++s) {
    Mat3 C = Mat3::Zero();
    for (std::int64_t t = fwd.batch.offsets[s]; t < fwd.batch.offsets[s + 1];
         ++t) {
      const Vec3 x = fwd.batch.centered.col(t);
      C.noalias() += fwd.soft[t] * x * x.transpose();
    }
    const double eps = std::max(opts.reg_scale * C.trace(), opts.reg_floor);
    fwd.eig[s] = sym_eig3(regularize(C, eps));
    fwd.normals[s] = fwd.eig[s].eigvecs.col(0);

    const Vec3& gt = ctx.cloud.gt_normals[fwd.batch.node_ids[s]];
    acc += std::min((fwd.normals[s] - gt).norm(), (fwd.normals[s] + gt).norm());
  }
  fwd.loss = acc / static_cast<double>(S);
}

}  // namespace

double sampled_loss(const TrainContext& ctx, const std::vector<Vec3>& state,
                    std::span<const int> sample, const nn::ModelParams& params,
                    const IterationOptions& opts,
                    std::vector<Vec3>* sampled_normals) {
  SampledForward fwd;
  run_sampled_forward(ctx, state, sample, params, opts, fwd);
  if (sampled_normals) *sampled_normals = fwd.normals;
  return fwd.loss;
}

double sampled_loss_backward(const TrainContext& ctx,
                             const std::vector<Vec3>& state,
                             std::span<const int> sample,
                             nn::ModelParams& params,
                             const IterationOptions& opts, double clip_tau,
                             double gap_floor) {
  SampledForward fwd;
  run_sampled_forward(ctx, state, sample, params, opts, fwd);

  const int S = fwd.batch.num_nodes();
  const double inv = 1.0 / static_cast<double>(S);
  VecX dSoft(fwd.batch.num_edges());
  for (int s = 0; s < S; ++s) {
    const Vec3& gt = ctx.cloud.gt_normals[fwd.batch.node_ids[s]];
    const Vec3 vm = fwd.normals[s] - gt;
    const Vec3 vp = fwd.normals[s] + gt;
    const double dm = vm.norm(), dp = vp.norm();
    Vec3 dn = Vec3::Zero();
    const double n = std::min(dm, dp);
    if (n > 0.0) dn = (dm <= dp ? vm : vp) / n * inv;

    // loss depends on the smallest-eigenvalue column only; dVals = 0
    Mat3 dU = Mat3::Zero();
    dU.col(0) = dn;
    Mat3 dC = clip_gradient(
        sym_eig3_backward(fwd.eig[s], dU, Vec3::Zero(), gap_floor), clip_tau);
    for (std::int64_t t = fwd.batch.offsets[s]; t < fwd.batch.offsets[s + 1];
         ++t) {
      const Vec3 x = fwd.batch.centered.col(t);
      dSoft[t] = x.dot(dC * x);
    }
  }

  VecX dDropped;
  nn::segment_softmax_backward(fwd.soft, fwd.batch.offsets, dSoft, dDropped);
  for (Eigen::Index i = 0; i < dDropped.size(); ++i)
    if (fwd.mask[i]) dDropped[i] = 0.0;
  backward_from_raw(fwd.batch, params, fwd.tape, fwd.head, dDropped);
  return fwd.loss;
}

std::vector<double> train_step(TrainContext& ctx, nn::ModelParams& params,
                               const TrainConfig& cfg, int epoch,
                               int cloud_index) {
  if (!ctx.cloud.has_normals())
    throw IoError("train_step: cloud " + ctx.name + " has no ground truth");

  // sample query points for this step (fixed across the step's iterations)
  const int m = ctx.cloud.size();
  const int S = std::min(cfg.points_per_step, m);
  std::vector<int> all(m);
  for (int i = 0; i < m; ++i) all[i] = i;
  std::mt19937_64 rng(derive_seed(cfg.seed, epoch, cloud_index, 0x5a));
  for (int i = 0; i < S; ++i) {
    std::uniform_int_distribution<int> pick(i, m - 1);
    std::swap(all[i], all[pick(rng)]);
  }
  std::vector<int> sample(all.begin(), all.begin() + S);
  std::sort(sample.begin(), sample.end());

  IterationOptions opts;
  opts.training = true;
  opts.dropout_p = cfg.dropout;

  const nn::RmsPropConfig optim{cfg.lr, cfg.rho, cfg.eps};
  std::vector<double> losses;
  losses.reserve(cfg.iters);
  std::vector<Vec3> state = ctx.init_normals;
  std::vector<Vec3> next;
  for (int l = 1; l <= cfg.iters; ++l) {
    opts.dropout_seed = derive_seed(cfg.seed, epoch, cloud_index, 0xd0 + l);
    // advance the detached full-cloud state with the pre-step parameters
    reweight_iteration(ctx.cloud, ctx.graph, ctx.centered, state, params, opts,
                       next, nullptr);
    const double loss = sampled_loss_backward(ctx, state, sample, params, opts,
                                              cfg.clip_tau, cfg.gap_floor);
    if (!std::isfinite(loss))
      throw NumericError("train_step: non-finite loss on cloud " + ctx.name +
                         " at iteration " + std::to_string(l));
    nn::rmsprop_step(params, optim);
    state.swap(next);
    losses.push_back(loss);
  }
  return losses;
}

namespace {

double validation_rmse(const std::vector<TrainContext>& val,
                       const nn::ModelParams& params, const TrainConfig& cfg) {
  if (val.empty()) return 0.0;
  IterationOptions opts;  // inference: no dropout
  double acc = 0.0;
  for (const auto& ctx : val) {
    std::vector<Vec3> state = ctx.init_normals, next;
    for (int l = 0; l < cfg.eval_iters; ++l) {
      reweight_iteration(ctx.cloud, ctx.graph, ctx.centered, state, params,
                         opts, next, nullptr);
      state.swap(next);
    }
    acc += rmse_angle(state, ctx.cloud.gt_normals, ctx.cloud.eval_idx);
  }
  return acc / static_cast<double>(val.size());
}

std::vector<std::pair<std::string, std::string>> scan_clouds(
    const std::string& dir) {
  std::vector<std::pair<std::string, std::string>> out;  // (cloud dir, stem)
  for (const DatasetCategory& cat : find_dataset_categories(dir))
    for (const std::string& stem : read_stem_list(cat.list_file))
      out.emplace_back(cat.dir, stem);
  std::sort(out.begin(), out.end());
  return out;
}

TrainContext load_context(const std::string& dir, const std::string& stem,
                          int k) {
  const fs::path base = dir;
  PointCloud cloud = load_xyz((base / (stem + ".xyz")).string());
  cloud.gt_normals =
      load_normals((base / (stem + ".normals")).string(), cloud.size());
  const fs::path pidx = base / (stem + ".pidx");
  if (fs::exists(pidx)) cloud.eval_idx = load_pidx(pidx.string());
  return TrainContext::build(stem, normalize_cloud(cloud), k);
}

}  // namespace

TrainResult train(const TrainConfig& cfg) {
  if (cfg.k < 30 && !cfg.allow_small_k)
    throw NumericError(
        "train: k < 30 makes training unstable; set allow_small_k to override");
  if (cfg.train_dir.empty()) throw IoError("train: train_dir not set");

  auto stems = scan_clouds(cfg.train_dir);
  if (stems.empty()) throw IoError("train: no clouds in " + cfg.train_dir);

  std::vector<TrainContext> train_ctx, val_ctx;
  if (!cfg.val_dir.empty()) {
    for (const auto& [dir, stem] : stems)
      train_ctx.push_back(load_context(dir, stem, cfg.k));
    for (const auto& [dir, stem] : scan_clouds(cfg.val_dir))
      val_ctx.push_back(load_context(dir, stem, cfg.k));
  } else {
    // deterministic split of the training clouds
    std::vector<int> order(stems.size());
    for (std::size_t i = 0; i < stems.size(); ++i) order[i] = static_cast<int>(i);
    std::mt19937_64 rng(derive_seed(cfg.seed, 0, 0, 0x51));
    std::shuffle(order.begin(), order.end(), rng);
    const int n_val = std::max(
        1, static_cast<int>(std::lround(cfg.val_split * stems.size())));
    for (std::size_t i = 0; i < order.size(); ++i) {
      const auto& [dir, stem] = stems[order[i]];
      auto ctx = load_context(dir, stem, cfg.k);
      (static_cast<int>(i) < n_val ? val_ctx : train_ctx).push_back(std::move(ctx));
    }
    if (train_ctx.empty())
      throw IoError("train: validation split consumed every cloud");
  }

  fs::create_directories(cfg.out_dir);
  const std::string metrics_path = (fs::path(cfg.out_dir) / "metrics.csv").string();
  std::ofstream metrics(metrics_path, cfg.resume.empty() ? std::ios::trunc
                                                         : std::ios::app);
  if (!metrics) throw IoError("cannot write " + metrics_path);
  if (cfg.resume.empty()) metrics << "epoch,iteration,loss,val_rmse_deg\n";

  nn::ModelParams params;
  int first_epoch = 0;
  if (!cfg.resume.empty()) {
    const std::uint64_t stored = nn::load_checkpoint(cfg.resume, params);
    if (stored != cfg.config_hash())
      std::cerr << "warning: resume checkpoint config hash differs\n";
    const std::uint64_t steps_per_epoch =
        static_cast<std::uint64_t>(train_ctx.size()) * cfg.iters;
    first_epoch = steps_per_epoch
                      ? static_cast<int>(params.step / steps_per_epoch)
                      : 0;
  } else {
    params.init(cfg.seed);
  }

  TrainResult result;
  result.best_val_rmse_deg = std::numeric_limits<double>::infinity();
  const std::string best_path = (fs::path(cfg.out_dir) / "ckpt_best.bin").string();
  const std::string last_path = (fs::path(cfg.out_dir) / "ckpt_last.bin").string();

  for (int epoch = first_epoch; epoch < cfg.epochs; ++epoch) {
    std::vector<int> order(train_ctx.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::mt19937_64 rng(derive_seed(cfg.seed, epoch, 0, 0x0e));
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<double> loss_sum(cfg.iters, 0.0);
    for (int ci : order) {
      const auto losses = train_step(train_ctx[ci], params, cfg, epoch, ci);
      for (int l = 0; l < cfg.iters; ++l) loss_sum[l] += losses[l];
    }
    const double val = validation_rmse(val_ctx, params, cfg);
    for (int l = 0; l < cfg.iters; ++l)
      metrics << epoch << "," << (l + 1) << ","
              << loss_sum[l] / static_cast<double>(train_ctx.size()) << ","
              << val << "\n";
    metrics.flush();

    if (val < result.best_val_rmse_deg) {
      result.best_val_rmse_deg = val;
      nn::save_checkpoint(best_path, params, cfg.config_hash());
    }
    if (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0) {
      nn::save_checkpoint((fs::path(cfg.out_dir) /
                           ("ckpt_epoch" + std::to_string(epoch + 1) + ".bin"))
                              .string(),
                          params, cfg.config_hash());
    }
    result.epochs_run = epoch + 1;
  }

  nn::save_checkpoint(last_path, params, cfg.config_hash());
  if (!fs::exists(best_path)) nn::save_checkpoint(best_path, params, cfg.config_hash());
  result.best_checkpoint = best_path;
  result.last_checkpoint = last_path;
  return result;
}

}  // namespace iternorm
