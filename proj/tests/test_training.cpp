#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "iternorm/synth.hpp"
#include "iternorm/training.hpp"
#include "oracles.hpp"

using namespace iternorm;
namespace fs = std::filesystem;

namespace {

PointCloud noisy_plane(int n, std::uint64_t seed, double noise) {
  SynthSpec spec;
  spec.shape = SynthShape::Plane;
  spec.n_points = n;
  spec.sigma = noise;
  spec.seed = seed;
  return synth_generate(spec);
}

fs::path temp_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / "iternorm_test" / name;
  fs::create_directories(dir);
  return dir;
}

// small synthetic dataset on disk for train() tests
std::string write_tiny_dataset(const std::string& name, std::uint64_t seed0) {
  auto dir = temp_dir(name);
  fs::remove_all(dir);
  SynthDatasetSpec spec;
  std::vector<SynthCloud> clouds;
  for (int i = 0; i < 5; ++i) {
    SynthCloud c;
    c.stem = "c" + std::to_string(i);
    c.spec.shape = i % 2 ? SynthShape::Sphere : SynthShape::Box;
    c.spec.n_points = 600;
    c.spec.sigma = i >= 3 ? 0.005 : 0.0;
    c.spec.seed = seed0 + i;
    clouds.push_back(c);
  }
  spec.categories.emplace_back("mixed", clouds);
  write_synth_dataset(spec, dir.string(), 200);
  return dir.string();
}

}  // namespace

TEST_SUITE_BEGIN("training");

TEST_CASE("sign_flip_loss values") {
  std::vector<Vec3> gt{Vec3(0, 0, 1), Vec3(1, 0, 0)};
  CHECK(sign_flip_loss(gt, gt, {}) == 0.0);

  std::vector<Vec3> flipped{Vec3(0, 0, -1), Vec3(-1, 0, 0)};
  CHECK(sign_flip_loss(flipped, gt, {}) == 0.0);

  std::vector<Vec3> ortho{Vec3(1, 0, 0), Vec3(0, 1, 0)};
  CHECK(sign_flip_loss(ortho, gt, {}) ==
        doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));

  std::vector<int> subset{0};
  CHECK(sign_flip_loss(ortho, gt, subset) ==
        doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("loss is invariant to independent sign flips and bounded") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Vec3> est(64), gt(64);
  for (int i = 0; i < 64; ++i) {
    est[i] = Vec3(g(rng), g(rng), g(rng)).normalized();
    gt[i] = Vec3(g(rng), g(rng), g(rng)).normalized();
  }
  const double base = sign_flip_loss(est, gt, {});
  CHECK(base >= 0.0);
  CHECK(base <= std::sqrt(2.0) + 1e-12);

  auto est2 = est;
  auto gt2 = gt;
  for (int i = 0; i < 64; ++i) {
    if (rng() & 1) est2[i] = -est2[i];
    if (rng() & 2) gt2[i] = -gt2[i];
  }
  CHECK(sign_flip_loss(est2, gt2, {}) == doctest::Approx(base).epsilon(1e-14));
}

TEST_CASE("sign_flip_loss gradient matches finite differences") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Vec3> est(10), gt(10);
  for (int i = 0; i < 10; ++i) {
    est[i] = Vec3(g(rng), g(rng), g(rng)).normalized();
    gt[i] = Vec3(g(rng), g(rng), g(rng)).normalized();
  }
  std::vector<int> subset{1, 3, 7};
  std::vector<Vec3> grad;
  sign_flip_loss_backward(est, gt, subset, grad);

  const double h = 1e-7;
  for (int i : subset) {
    for (int c = 0; c < 3; ++c) {
      auto ep = est, em = est;
      ep[i][c] += h;
      em[i][c] -= h;
      const double fd =
          (sign_flip_loss(ep, gt, subset) - sign_flip_loss(em, gt, subset)) /
          (2 * h);
      CHECK(oracles::rel_err(grad[i][c], fd) < 1e-5);
    }
  }
  CHECK(grad[0].norm() == 0.0);  // outside the subset
}

TEST_CASE("zero learning rate leaves parameters unchanged, losses reproducible") {
  PointCloud cloud = normalize_cloud(noisy_plane(400, 3, 0.004));
  TrainContext ctx = TrainContext::build("plane", cloud, 8);

  TrainConfig cfg;
  cfg.k = 8;
  cfg.allow_small_k = true;
  cfg.iters = 2;
  cfg.points_per_step = 64;
  cfg.lr = 0.0;
  cfg.seed = 4;

  nn::ModelParams params;
  params.init(5);
  const MatX w0 = params.psi.l0.W;
  auto losses1 = train_step(ctx, params, cfg, 0, 0);
  CHECK((params.psi.l0.W - w0).norm() == 0.0);

  nn::ModelParams params2;
  params2.init(5);
  auto losses2 = train_step(ctx, params2, cfg, 0, 0);
  CHECK(losses1 == losses2);
}

TEST_CASE("training gradient matches finite differences end to end") {
  PointCloud cloud = normalize_cloud(noisy_plane(50, 6, 0.01));
  TrainContext ctx = TrainContext::build("tiny", cloud, 8);

  nn::ModelParams params;
  params.init(7);
  std::vector<int> sample{0, 5, 11, 17, 23, 31, 40, 49};

  IterationOptions opts;  // no dropout: keeps the loss differentiable
  params.zero_grads();
  sampled_loss_backward(ctx, ctx.init_normals, sample, params, opts,
                        /*clip_tau=*/1e12, /*gap_floor=*/1e-12);

  auto loss = [&](const nn::ModelParams& p) {
    return sampled_loss(ctx, ctx.init_normals, sample, p, opts);
  };

  // check the two strongest-gradient entries of every layer
  const double h = 1e-6;
  double worst = 0.0;
  int checked = 0;
  for (nn::Linear* l : params.linears()) {
    std::vector<std::pair<double, int>> ranked;
    for (int e = 0; e < l->W.size(); ++e)
      ranked.emplace_back(-std::abs(l->gW.data()[e]), e);
    std::sort(ranked.begin(), ranked.end());
    for (int trial = 0; trial < 2 && trial < static_cast<int>(ranked.size());
         ++trial) {
      const int e = ranked[trial].second;
      const double keep = l->W.data()[e];
      l->W.data()[e] = keep + h;
      const double fp = loss(params);
      l->W.data()[e] = keep - h;
      const double fm = loss(params);
      l->W.data()[e] = keep;
      const double fd = (fp - fm) / (2 * h);
      if (std::abs(fd) < 1e-10 && std::abs(l->gW.data()[e]) < 1e-10) continue;
      worst = std::max(worst, oracles::rel_err(l->gW.data()[e], fd));
      ++checked;
    }
  }
  CHECK(checked >= 20);
  CHECK(worst < 1e-3);
}

TEST_CASE("a single plane cloud trains below its PCA-init loss quickly") {
  PointCloud cloud = normalize_cloud(noisy_plane(200, 9, 0.008));
  TrainContext ctx = TrainContext::build("plane", cloud, 8);

  TrainConfig cfg;
  cfg.k = 8;
  cfg.allow_small_k = true;
  cfg.iters = 1;
  cfg.points_per_step = 128;
  cfg.lr = 3e-3;
  cfg.dropout = 0.0;
  cfg.seed = 10;

  nn::ModelParams params;
  params.init(11);

  // measure on the full fixed point set so per-step sampling noise cannot
  // mask the trend
  IterationOptions opts;
  std::vector<int> all;
  for (int i = 0; i < ctx.cloud.size(); ++i) all.push_back(i);
  const double init_loss = sampled_loss(ctx, ctx.init_normals, all, params, opts);

  double best = init_loss;
  for (int step = 0; step < 50 && best >= init_loss; ++step) {
    train_step(ctx, params, cfg, step, 0);
    best = std::min(best,
                    sampled_loss(ctx, ctx.init_normals, all, params, opts));
  }
  CHECK(best < init_loss);
}

TEST_CASE("train dry run writes a loadable checkpoint") {
  const std::string ds = write_tiny_dataset("tinyds", 100);
  TrainConfig cfg;
  cfg.train_dir = ds;
  cfg.epochs = 1;
  cfg.k = 8;
  cfg.allow_small_k = true;
  cfg.iters = 2;
  cfg.points_per_step = 64;
  cfg.seed = 12;
  cfg.out_dir = temp_dir("run_dry").string();
  cfg.eval_iters = 2;

  TrainResult res = train(cfg);
  CHECK(res.epochs_run == 1);
  nn::ModelParams params;
  const std::uint64_t hash = nn::load_checkpoint(res.best_checkpoint, params);
  CHECK(hash == cfg.config_hash());
  CHECK(fs::exists(cfg.out_dir + "/metrics.csv"));
}

TEST_CASE("resume reproduces uninterrupted training bitwise") {
  const std::string ds = write_tiny_dataset("resume_ds", 200);
  auto base = [&](const std::string& out) {
    TrainConfig cfg;
    cfg.train_dir = ds;
    cfg.k = 8;
    cfg.allow_small_k = true;
    cfg.iters = 2;
    cfg.points_per_step = 48;
    cfg.seed = 13;
    cfg.checkpoint_every = 1;
    cfg.out_dir = temp_dir(out).string();
    cfg.eval_iters = 2;
    return cfg;
  };

  TrainConfig two = base("run_two");
  two.epochs = 2;
  TrainResult full = train(two);

  TrainConfig one = base("run_one");
  one.epochs = 1;
  TrainResult half = train(one);

  TrainConfig resumed = base("run_resume");
  resumed.epochs = 2;
  resumed.resume = half.last_checkpoint;
  TrainResult cont = train(resumed);

  nn::ModelParams a, b;
  nn::load_checkpoint(full.last_checkpoint, a);
  nn::load_checkpoint(cont.last_checkpoint, b);
  for (std::size_t i = 0; i < a.linears().size(); ++i) {
    CHECK(a.linears()[i]->W == b.linears()[i]->W);
    CHECK(a.linears()[i]->vW == b.linears()[i]->vW);
  }
  CHECK(a.step == b.step);
}

TEST_CASE("a checkpoint trained at one k runs at another") {
  const std::string ds = write_tiny_dataset("transfer_ds", 300);
  TrainConfig cfg;
  cfg.train_dir = ds;
  cfg.epochs = 1;
  cfg.k = 8;
  cfg.allow_small_k = true;
  cfg.iters = 1;
  cfg.points_per_step = 32;
  cfg.seed = 14;
  cfg.out_dir = temp_dir("run_transfer").string();
  cfg.eval_iters = 1;
  TrainResult res = train(cfg);

  nn::ModelParams params;
  nn::load_checkpoint(res.last_checkpoint, params);
  PointCloud cloud = normalize_cloud(noisy_plane(300, 15, 0.003));
  EstimatorConfig ecfg;
  ecfg.k = 16;  // different neighborhood size
  ecfg.iters = 2;
  NormalField f = estimate(cloud, ecfg, &params);
  CHECK(rmse_angle(f.normals, cloud.gt_normals, {}) < 45.0);
}

TEST_CASE("small k is refused without the override") {
  TrainConfig cfg;
  cfg.train_dir = "/nonexistent";
  cfg.k = 16;
  CHECK_THROWS_AS(train(cfg), NumericError);
}

TEST_SUITE_END();
