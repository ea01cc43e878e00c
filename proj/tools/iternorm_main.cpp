// iternorm: iterative surface normal estimation for unstructured point clouds.
//
// Subcommands: estimate, train, eval, synth, bench. Exit codes: 0 ok,
// 1 usage, 2 I/O error, 3 numerical failure.

#include <chrono>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "iternorm/estimator.hpp"
#include "iternorm/metrics.hpp"
#include "iternorm/parallel.hpp"
#include "iternorm/synth.hpp"
#include "iternorm/training.hpp"

namespace {

using namespace iternorm;

struct EstimateArgs {
  std::string input;
  std::string output;
  std::string model;
  bool pca = false;
  int k = 64;
  double r = 0.0;
  int iters = 4;
  std::string snapshots_dir;
};

int run_estimate(const EstimateArgs& a) {
  PointCloud cloud = normalize_cloud(load_xyz(a.input));

  EstimatorConfig cfg;
  cfg.k = a.k;
  if (a.r > 0.0) {
    cfg.mode = NeighborGraph::Mode::Radius;
    cfg.r = a.r;
  }
  cfg.iters = a.pca ? 0 : a.iters;
  cfg.snapshots = !a.snapshots_dir.empty();

  nn::ModelParams params;
  const nn::ModelParams* params_ptr = nullptr;
  if (!a.pca && cfg.iters > 0) {
    nn::load_checkpoint(a.model, params);
    params_ptr = &params;
  }

  EstimateTiming timing;
  NormalField field = estimate(cloud, cfg, params_ptr, &timing);
  save_normals(a.output, field.normals);

  if (cfg.snapshots) {
    std::filesystem::create_directories(a.snapshots_dir);
    for (std::size_t l = 0; l < field.snapshots.size(); ++l) {
      save_normals((std::filesystem::path(a.snapshots_dir) /
                    ("iter" + std::to_string(l) + ".normals"))
                       .string(),
                   field.snapshots[l]);
    }
  }
  std::cout << "points: " << cloud.size() << "\n"
            << "graph build: " << timing.graph_s << " s\n"
            << "pca init:    " << timing.init_s << " s\n"
            << "iterations:  " << timing.iters_s << " s (" << cfg.iters << ")\n"
            << "wrote " << a.output << "\n";
  return 0;
}

struct EvalArgs {
  std::string dataset;
  std::string method = "pca";
  std::string model;
  int k = 64;
  double r = 0.0;
  int iters = 4;
  std::string csv;
  std::string pgp_csv;
};

int run_eval(const EvalArgs& a) {
  MethodSpec method;
  method.kind = a.method == "pca" ? MethodSpec::Kind::Pca : MethodSpec::Kind::Model;
  method.k = a.k;
  method.iters = a.iters;
  method.checkpoint = a.model;
  if (a.r > 0.0) {
    method.mode = NeighborGraph::Mode::Radius;
    method.r = a.r;
  }

  std::vector<double> thresholds;
  if (!a.pgp_csv.empty())
    for (int t = 1; t <= 30; ++t) thresholds.push_back(t);

  EvalReport report = eval_suite(a.dataset, method, thresholds);
  for (const auto& c : report.categories)
    std::cout << c.category << ": " << c.rmse_deg << " deg (" << c.n_clouds
              << " clouds)\n";
  std::cout << "overall: " << report.overall_rmse_deg << " deg\n"
            << "time/point: " << report.seconds_per_point * 1e3 << " ms\n";
  if (!a.csv.empty()) write_eval_csv(a.csv, report, method);
  if (!a.pgp_csv.empty()) write_pgp_csv(a.pgp_csv, report, method);
  return 0;
}

struct BenchArgs {
  int points = 100000;
  int k = 64;
  int iters = 4;
  std::uint64_t seed = 7;
};

int run_bench(const BenchArgs& a) {
  SynthSpec spec;
  spec.shape = SynthShape::CylinderUnion;
  spec.n_points = a.points;
  spec.sigma = 0.003;
  spec.seed = a.seed;
  PointCloud cloud = normalize_cloud(synth_generate(spec));

  nn::ModelParams params;
  params.init(a.seed);

  EstimatorConfig cfg;
  cfg.k = a.k;
  cfg.iters = a.iters;

  EstimateTiming timing;
  const auto t0 = std::chrono::steady_clock::now();
  NormalField field = estimate(cloud, cfg, &params, &timing);
  const double total =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  (void)field;

  std::cout << "points: " << a.points << "  k: " << a.k << "  L: " << a.iters
            << "\n"
            << "total:       " << total << " s (" << total * 1e3 / a.points
            << " ms/point)\n"
            << "kd-tree+graph: " << timing.graph_s << " s ("
            << 100.0 * timing.graph_s / total << "% of total)\n"
            << "pca init:    " << timing.init_s << " s\n"
            << "iterations:  " << timing.iters_s << " s\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"iterative surface normal estimation"};
  app.require_subcommand(1);

  int threads = 0;
  bool deterministic = true;
  app.add_option("--threads", threads, "worker threads (0 = hardware)");
  app.add_flag("--deterministic,!--fast", deterministic,
               "fixed reduction order (default on)");

  EstimateArgs est;
  auto* cmd_est = app.add_subcommand("estimate", "estimate normals for a .xyz file");
  cmd_est->add_option("input", est.input, "input .xyz")->required();
  cmd_est->add_option("--out", est.output, "output .normals path")->required();
  auto* opt_model = cmd_est->add_option("--model", est.model, "model checkpoint");
  auto* opt_pca = cmd_est->add_flag("--pca", est.pca, "plain PCA plane fit");
  opt_model->excludes(opt_pca);
  auto* opt_k = cmd_est->add_option("--k", est.k, "neighborhood size");
  auto* opt_r = cmd_est->add_option("--r", est.r, "neighborhood radius");
  opt_k->excludes(opt_r);
  cmd_est->add_option("--iters", est.iters, "re-weighting iterations L");
  cmd_est->add_option("--snapshots", est.snapshots_dir,
                      "dump per-iteration normals into this directory");

  std::string train_config;
  auto* cmd_train = app.add_subcommand("train", "train a model from a config file");
  cmd_train->add_option("--config", train_config, "key = value config file")
      ->required();

  EvalArgs ev;
  auto* cmd_eval = app.add_subcommand("eval", "run the benchmark protocol");
  cmd_eval->add_option("--dataset", ev.dataset, "dataset root directory")->required();
  cmd_eval->add_option("--method", ev.method, "pca | model")
      ->check(CLI::IsMember({"pca", "model"}));
  cmd_eval->add_option("--model", ev.model, "checkpoint for --method model");
  cmd_eval->add_option("--k", ev.k, "neighborhood size");
  cmd_eval->add_option("--r", ev.r, "neighborhood radius");
  cmd_eval->add_option("--iters", ev.iters, "re-weighting iterations L");
  cmd_eval->add_option("--csv", ev.csv, "write per-category RMSE CSV");
  cmd_eval->add_option("--pgp-csv", ev.pgp_csv, "write PGP curve CSV");

  std::string synth_spec, synth_out;
  std::uint64_t synth_seed = 0;
  auto* cmd_synth = app.add_subcommand("synth", "generate a synthetic dataset");
  cmd_synth->add_option("--spec", synth_spec, "dataset spec file")->required();
  cmd_synth->add_option("--out", synth_out, "output directory")->required();
  cmd_synth->add_option("--seed", synth_seed, "seed offset added to every cloud");

  BenchArgs bench;
  auto* cmd_bench = app.add_subcommand("bench", "time inference on a synthetic cloud");
  cmd_bench->add_option("--points", bench.points, "point count");
  cmd_bench->add_option("--k", bench.k, "neighborhood size");
  cmd_bench->add_option("--iters", bench.iters, "re-weighting iterations L");
  cmd_bench->add_option("--seed", bench.seed, "cloud seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  iternorm::set_num_threads(threads);

  try {
    if (cmd_est->parsed()) {
      if (!est.pca && est.model.empty() && est.iters > 0) {
        std::cerr << "estimate: need --model or --pca\n";
        return 1;
      }
      return run_estimate(est);
    }
    if (cmd_train->parsed()) {
      TrainConfig cfg = TrainConfig::parse_file(train_config);
      TrainResult res = train(cfg);
      std::cout << "epochs: " << res.epochs_run << "\n"
                << "best val RMSE: " << res.best_val_rmse_deg << " deg\n"
                << "best checkpoint: " << res.best_checkpoint << "\n"
                << "last checkpoint: " << res.last_checkpoint << "\n";
      return 0;
    }
    if (cmd_eval->parsed()) {
      if (ev.method == "model" && ev.model.empty()) {
        std::cerr << "eval: --method model requires --model\n";
        return 1;
      }
      return run_eval(ev);
    }
    if (cmd_synth->parsed()) {
      SynthDatasetSpec spec = SynthDatasetSpec::parse_file(synth_spec);
      for (auto& [cat, clouds] : spec.categories)
        for (auto& c : clouds) c.spec.seed += synth_seed;
      write_synth_dataset(spec, synth_out);
      std::cout << "wrote dataset to " << synth_out << "\n";
      return 0;
    }
    if (cmd_bench->parsed()) return run_bench(bench);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  }
  return 1;
}
