#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>

#include "iternorm/metrics.hpp"
#include "iternorm/nn.hpp"

namespace iternorm {

namespace fs = std::filesystem;

double angle_error_rad(const Vec3& est, const Vec3& gt) {
  const double c = std::clamp(std::abs(est.dot(gt)), 0.0, 1.0);
  return std::acos(c);
}

namespace {

constexpr double kRad2Deg = 180.0 / std::numbers::pi;

std::vector<int> all_indices(std::size_t n) {
  std::vector<int> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = static_cast<int>(i);
  return idx;
}

std::vector<double> angles_deg(const std::vector<Vec3>& est,
                               const std::vector<Vec3>& gt,
                               std::span<const int> subset) {
  std::vector<double> out;
  out.reserve(subset.size());
  for (int i : subset) {
    if (i < 0 || i >= static_cast<int>(est.size()))
      throw NumericError("evaluation index out of range: " + std::to_string(i));
    out.push_back(angle_error_rad(est[i], gt[i]) * kRad2Deg);
  }
  return out;
}

}  // namespace

double rmse_angle(const std::vector<Vec3>& est, const std::vector<Vec3>& gt,
                  std::span<const int> subset) {
  if (est.size() != gt.size())
    throw NumericError("rmse_angle: size mismatch");
  std::vector<int> all;
  if (subset.empty()) {
    all = all_indices(est.size());
    subset = all;
  }
  if (subset.empty()) throw NumericError("rmse_angle: empty subset");
  double acc = 0.0;
  for (double a : angles_deg(est, gt, subset)) acc += a * a;
  return std::sqrt(acc / static_cast<double>(subset.size()));
}

std::vector<double> pgp_curve(const std::vector<Vec3>& est,
                              const std::vector<Vec3>& gt,
                              std::span<const int> subset,
                              std::span<const double> thresholds_deg) {
  std::vector<int> all;
  if (subset.empty()) {
    all = all_indices(est.size());
    subset = all;
  }
  const std::vector<double> errs = angles_deg(est, gt, subset);
  std::vector<double> out(thresholds_deg.size(), 0.0);
  for (std::size_t t = 0; t < thresholds_deg.size(); ++t) {
    std::int64_t count = 0;
    for (double a : errs)
      if (a < thresholds_deg[t]) ++count;
    out[t] = errs.empty() ? 0.0
                          : static_cast<double>(count) /
                                static_cast<double>(errs.size());
  }
  return out;
}

std::string MethodSpec::name() const {
  return kind == Kind::Pca ? "pca" : "model";
}

std::vector<DatasetCategory> find_dataset_categories(
    const std::string& dataset_dir) {
  std::vector<DatasetCategory> cats;
  if (!fs::is_directory(dataset_dir))
    throw IoError("dataset directory not found: " + dataset_dir);
  for (const auto& entry : fs::directory_iterator(dataset_dir)) {
    if (entry.is_directory() && fs::exists(entry.path() / "list.txt")) {
      cats.push_back({entry.path().filename().string(), entry.path().string(),
                      (entry.path() / "list.txt").string()});
    } else if (entry.is_regular_file()) {
      // PCPNet download layout: testset_<category>.txt next to the clouds
      const std::string fname = entry.path().filename().string();
      if (fname.starts_with("testset_") && fname.ends_with(".txt")) {
        cats.push_back({fname.substr(8, fname.size() - 12), dataset_dir,
                        entry.path().string()});
      }
    }
  }
  std::sort(cats.begin(), cats.end(),
            [](const auto& a, const auto& b) { return a.name < b.name; });
  if (cats.empty())
    throw IoError("no categories (list.txt subdirectories or testset_*.txt) in " +
                  dataset_dir);
  return cats;
}

std::vector<std::string> dataset_categories(const std::string& dataset_dir) {
  std::vector<std::string> names;
  for (const auto& c : find_dataset_categories(dataset_dir))
    names.push_back(c.name);
  return names;
}

std::vector<std::string> read_stem_list(const std::string& list_file) {
  std::ifstream f(list_file);
  if (!f) throw IoError("cannot open " + list_file);
  std::vector<std::string> stems;
  std::string line;
  while (std::getline(f, line)) {
    while (!line.empty() &&
           (line.back() == '\r' || line.back() == ' ' || line.back() == '\t'))
      line.pop_back();
    if (!line.empty()) stems.push_back(line);
  }
  return stems;
}

EvalReport eval_suite(const std::string& dataset_dir, const MethodSpec& method,
                      std::span<const double> pgp_thresholds_deg) {
  nn::ModelParams params;
  if (method.kind == MethodSpec::Kind::Model) {
    if (method.checkpoint.empty())
      throw IoError("eval_suite: model method requires a checkpoint");
    nn::load_checkpoint(method.checkpoint, params);
  }

  EvalReport report;
  report.pgp_thresholds_deg.assign(pgp_thresholds_deg.begin(),
                                   pgp_thresholds_deg.end());
  double total_seconds = 0.0;
  std::int64_t total_points = 0;

  for (const DatasetCategory& cat : find_dataset_categories(dataset_dir)) {
    const fs::path dir = cat.dir;
    CategoryResult cres;
    cres.category = cat.name;
    double rmse_sum = 0.0;
    std::vector<double> cat_errors_deg;

    for (const std::string& stem : read_stem_list(cat.list_file)) {
      const std::string xyz = (dir / (stem + ".xyz")).string();
      const std::string nrm = (dir / (stem + ".normals")).string();
      const std::string pidx = (dir / (stem + ".pidx")).string();
      if (!fs::exists(xyz) || !fs::exists(nrm)) {
        std::cerr << "warning: skipping " << cat.name << "/" << stem
                  << " (missing .xyz or .normals)\n";
        continue;
      }
      PointCloud cloud = load_xyz(xyz);
      cloud.gt_normals = load_normals(nrm, cloud.size());
      if (fs::exists(pidx)) cloud.eval_idx = load_pidx(pidx);
      cloud = normalize_cloud(cloud);

      EstimatorConfig cfg;
      cfg.mode = method.mode;
      cfg.k = method.k;
      cfg.r = method.r;
      cfg.iters = method.kind == MethodSpec::Kind::Pca ? 0 : method.iters;

      const auto t0 = std::chrono::steady_clock::now();
      NormalField field =
          estimate(cloud, cfg,
                   method.kind == MethodSpec::Kind::Model ? &params : nullptr);
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
              .count();

      std::span<const int> subset(cloud.eval_idx);
      CloudResult r;
      r.category = cat.name;
      r.stem = stem;
      r.rmse_deg = rmse_angle(field.normals, cloud.gt_normals, subset);
      r.n_eval = subset.empty() ? cloud.size() : static_cast<int>(subset.size());
      r.seconds = secs;
      report.clouds.push_back(r);

      rmse_sum += r.rmse_deg;
      ++cres.n_clouds;
      total_seconds += secs;
      total_points += cloud.size();

      if (!report.pgp_thresholds_deg.empty()) {
        std::vector<int> all;
        if (subset.empty()) {
          all = all_indices(cloud.points.size());
          subset = all;
        }
        for (double a : angles_deg(field.normals, cloud.gt_normals, subset))
          cat_errors_deg.push_back(a);
      }
    }
    if (cres.n_clouds == 0) {
      std::cerr << "warning: category " << cat.name << " had no usable clouds\n";
      continue;
    }
    cres.rmse_deg = rmse_sum / cres.n_clouds;
    for (double thr : report.pgp_thresholds_deg) {
      std::int64_t count = 0;
      for (double a : cat_errors_deg)
        if (a < thr) ++count;
      cres.pgp.push_back(cat_errors_deg.empty()
                             ? 0.0
                             : static_cast<double>(count) /
                                   static_cast<double>(cat_errors_deg.size()));
    }
    report.categories.push_back(std::move(cres));
  }

  if (report.categories.empty())
    throw IoError("eval_suite: no evaluable categories in " + dataset_dir);
  double sum = 0.0;
  for (const auto& c : report.categories) sum += c.rmse_deg;
  report.overall_rmse_deg = sum / report.categories.size();
  report.seconds_per_point =
      total_points > 0 ? total_seconds / static_cast<double>(total_points) : 0.0;
  return report;
}

void write_eval_csv(const std::string& path, const EvalReport& report,
                    const MethodSpec& method) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path);
  f << "category,method,k,L,rmse_deg,n_clouds\n";
  for (const auto& c : report.categories) {
    f << c.category << "," << method.name() << "," << method.k << ","
      << method.iters << "," << c.rmse_deg << "," << c.n_clouds << "\n";
  }
  f << "overall," << method.name() << "," << method.k << "," << method.iters
    << "," << report.overall_rmse_deg << "," << report.clouds.size() << "\n";
}

void write_pgp_csv(const std::string& path, const EvalReport& report,
                   const MethodSpec& method) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path);
  f << "threshold_deg,fraction,category,method\n";
  for (const auto& c : report.categories) {
    for (std::size_t t = 0; t < report.pgp_thresholds_deg.size(); ++t)
      f << report.pgp_thresholds_deg[t] << "," << c.pgp[t] << "," << c.category
        << "," << method.name() << "\n";
  }
}

}  // namespace iternorm
