#pragma once

#include <string>
#include <vector>

#include "iternorm/estimator.hpp"

namespace iternorm {

/// Unoriented angular error in radians: acos(clamp(|n.n_hat|, 0, 1)).
double angle_error_rad(const Vec3& est, const Vec3& gt);

/// RMSE of unoriented angles in degrees over `subset` (empty = all points).
/// Invariant to per-point sign flips on either argument.
double rmse_angle(const std::vector<Vec3>& est, const std::vector<Vec3>& gt,
                  std::span<const int> subset);

/// Fraction of points with angle error strictly below each threshold
/// (degrees, ascending). Monotone nondecreasing in the threshold.
std::vector<double> pgp_curve(const std::vector<Vec3>& est,
                              const std::vector<Vec3>& gt,
                              std::span<const int> subset,
                              std::span<const double> thresholds_deg);

struct MethodSpec {
  enum class Kind { Pca, Model };
  Kind kind = Kind::Pca;
  NeighborGraph::Mode mode = NeighborGraph::Mode::Knn;
  int k = 64;
  double r = 0.0;
  int iters = 4;
  std::string checkpoint;  // Kind::Model only

  std::string name() const;
};

struct CloudResult {
  std::string category;
  std::string stem;
  double rmse_deg = 0.0;
  int n_eval = 0;
  double seconds = 0.0;
};

struct CategoryResult {
  std::string category;
  double rmse_deg = 0.0;  // unweighted mean over clouds
  int n_clouds = 0;
  std::vector<double> pgp;  // pooled over the category's eval points
};

struct EvalReport {
  std::vector<CloudResult> clouds;
  std::vector<CategoryResult> categories;
  std::vector<double> pgp_thresholds_deg;
  double overall_rmse_deg = 0.0;  // mean of category means
  double seconds_per_point = 0.0;
};

/// One dataset category: a directory of clouds plus the list file naming the
/// stems that belong to it.
struct DatasetCategory {
  std::string name;
  std::string dir;
  std::string list_file;
};

/// Discovers categories in either supported layout: subdirectories holding a
/// list.txt, or (PCPNet download layout) testset_*.txt list files next to the
/// clouds in the dataset root. Sorted by name.
std::vector<DatasetCategory> find_dataset_categories(
    const std::string& dataset_dir);

/// Category names only.
std::vector<std::string> dataset_categories(const std::string& dataset_dir);

/// Stems from a list file, one per nonempty line.
std::vector<std::string> read_stem_list(const std::string& list_file);

/// Runs `method` on every cloud of every category: per-cloud RMSE on the
/// .pidx subset, unweighted category means, then the mean over categories.
/// Missing files are reported to stderr and the cloud is skipped.
EvalReport eval_suite(const std::string& dataset_dir, const MethodSpec& method,
                      std::span<const double> pgp_thresholds_deg = {});

/// CSV writers (schemas documented in docs/formats.md).
void write_eval_csv(const std::string& path, const EvalReport& report,
                    const MethodSpec& method);
void write_pgp_csv(const std::string& path, const EvalReport& report,
                   const MethodSpec& method);

}  // namespace iternorm
