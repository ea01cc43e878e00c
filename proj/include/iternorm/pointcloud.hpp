#pragma once

#include <optional>
#include <string>
#include <vector>

#include "iternorm/common.hpp"

namespace iternorm {

/// Centroid/scale pair recorded by normalize_cloud so outputs can be mapped
/// back to the input frame: p_original = p_normalized * scale + centroid.
struct ScaleRecord {
  Vec3 centroid = Vec3::Zero();
  double scale = 1.0;
};

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> gt_normals;  // empty, or one unit vector per point
  std::vector<int> eval_idx;     // empty = evaluate on all points
  ScaleRecord scale_record;

  int size() const { return static_cast<int>(points.size()); }
  bool has_normals() const { return !gt_normals.empty(); }
};

/// Parses an ASCII .xyz file ("x y z" per line, extra columns ignored).
/// No normalization is applied. Throws IoError with the offending line number
/// on malformed input; fewer than 3 points is rejected.
PointCloud load_xyz(const std::string& path);
void save_xyz(const std::string& path, const PointCloud& cloud);

/// Parses a .normals file row-aligned with the .xyz it belongs to. The line
/// count must equal expected_count. Vectors are returned as stored.
std::vector<Vec3> load_normals(const std::string& path, int expected_count);
void save_normals(const std::string& path, const std::vector<Vec3>& normals);

/// Parses a .pidx file (one nonnegative integer per line). Range checking
/// against the cloud size happens at use site.
std::vector<int> load_pidx(const std::string& path);
void save_pidx(const std::string& path, const std::vector<int>& idx);

/// Centers the cloud on its centroid and scales the bounding-box diagonal to
/// 1. The inverse map is stored in scale_record; gt_normals are unchanged.
/// Throws NumericError if all points coincide.
PointCloud normalize_cloud(const PointCloud& cloud);

/// Applies the stored inverse map, recovering the pre-normalization frame.
PointCloud denormalize_cloud(const PointCloud& cloud);

}  // namespace iternorm
