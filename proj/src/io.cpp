#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

#include "iternorm/pointcloud.hpp"

namespace iternorm {

namespace {

bool blank(const std::string& line) {
  return line.find_first_not_of(" \t\r\n") == std::string::npos;
}

// Parses exactly `want` doubles from the front of `line`. Extra columns are
// allowed and ignored.
bool parse_row(const std::string& line, int want, double* out) {
  const char* p = line.c_str();
  char* end = nullptr;
  for (int c = 0; c < want; ++c) {
    out[c] = std::strtod(p, &end);
    if (end == p) return false;
    p = end;
  }
  return true;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open for writing: " + path);
  return f;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open: " + path);
  return f;
}

// 9 significant digits: stable across a write/read/write round trip without
// bloating files.
void write_vec3(std::ofstream& f, const Vec3& v) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%.9g %.9g %.9g\n", v.x(), v.y(), v.z());
  f << buf;
}

}  // namespace

PointCloud load_xyz(const std::string& path) {
  std::ifstream f = open_in(path);
  PointCloud cloud;
  std::string line;
  int lineno = 0;
  double v[3];
  while (std::getline(f, line)) {
    ++lineno;
    if (blank(line)) continue;
    if (!parse_row(line, 3, v))
      throw IoError(path + ":" + std::to_string(lineno) + ": expected 3 numbers");
    if (!std::isfinite(v[0]) || !std::isfinite(v[1]) || !std::isfinite(v[2]))
      throw IoError(path + ":" + std::to_string(lineno) + ": non-finite coordinate");
    cloud.points.emplace_back(v[0], v[1], v[2]);
  }
  if (cloud.points.empty()) throw IoError(path + ": no points");
  if (cloud.size() < 3) throw IoError(path + ": fewer than 3 points");
  return cloud;
}

void save_xyz(const std::string& path, const PointCloud& cloud) {
  std::ofstream f = open_out(path);
  for (const auto& p : cloud.points) write_vec3(f, p);
  if (!f) throw IoError("write failed: " + path);
}

std::vector<Vec3> load_normals(const std::string& path, int expected_count) {
  std::ifstream f = open_in(path);
  std::vector<Vec3> normals;
  normals.reserve(expected_count > 0 ? expected_count : 0);
  std::string line;
  int lineno = 0;
  double v[3];
  while (std::getline(f, line)) {
    ++lineno;
    if (blank(line)) continue;
    if (!parse_row(line, 3, v))
      throw IoError(path + ":" + std::to_string(lineno) + ": expected 3 numbers");
    normals.emplace_back(v[0], v[1], v[2]);
  }
  if (static_cast<int>(normals.size()) != expected_count)
    throw IoError(path + ": expected " + std::to_string(expected_count) +
                  " normals, found " + std::to_string(normals.size()));
  return normals;
}

void save_normals(const std::string& path, const std::vector<Vec3>& normals) {
  std::ofstream f = open_out(path);
  for (const auto& n : normals) write_vec3(f, n);
  if (!f) throw IoError("write failed: " + path);
}

std::vector<int> load_pidx(const std::string& path) {
  std::ifstream f = open_in(path);
  std::vector<int> idx;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (blank(line)) continue;
    const char* p = line.c_str();
    char* end = nullptr;
    long v = std::strtol(p, &end, 10);
    if (end == p || v < 0)
      throw IoError(path + ":" + std::to_string(lineno) +
                    ": expected a nonnegative integer");
    // reject trailing garbage such as "3.5"
    while (*end == ' ' || *end == '\t' || *end == '\r') ++end;
    if (*end != '\0')
      throw IoError(path + ":" + std::to_string(lineno) + ": trailing characters");
    idx.push_back(static_cast<int>(v));
  }
  return idx;
}

void save_pidx(const std::string& path, const std::vector<int>& idx) {
  std::ofstream f = open_out(path);
  for (int i : idx) f << i << "\n";
  if (!f) throw IoError("write failed: " + path);
}

PointCloud normalize_cloud(const PointCloud& cloud) {
  if (cloud.points.empty()) throw NumericError("normalize_cloud: empty cloud");
  Vec3 lo = cloud.points.front(), hi = cloud.points.front();
  Vec3 centroid = Vec3::Zero();
  for (const auto& p : cloud.points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
    centroid += p;
  }
  centroid /= static_cast<double>(cloud.size());
  const double diag = (hi - lo).norm();
  if (diag <= 0.0)
    throw NumericError("normalize_cloud: all points identical, scale undefined");

  PointCloud out = cloud;
  for (auto& p : out.points) p = (p - centroid) / diag;
  // compose with any previous record so denormalize always recovers the
  // original frame
  out.scale_record.centroid =
      cloud.scale_record.centroid + cloud.scale_record.scale * centroid;
  out.scale_record.scale = cloud.scale_record.scale * diag;
  return out;
}

PointCloud denormalize_cloud(const PointCloud& cloud) {
  PointCloud out = cloud;
  for (auto& p : out.points)
    p = p * cloud.scale_record.scale + cloud.scale_record.centroid;
  out.scale_record = ScaleRecord{};
  return out;
}

}  // namespace iternorm
