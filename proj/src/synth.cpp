#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "iternorm/synth.hpp"

namespace iternorm {

namespace {

struct Sample {
  Vec3 p;
  Vec3 n;
};

using Rng = std::mt19937_64;

Vec3 unit_sphere_dir(Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Vec3 v;
  do {
    v = Vec3(g(rng), g(rng), g(rng));
  } while (v.squaredNorm() < 1e-12);
  return v.normalized();
}

Sample sample_plane(Rng& rng) {
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  double x = u(rng), y = u(rng);
  return {Vec3(x, y, 0.0), Vec3(0, 0, 1)};
}

// Axis-aligned box surface, faces sampled proportionally to area.
Sample sample_box(Rng& rng) {
  static const Vec3 half(0.5, 0.35, 0.25);
  const double ax = half.y() * half.z();  // x faces
  const double ay = half.x() * half.z();
  const double az = half.x() * half.y();
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  double t = u01(rng) * (ax + ay + az);
  int axis = t < ax ? 0 : (t < ax + ay ? 1 : 2);
  double side = u01(rng) < 0.5 ? -1.0 : 1.0;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vec3 p, n = Vec3::Zero();
  int a = (axis + 1) % 3, b = (axis + 2) % 3;
  p[axis] = side * half[axis];
  p[a] = u(rng) * half[a];
  p[b] = u(rng) * half[b];
  n[axis] = side;
  return {p, n};
}

Sample sample_sphere(Rng& rng) {
  Vec3 d = unit_sphere_dir(rng);
  return {0.5 * d, d};
}

struct Cylinder {
  Vec3 center;
  int axis;  // 0=x, 1=y, 2=z
  double radius;
  double half_height;

  bool inside(const Vec3& p) const {
    Vec3 q = p - center;
    double h = q[axis];
    q[axis] = 0.0;
    return std::abs(h) < half_height && q.norm() < radius;
  }

  double lateral_area() const {
    return 2.0 * std::numbers::pi * radius * 2.0 * half_height;
  }
  double cap_area() const { return std::numbers::pi * radius * radius; }

  Sample sample(Rng& rng) const {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const double total = lateral_area() + 2.0 * cap_area();
    double t = u01(rng) * total;
    std::uniform_real_distribution<double> ang(0.0, 2.0 * std::numbers::pi);
    int a = (axis + 1) % 3, b = (axis + 2) % 3;
    Vec3 p = center, n = Vec3::Zero();
    if (t < lateral_area()) {
      double phi = ang(rng);
      std::uniform_real_distribution<double> uh(-half_height, half_height);
      p[a] += radius * std::cos(phi);
      p[b] += radius * std::sin(phi);
      p[axis] += uh(rng);
      n[a] = std::cos(phi);
      n[b] = std::sin(phi);
    } else {
      double side = (t < lateral_area() + cap_area()) ? 1.0 : -1.0;
      double r = radius * std::sqrt(u01(rng));
      double phi = ang(rng);
      p[a] += r * std::cos(phi);
      p[b] += r * std::sin(phi);
      p[axis] += side * half_height;
      n[axis] = side;
    }
    return {p, n};
  }
};

// Two crossed cylinders; samples strictly inside the other primitive are
// rejected so the union surface keeps sharp intersection curves.
Sample sample_cylinder_union(Rng& rng) {
  static const Cylinder cyl[2] = {
      {Vec3(0, 0, 0), 2, 0.22, 0.5},
      {Vec3(0, 0, 0.1), 0, 0.16, 0.45},
  };
  const double a0 = cyl[0].lateral_area() + 2 * cyl[0].cap_area();
  const double a1 = cyl[1].lateral_area() + 2 * cyl[1].cap_area();
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (;;) {
    int which = u01(rng) * (a0 + a1) < a0 ? 0 : 1;
    Sample s = cyl[which].sample(rng);
    if (!cyl[1 - which].inside(s.p)) return s;
  }
}

Sample sample_shape(SynthShape shape, Rng& rng) {
  switch (shape) {
    case SynthShape::Plane: return sample_plane(rng);
    case SynthShape::Box: return sample_box(rng);
    case SynthShape::Sphere: return sample_sphere(rng);
    case SynthShape::CylinderUnion: return sample_cylinder_union(rng);
  }
  throw std::logic_error("unreachable shape");
}

// Stripe mask / linear gradient along x; canonical shapes span roughly
// [-0.5, 0.5] on each axis.
double keep_probability(DensityPattern pattern, const Vec3& p) {
  switch (pattern) {
    case DensityPattern::Uniform: return 1.0;
    case DensityPattern::Stripes: {
      double s = std::sin(2.0 * std::numbers::pi * 5.0 * (p.x() + 0.5));
      return s > 0.0 ? 1.0 : 0.15;
    }
    case DensityPattern::Gradient: {
      double t = std::clamp(p.x() + 0.5, 0.0, 1.0);
      return 1.0 + t * (0.08 - 1.0);
    }
  }
  return 1.0;
}

}  // namespace

PointCloud synth_generate(const SynthSpec& spec) {
  if (spec.n_points < 3) throw NumericError("synth_generate: need >= 3 points");
  if (spec.sigma < 0.0) throw NumericError("synth_generate: sigma < 0");

  Rng rng(spec.seed * 0x9e3779b97f4a7c15ull + 0x2545f4914f6cdd1dull);
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  PointCloud cloud;
  cloud.points.reserve(spec.n_points);
  cloud.gt_normals.reserve(spec.n_points);
  const std::int64_t max_attempts = 1000ll * spec.n_points + 1000;
  std::int64_t attempts = 0;
  while (cloud.size() < spec.n_points) {
    if (++attempts > max_attempts)
      throw NumericError("synth_generate: density rejection did not converge");
    Sample s = sample_shape(spec.shape, rng);
    if (spec.pattern != DensityPattern::Uniform &&
        u01(rng) > keep_probability(spec.pattern, s.p))
      continue;
    cloud.points.push_back(s.p);
    cloud.gt_normals.push_back(s.n);
  }

  if (spec.sigma > 0.0) {
    Vec3 lo = cloud.points.front(), hi = cloud.points.front();
    for (const auto& p : cloud.points) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    const double diag = (hi - lo).norm();
    std::normal_distribution<double> g(0.0, spec.sigma * diag);
    for (auto& p : cloud.points) p += Vec3(g(rng), g(rng), g(rng));
  }
  return cloud;
}

SynthShape parse_shape(const std::string& s) {
  if (s == "plane") return SynthShape::Plane;
  if (s == "box") return SynthShape::Box;
  if (s == "sphere") return SynthShape::Sphere;
  if (s == "cylinder-union" || s == "cylunion") return SynthShape::CylinderUnion;
  throw IoError("unknown shape: " + s);
}

DensityPattern parse_pattern(const std::string& s) {
  if (s == "uniform") return DensityPattern::Uniform;
  if (s == "stripes") return DensityPattern::Stripes;
  if (s == "gradient") return DensityPattern::Gradient;
  throw IoError("unknown density pattern: " + s);
}

std::string to_string(SynthShape s) {
  switch (s) {
    case SynthShape::Plane: return "plane";
    case SynthShape::Box: return "box";
    case SynthShape::Sphere: return "sphere";
    case SynthShape::CylinderUnion: return "cylinder-union";
  }
  return "?";
}

std::string to_string(DensityPattern p) {
  switch (p) {
    case DensityPattern::Uniform: return "uniform";
    case DensityPattern::Stripes: return "stripes";
    case DensityPattern::Gradient: return "gradient";
  }
  return "?";
}

SynthDatasetSpec SynthDatasetSpec::parse_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open: " + path);
  SynthDatasetSpec out;
  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& msg) {
    throw IoError(path + ":" + std::to_string(lineno) + ": " + msg);
  };
  while (std::getline(f, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    std::string word;
    if (!(ss >> word)) continue;
    if (word == "category") {
      std::string name;
      if (!(ss >> name)) fail("category needs a name");
      out.categories.emplace_back(name, std::vector<SynthCloud>{});
    } else if (word == "cloud") {
      if (out.categories.empty()) fail("cloud before any category");
      SynthCloud c;
      std::string kv;
      while (ss >> kv) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) fail("expected key=value, got " + kv);
        std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
        if (key == "shape") c.spec.shape = parse_shape(val);
        else if (key == "n") c.spec.n_points = std::stoi(val);
        else if (key == "sigma") c.spec.sigma = std::stod(val);
        else if (key == "pattern") c.spec.pattern = parse_pattern(val);
        else if (key == "seed") c.spec.seed = std::stoull(val);
        else if (key == "name") c.stem = val;
        else fail("unknown key: " + key);
      }
      if (c.stem.empty()) {
        c.stem = to_string(c.spec.shape) + "_" +
                 std::to_string(out.categories.back().second.size());
      }
      out.categories.back().second.push_back(std::move(c));
    } else {
      fail("unknown directive: " + word);
    }
  }
  if (out.categories.empty()) throw IoError(path + ": no categories defined");
  return out;
}

void write_synth_dataset(const SynthDatasetSpec& spec, const std::string& out_dir,
                         int pidx_count) {
  namespace fs = std::filesystem;
  for (const auto& [cat, clouds] : spec.categories) {
    const fs::path dir = fs::path(out_dir) / cat;
    fs::create_directories(dir);
    std::ofstream list(dir / "list.txt");
    if (!list) throw IoError("cannot write " + (dir / "list.txt").string());
    for (const auto& c : clouds) {
      PointCloud cloud = synth_generate(c.spec);
      save_xyz((dir / (c.stem + ".xyz")).string(), cloud);
      save_normals((dir / (c.stem + ".normals")).string(), cloud.gt_normals);

      // evaluation subset, sampled without replacement
      std::vector<int> idx(cloud.size());
      for (int i = 0; i < cloud.size(); ++i) idx[i] = i;
      Rng rng(c.spec.seed ^ 0xa02bdbf7bb3c0a7ull);
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(std::min<std::size_t>(idx.size(), pidx_count));
      std::sort(idx.begin(), idx.end());
      save_pidx((dir / (c.stem + ".pidx")).string(), idx);
      list << c.stem << "\n";
    }
  }
}

}  // namespace iternorm
