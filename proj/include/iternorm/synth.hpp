#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "iternorm/pointcloud.hpp"

namespace iternorm {

enum class SynthShape { Plane, Box, Sphere, CylinderUnion };
enum class DensityPattern { Uniform, Stripes, Gradient };

struct SynthSpec {
  SynthShape shape = SynthShape::Plane;
  int n_points = 1000;
  double sigma = 0.0;  // noise std as a fraction of the clean bbox diagonal
  DensityPattern pattern = DensityPattern::Uniform;
  std::uint64_t seed = 0;
};

/// Samples the analytic surface, applies the density pattern, then perturbs
/// positions with isotropic Gaussian noise of std sigma * bbox_diagonal.
/// gt_normals are the surface normals at the pre-noise sample locations.
/// Deterministic given the seed.
PointCloud synth_generate(const SynthSpec& spec);

SynthShape parse_shape(const std::string& s);
DensityPattern parse_pattern(const std::string& s);
std::string to_string(SynthShape s);
std::string to_string(DensityPattern p);

/// One named cloud inside a dataset category.
struct SynthCloud {
  std::string stem;
  SynthSpec spec;
};

/// Dataset manifest: one directory per category, each with a list.txt of
/// shape stems (PCPNet layout). Parsed from a plain text spec file; see
/// docs/formats.md for the grammar.
struct SynthDatasetSpec {
  std::vector<std::pair<std::string, std::vector<SynthCloud>>> categories;

  static SynthDatasetSpec parse_file(const std::string& path);
};

/// Generates every cloud and writes <out_dir>/<category>/{stem.xyz,
/// stem.normals, stem.pidx, list.txt}. pidx holds min(n, pidx_count) indices
/// drawn without replacement.
void write_synth_dataset(const SynthDatasetSpec& spec, const std::string& out_dir,
                         int pidx_count = 5000);

}  // namespace iternorm
