#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "iternorm/metrics.hpp"
#include "iternorm/synth.hpp"

using namespace iternorm;
namespace fs = std::filesystem;

#ifndef ITERNORM_CLI_PATH
#define ITERNORM_CLI_PATH "iternorm"
#endif

namespace {

fs::path work_dir() {
  auto dir = fs::temp_directory_path() / "iternorm_test" / "cli";
  fs::create_directories(dir);
  return dir;
}

int run(const std::string& args) {
  const std::string cmd =
      std::string(ITERNORM_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_SUITE_BEGIN("cli");

TEST_CASE("estimate --pca recovers a plane") {
  const auto dir = work_dir();
  SynthSpec spec;
  spec.shape = SynthShape::Plane;
  spec.n_points = 800;
  spec.seed = 1;
  PointCloud plane = synth_generate(spec);
  save_xyz((dir / "plane.xyz").string(), plane);

  const auto out = dir / "plane.normals";
  REQUIRE(run("estimate " + (dir / "plane.xyz").string() + " --pca --k 12 --out " +
              out.string()) == 0);
  auto normals = load_normals(out.string(), plane.size());
  CHECK(rmse_angle(normals, plane.gt_normals, {}) < 0.01);
}

TEST_CASE("--iters 0 with a model equals --pca byte for byte") {
  const auto dir = work_dir();
  SynthSpec spec;
  spec.shape = SynthShape::Sphere;
  spec.n_points = 700;
  spec.sigma = 0.004;
  spec.seed = 2;
  save_xyz((dir / "s.xyz").string(), synth_generate(spec));

  nn::ModelParams params;
  params.init(3);
  nn::save_checkpoint((dir / "m.bin").string(), params, 0);

  REQUIRE(run("estimate " + (dir / "s.xyz").string() + " --pca --k 16 --out " +
              (dir / "a.normals").string()) == 0);
  REQUIRE(run("estimate " + (dir / "s.xyz").string() + " --model " +
              (dir / "m.bin").string() + " --iters 0 --k 16 --out " +
              (dir / "b.normals").string()) == 0);
  CHECK(slurp(dir / "a.normals") == slurp(dir / "b.normals"));
}

TEST_CASE("synth output is loadable by eval") {
  const auto dir = work_dir();
  const auto specfile = dir / "ds.spec";
  {
    std::ofstream f(specfile);
    f << "category flat\n"
      << "cloud shape=plane n=900 sigma=0 seed=4\n"
      << "category curved\n"
      << "cloud shape=sphere n=900 sigma=0.00125 seed=5\n";
  }
  const auto ds = dir / "ds";
  fs::remove_all(ds);
  REQUIRE(run("synth --spec " + specfile.string() + " --out " + ds.string()) == 0);

  const auto csv = dir / "eval.csv";
  REQUIRE(run("eval --dataset " + ds.string() + " --method pca --k 12 --csv " +
              csv.string()) == 0);
  const std::string text = slurp(csv);
  CHECK(text.find("flat,pca") != std::string::npos);
  CHECK(text.find("curved,pca") != std::string::npos);
}

TEST_CASE("bench runs and reports") {
  CHECK(run("bench --points 1200 --k 8 --iters 1") == 0);
}

TEST_CASE("usage errors exit with code 1") {
  CHECK(run("estimate") == 1);                    // missing required args
  CHECK(run("eval --dataset x --unknown-flag") == 1);
  CHECK(run("") == 1);                            // subcommand required
}

TEST_CASE("io errors exit with code 2") {
  const auto dir = work_dir();
  CHECK(run("estimate /nonexistent.xyz --pca --out " +
            (dir / "o.normals").string()) == 2);
  CHECK(run("eval --dataset /nonexistent_dir --method pca") == 2);
  CHECK(run("train --config /nonexistent.cfg") == 2);
}

TEST_SUITE_END();
