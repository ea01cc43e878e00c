// Python bindings for the iternorm core: point-cloud io, synthetic data,
// graph construction, the batched 3x3 eigensolver (forward and backward),
// normal estimation and the evaluation metrics.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "iternorm/estimator.hpp"
#include "iternorm/metrics.hpp"
#include "iternorm/parallel.hpp"
#include "iternorm/synth.hpp"
#include "iternorm/training.hpp"

namespace py = pybind11;
using namespace iternorm;

namespace {

std::vector<Vec3> to_vec3s(const py::array_t<double>& arr, const char* what) {
  auto buf = arr.unchecked<2>();
  if (buf.shape(1) != 3)
    throw std::invalid_argument(std::string(what) + " must have shape (n, 3)");
  std::vector<Vec3> out(buf.shape(0));
  for (py::ssize_t i = 0; i < buf.shape(0); ++i)
    out[i] = Vec3(buf(i, 0), buf(i, 1), buf(i, 2));
  return out;
}

py::array_t<double> from_vec3s(const std::vector<Vec3>& v) {
  py::array_t<double> arr({static_cast<py::ssize_t>(v.size()), py::ssize_t(3)});
  auto buf = arr.mutable_unchecked<2>();
  for (std::size_t i = 0; i < v.size(); ++i) {
    buf(i, 0) = v[i].x();
    buf(i, 1) = v[i].y();
    buf(i, 2) = v[i].z();
  }
  return arr;
}

std::vector<int> to_subset(const py::object& subset) {
  if (subset.is_none()) return {};
  return subset.cast<std::vector<int>>();
}

std::vector<Mat3> to_mat3s(const py::array_t<double>& arr, const char* what) {
  auto buf = arr.unchecked<3>();
  if (buf.shape(1) != 3 || buf.shape(2) != 3)
    throw std::invalid_argument(std::string(what) + " must have shape (n, 3, 3)");
  std::vector<Mat3> out(buf.shape(0));
  for (py::ssize_t i = 0; i < buf.shape(0); ++i)
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) out[i](r, c) = buf(i, r, c);
  return out;
}

py::array_t<double> from_mat3s(const std::vector<Mat3>& v) {
  py::array_t<double> arr(
      {static_cast<py::ssize_t>(v.size()), py::ssize_t(3), py::ssize_t(3)});
  auto buf = arr.mutable_unchecked<3>();
  for (std::size_t i = 0; i < v.size(); ++i)
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) buf(i, r, c) = v[i](r, c);
  return arr;
}

EstimatorConfig make_config(int k, double r, int iters) {
  EstimatorConfig cfg;
  cfg.k = k;
  cfg.iters = iters;
  if (r > 0.0) {
    cfg.mode = NeighborGraph::Mode::Radius;
    cfg.r = r;
  }
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "iterative surface normal estimation";

  py::register_exception<IoError>(m, "IoError");
  py::register_exception<NumericError>(m, "NumericError");

  m.def("set_num_threads", &set_num_threads, py::arg("n"));

  // io
  m.def(
      "load_xyz",
      [](const std::string& path) { return from_vec3s(load_xyz(path).points); },
      py::arg("path"));
  m.def(
      "save_xyz",
      [](const std::string& path, const py::array_t<double>& pts) {
        PointCloud c;
        c.points = to_vec3s(pts, "points");
        save_xyz(path, c);
      },
      py::arg("path"), py::arg("points"));
  m.def(
      "load_normals",
      [](const std::string& path, int m_) {
        return from_vec3s(load_normals(path, m_));
      },
      py::arg("path"), py::arg("count"));
  m.def(
      "save_normals",
      [](const std::string& path, const py::array_t<double>& n) {
        save_normals(path, to_vec3s(n, "normals"));
      },
      py::arg("path"), py::arg("normals"));
  m.def("load_pidx", &load_pidx, py::arg("path"));
  m.def(
      "normalize",
      [](const py::array_t<double>& pts) {
        PointCloud c;
        c.points = to_vec3s(pts, "points");
        c = normalize_cloud(c);
        return py::make_tuple(from_vec3s(c.points),
                              from_vec3s({c.scale_record.centroid}),
                              c.scale_record.scale);
      },
      py::arg("points"),
      "Center on the centroid and scale the bbox diagonal to 1; returns "
      "(points, centroid, scale).");

  // synthetic data
  m.def(
      "synth",
      [](const std::string& shape, int n, double sigma,
         const std::string& pattern, std::uint64_t seed) {
        SynthSpec spec;
        spec.shape = parse_shape(shape);
        spec.n_points = n;
        spec.sigma = sigma;
        spec.pattern = parse_pattern(pattern);
        spec.seed = seed;
        PointCloud c = synth_generate(spec);
        return py::make_tuple(from_vec3s(c.points), from_vec3s(c.gt_normals));
      },
      py::arg("shape"), py::arg("n"), py::arg("sigma") = 0.0,
      py::arg("pattern") = "uniform", py::arg("seed") = 0,
      "Sample an analytic surface; returns (points, gt_normals).");

  // graph
  m.def(
      "knn_graph",
      [](const py::array_t<double>& pts, int k) {
        PointCloud c;
        c.points = to_vec3s(pts, "points");
        NeighborGraph g = build_knn_graph(c, k);
        return py::make_tuple(
            py::array_t<std::int64_t>(g.node_offsets.size(), g.node_offsets.data()),
            py::array_t<int>(g.edge_dst.size(), g.edge_dst.data()));
      },
      py::arg("points"), py::arg("k"),
      "Returns (node_offsets, edge_dst); each segment holds the self edge "
      "plus the k nearest neighbors, sorted by index.");

  // linalg
  m.def(
      "sym_eig3",
      [](const py::array_t<double>& C) {
        const auto mats = to_mat3s(C, "C");
        std::vector<SymEigResult> res(mats.size());
        sym_eig3_batch(mats, res);
        py::array_t<double> vals(
            {static_cast<py::ssize_t>(res.size()), py::ssize_t(3)});
        auto vb = vals.mutable_unchecked<2>();
        std::vector<Mat3> vecs(res.size());
        for (std::size_t i = 0; i < res.size(); ++i) {
          for (int c = 0; c < 3; ++c) vb(i, c) = res[i].eigvals[c];
          vecs[i] = res[i].eigvecs;
        }
        return py::make_tuple(vals, from_mat3s(vecs));
      },
      py::arg("C"),
      "Batched symmetric 3x3 eigendecomposition; returns (eigvals ascending, "
      "eigvecs with eigenvectors in columns).");
  m.def(
      "sym_eig3_backward",
      [](const py::array_t<double>& vals, const py::array_t<double>& vecs,
         const py::array_t<double>& dvals, const py::array_t<double>& dvecs,
         double gap_floor) {
        auto vb = vals.unchecked<2>();
        auto dvb = dvals.unchecked<2>();
        const auto U = to_mat3s(vecs, "eigvecs");
        const auto dU = to_mat3s(dvecs, "dvecs");
        std::vector<Mat3> out(U.size());
        for (std::size_t i = 0; i < U.size(); ++i) {
          SymEigResult r;
          r.eigvals = Vec3(vb(i, 0), vb(i, 1), vb(i, 2));
          r.eigvecs = U[i];
          out[i] = sym_eig3_backward(
              r, dU[i], Vec3(dvb(i, 0), dvb(i, 1), dvb(i, 2)), gap_floor);
        }
        return from_mat3s(out);
      },
      py::arg("eigvals"), py::arg("eigvecs"), py::arg("dvals"), py::arg("dvecs"),
      py::arg("gap_floor") = 1e-6);
  m.def(
      "quat_to_rot",
      [](const py::array_t<double>& q) {
        auto buf = q.unchecked<2>();
        if (buf.shape(1) != 4)
          throw std::invalid_argument("q must have shape (n, 4)");
        std::vector<Mat3> out(buf.shape(0));
        for (py::ssize_t i = 0; i < buf.shape(0); ++i)
          out[i] = quat_to_rot(Vec4(buf(i, 0), buf(i, 1), buf(i, 2), buf(i, 3)));
        return from_mat3s(out);
      },
      py::arg("q"));

  // estimation
  m.def(
      "pca_normals",
      [](const py::array_t<double>& pts, int k) {
        PointCloud c;
        c.points = to_vec3s(pts, "points");
        return from_vec3s(pca_baseline(c, k).normals);
      },
      py::arg("points"), py::arg("k") = 64,
      "Unweighted PCA plane-fit normals (iteration 0 of the algorithm).");
  m.def(
      "estimate_normals",
      [](const py::array_t<double>& pts, int k, int iters,
         const std::string& model, double r) {
        PointCloud c;
        c.points = to_vec3s(pts, "points");
        EstimatorConfig cfg = make_config(k, r, iters);
        nn::ModelParams params;
        const nn::ModelParams* pp = nullptr;
        if (cfg.iters > 0) {
          if (model.empty())
            throw std::invalid_argument(
                "estimate_normals: iters > 0 requires a model checkpoint");
          nn::load_checkpoint(model, params);
          pp = &params;
        }
        return from_vec3s(estimate(c, cfg, pp).normals);
      },
      py::arg("points"), py::arg("k") = 64, py::arg("iters") = 4,
      py::arg("model") = std::string(), py::arg("r") = 0.0,
      "Iterative kernel-weighted estimation; iters=0 reproduces pca_normals.");

  // metrics
  m.def(
      "rmse_angle",
      [](const py::array_t<double>& est, const py::array_t<double>& gt,
         const py::object& subset) {
        return rmse_angle(to_vec3s(est, "est"), to_vec3s(gt, "gt"),
                          to_subset(subset));
      },
      py::arg("est"), py::arg("gt"), py::arg("subset") = py::none(),
      "Unoriented angle RMSE in degrees.");
  m.def(
      "pgp_curve",
      [](const py::array_t<double>& est, const py::array_t<double>& gt,
         const std::vector<double>& thresholds, const py::object& subset) {
        return pgp_curve(to_vec3s(est, "est"), to_vec3s(gt, "gt"),
                         to_subset(subset), thresholds);
      },
      py::arg("est"), py::arg("gt"), py::arg("thresholds"),
      py::arg("subset") = py::none());
  m.def(
      "sign_flip_loss",
      [](const py::array_t<double>& est, const py::array_t<double>& gt,
         const py::object& subset) {
        return sign_flip_loss(to_vec3s(est, "est"), to_vec3s(gt, "gt"),
                              to_subset(subset));
      },
      py::arg("est"), py::arg("gt"), py::arg("subset") = py::none());

  // training
  m.def(
      "train",
      [](const std::string& config_path) {
        return train(TrainConfig::parse_file(config_path)).best_checkpoint;
      },
      py::arg("config_path"),
      "Run the training loop from a config file; returns the best checkpoint "
      "path.");
  m.def("num_parameters", [] {
    nn::ModelParams p;
    p.init(0);
    return p.num_parameters();
  });

#ifdef VERSION_INFO
#define STRINGIFY(x) #x
#define MACRO_STRINGIFY(x) STRINGIFY(x)
  m.attr("__version__") = MACRO_STRINGIFY(VERSION_INFO);
#else
  m.attr("__version__") = "dev";
#endif
}
