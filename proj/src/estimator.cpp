#include <chrono>
#include <cmath>

#include "iternorm/estimator.hpp"
#include "iternorm/parallel.hpp"

namespace iternorm {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

Mat3 node_covariance(const MatX& centered, const VecX& weights, std::int64_t b,
                     std::int64_t e) {
  Mat3 C = Mat3::Zero();
  for (std::int64_t t = b; t < e; ++t) {
    const Vec3 x = centered.col(t);
    C.noalias() += weights[t] * x * x.transpose();
  }
  return C;
}

Mat3 regularized(const Mat3& C, double reg_scale, double reg_floor) {
  const double eps = std::max(reg_scale * C.trace(), reg_floor);
  return regularize(C, eps);
}

// Node-block boundaries targeting roughly uniform edge counts per block.
std::vector<int> block_bounds(const NeighborGraph& graph,
                              std::int64_t edges_per_block) {
  std::vector<int> bounds{0};
  std::int64_t acc = 0;
  for (int i = 0; i < graph.num_nodes(); ++i) {
    acc += graph.degree(i);
    if (acc >= edges_per_block) {
      bounds.push_back(i + 1);
      acc = 0;
    }
  }
  if (bounds.back() != graph.num_nodes()) bounds.push_back(graph.num_nodes());
  return bounds;
}

}  // namespace

std::vector<Mat3> weighted_covariances(const CenteredNeighborhoods& centered,
                                       const VecX& weights,
                                       std::span<const std::int64_t> offsets) {
  const int m = static_cast<int>(offsets.size()) - 1;
  std::vector<Mat3> out(m);
  parallel_for(m, [&](std::int64_t begin, std::int64_t end, int) {
    for (std::int64_t i = begin; i < end; ++i) {
      Mat3 C = Mat3::Zero();
      for (std::int64_t t = offsets[i]; t < offsets[i + 1]; ++t) {
        const Vec3& x = centered.centered[t];
        C.noalias() += weights[t] * x * x.transpose();
      }
      out[i] = C;
    }
  });
  return out;
}

std::vector<Vec3> extract_normals(std::span<const SymEigResult> eig) {
  std::vector<Vec3> out(eig.size());
  for (std::size_t i = 0; i < eig.size(); ++i) out[i] = eig[i].eigvecs.col(0);
  return out;
}

NormalField pca_baseline(const PointCloud& cloud, const NeighborGraph& graph,
                         const EstimatorConfig& cfg) {
  const CenteredNeighborhoods centered = centered_coords(cloud, graph);
  const int m = graph.num_nodes();
  NormalField field;
  field.normals.resize(m);
  field.eigvals.resize(3, m);
  parallel_for(m, [&](std::int64_t begin, std::int64_t end, int) {
    for (std::int64_t i = begin; i < end; ++i) {
      const std::int64_t b = graph.node_offsets[i], e = graph.node_offsets[i + 1];
      const double w = 1.0 / static_cast<double>(e - b);
      Mat3 C = Mat3::Zero();
      for (std::int64_t t = b; t < e; ++t) {
        const Vec3& x = centered.centered[t];
        C.noalias() += w * x * x.transpose();
      }
      const SymEigResult res =
          sym_eig3(regularized(C, cfg.reg_scale, cfg.reg_floor));
      field.normals[i] = res.eigvecs.col(0);
      field.eigvals.col(i) = res.eigvals;
    }
  });
  return field;
}

NormalField pca_baseline(const PointCloud& cloud, int k) {
  return pca_baseline(cloud, build_knn_graph(cloud, k));
}

void reweight_iteration(const PointCloud& cloud, const NeighborGraph& graph,
                        const CenteredNeighborhoods& centered,
                        const std::vector<Vec3>& prev_normals,
                        const nn::ModelParams& params,
                        const IterationOptions& opts,
                        std::vector<Vec3>& out_normals, MatX* out_eigvals,
                        EdgeState* dump) {
  const int m = graph.num_nodes();
  out_normals.resize(m);
  if (out_eigvals) out_eigvals->resize(3, m);
  if (dump) {
    dump->centered.resize(3, graph.num_edges());
    dump->ppf.resize(4, graph.num_edges());
    dump->raw_weights.resize(graph.num_edges());
    dump->softmax_weights.resize(graph.num_edges());
  }

  const std::vector<int> bounds = block_bounds(graph, 16384);
  const int n_blocks = static_cast<int>(bounds.size()) - 1;

  parallel_for(n_blocks, [&](std::int64_t bb, std::int64_t be, int) {
    GnnTape tape;
    NeighborhoodBatch batch;
    std::vector<int> ids;
    VecX soft, dropped;
    std::vector<std::uint8_t> mask;
    for (std::int64_t blk = bb; blk < be; ++blk) {
      const int nb = bounds[blk], ne = bounds[blk + 1];
      ids.resize(ne - nb);
      for (int i = nb; i < ne; ++i) ids[i - nb] = i;
      fill_batch(cloud, graph, centered, prev_normals, ids, batch);
      const NodeHead head = message_rounds(batch, params, &tape);
      const VecX raw = kernel_weights(batch, head, params, &tape);
      nn::dropout_edges(raw, opts.training ? opts.dropout_p : 0.0,
                        opts.dropout_seed, opts.training, dropped, mask,
                        batch.edge_global);
      nn::segment_softmax(dropped, batch.offsets, soft);

      for (int s = 0; s < batch.num_nodes(); ++s) {
        const std::int64_t b = batch.offsets[s], e = batch.offsets[s + 1];
        Mat3 C = node_covariance(batch.centered, soft, b, e);
        const SymEigResult res =
            sym_eig3(regularized(C, opts.reg_scale, opts.reg_floor));
        const int i = batch.node_ids[s];
        out_normals[i] = res.eigvecs.col(0);
        if (out_eigvals) out_eigvals->col(i) = res.eigvals;
      }
      if (dump) {
        const std::int64_t off = graph.node_offsets[nb];
        dump->centered.middleCols(off, batch.num_edges()) = batch.centered;
        dump->ppf.middleCols(off, batch.num_edges()) =
            batch.zgeo.bottomRows(4);
        dump->raw_weights.segment(off, batch.num_edges()) = raw;
        dump->softmax_weights.segment(off, batch.num_edges()) = soft;
      }
    }
  });
}

NormalField estimate(const PointCloud& cloud, const EstimatorConfig& cfg,
                     const nn::ModelParams* params, EstimateTiming* timing) {
  if (cfg.iters > 0 && params == nullptr)
    throw NumericError("estimate: model parameters required when iters > 0");
  if (cfg.iters < 0) throw NumericError("estimate: iters must be >= 0");

  auto t0 = std::chrono::steady_clock::now();
  KdTree tree(cloud.points);
  NeighborGraph graph;
  if (cfg.mode == NeighborGraph::Mode::Knn) {
    graph = build_knn_graph(cloud, tree, cfg.k);
  } else {
    graph = patch_underpopulated(build_radius_graph(cloud, tree, cfg.r), cloud,
                                 tree);
  }
  if (timing) timing->graph_s = seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  const CenteredNeighborhoods centered = centered_coords(cloud, graph);
  NormalField field = pca_baseline(cloud, graph, cfg);
  if (timing) timing->init_s = seconds_since(t0);
  if (cfg.snapshots) field.snapshots.push_back(field.normals);

  t0 = std::chrono::steady_clock::now();
  IterationOptions opts;
  opts.reg_scale = cfg.reg_scale;
  opts.reg_floor = cfg.reg_floor;
  std::vector<Vec3> next;
  for (int l = 1; l <= cfg.iters; ++l) {
    reweight_iteration(cloud, graph, centered, field.normals, *params, opts,
                       next, &field.eigvals);
    field.normals.swap(next);
    if (cfg.snapshots) field.snapshots.push_back(field.normals);
  }
  if (timing) timing->iters_s = seconds_since(t0);
  return field;
}

}  // namespace iternorm
