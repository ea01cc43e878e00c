#include "iternorm/model.hpp"

#include "iternorm/linalg3.hpp"

namespace iternorm {

using nn::ModelParams;

namespace {

Vec4 ppf_of(const Vec3& ni, const Vec3& nj, const Vec3& d) {
  return Vec4(std::abs(ni.dot(d)), std::abs(nj.dot(d)), std::abs(ni.dot(nj)),
              d.squaredNorm());
}

void resize_keep(MatX& m, Eigen::Index rows, Eigen::Index cols) {
  if (m.rows() != rows || m.cols() != cols) m.resize(rows, cols);
}

void fill_geometry(const PointCloud& cloud, const NeighborGraph& graph,
                   const CenteredNeighborhoods& centered,
                   const std::vector<Vec3>& prev_normals,
                   NeighborhoodBatch& b) {
  const std::int64_t B = b.num_edges();
  resize_keep(b.d, 3, B);
  resize_keep(b.zgeo, 7, B);
  resize_keep(b.centered, 3, B);
  resize_keep(b.f0, 3, b.num_nodes());
  b.edge_scale.resize(b.num_nodes());
  for (int s = 0; s < b.num_nodes(); ++s) {
    const int i = b.node_ids[s];
    b.f0.col(s) = prev_normals[i];
    std::int64_t src = graph.node_offsets[i];
    double scale_acc = 0.0;
    for (std::int64_t t = b.offsets[s]; t < b.offsets[s + 1]; ++t, ++src) {
      const int j = graph.edge_dst[src];
      b.d.col(t) = cloud.points[j] - cloud.points[i];
      scale_acc += b.d.col(t).norm();
      b.centered.col(t) = centered.centered[src];
    }
    // Network inputs are measured in units of the neighborhood's mean edge
    // length. This keeps feature magnitudes O(1) independent of sampling
    // density and k; the plane fit itself stays in true coordinates.
    double scale = scale_acc / static_cast<double>(b.offsets[s + 1] - b.offsets[s]);
    if (!(scale > 1e-300)) scale = 1.0;
    b.edge_scale[s] = scale;

    src = graph.node_offsets[i];
    for (std::int64_t t = b.offsets[s]; t < b.offsets[s + 1]; ++t, ++src) {
      const int j = graph.edge_dst[src];
      b.d.col(t) /= scale;
      b.zgeo.col(t).head(3) = b.d.col(t);
      b.zgeo.col(t).tail(4) =
          ppf_of(prev_normals[i], prev_normals[j], b.d.col(t));
    }
  }
}

}  // namespace

MatX compute_ppf(const PointCloud& cloud, const NeighborGraph& graph,
                 const std::vector<Vec3>& prev_normals) {
  MatX out(4, graph.num_edges());
  for (std::int64_t e = 0; e < graph.num_edges(); ++e) {
    const int i = graph.edge_src[e], j = graph.edge_dst[e];
    const Vec3 d = cloud.points[j] - cloud.points[i];
    out.col(e) = ppf_of(prev_normals[i], prev_normals[j], d);
  }
  return out;
}

NeighborhoodBatch make_batch(const PointCloud& cloud, const NeighborGraph& graph,
                             const CenteredNeighborhoods& centered,
                             const std::vector<Vec3>& prev_normals,
                             int node_begin, int node_end) {
  std::vector<int> ids(node_end - node_begin);
  for (int i = node_begin; i < node_end; ++i) ids[i - node_begin] = i;
  return make_batch(cloud, graph, centered, prev_normals, ids);
}

NeighborhoodBatch make_batch(const PointCloud& cloud, const NeighborGraph& graph,
                             const CenteredNeighborhoods& centered,
                             const std::vector<Vec3>& prev_normals,
                             std::span<const int> node_ids) {
  NeighborhoodBatch b;
  fill_batch(cloud, graph, centered, prev_normals, node_ids, b);
  return b;
}

void fill_batch(const PointCloud& cloud, const NeighborGraph& graph,
                const CenteredNeighborhoods& centered,
                const std::vector<Vec3>& prev_normals,
                std::span<const int> node_ids, NeighborhoodBatch& b) {
  b.node_ids.assign(node_ids.begin(), node_ids.end());
  const int S = b.num_nodes();
  b.offsets.resize(S + 1);
  b.offsets[0] = 0;
  for (int s = 0; s < S; ++s)
    b.offsets[s + 1] = b.offsets[s] + graph.degree(b.node_ids[s]);
  const std::int64_t B = b.offsets[S];
  b.edge_src_local.resize(B);
  b.edge_dst.resize(B);
  b.edge_global.resize(B);
  for (int s = 0; s < S; ++s) {
    const int i = b.node_ids[s];
    std::int64_t src = graph.node_offsets[i];
    for (std::int64_t t = b.offsets[s]; t < b.offsets[s + 1]; ++t, ++src) {
      b.edge_src_local[t] = s;
      b.edge_dst[t] = graph.edge_dst[src];
      b.edge_global[t] = src;
    }
  }
  fill_geometry(cloud, graph, centered, prev_normals, b);
}

namespace {

// Broadcast each node's partial column over its edge segment.
void add_segment_broadcast(const NeighborhoodBatch& b, const MatX& P, MatX& A) {
  for (int s = 0; s < b.num_nodes(); ++s) {
    const std::int64_t off = b.offsets[s], len = b.offsets[s + 1] - off;
    A.middleCols(off, len).colwise() += P.col(s);
  }
}

// Per-segment column sums (adjoint of the broadcast above).
void segment_sum(const NeighborhoodBatch& b, const MatX& dA, MatX& dP) {
  resize_keep(dP, dA.rows(), b.num_nodes());
  for (int s = 0; s < b.num_nodes(); ++s) {
    const std::int64_t off = b.offsets[s], len = b.offsets[s + 1] - off;
    dP.col(s) = dA.middleCols(off, len).rowwise().sum();
  }
}

// First edge layer, split: A = W_geo zgeo + (W_feat node_feat + bias)[src].
void run_round(const NeighborhoodBatch& b, const nn::Mlp& h, const nn::Mlp& g,
               const MatX& node_feat, GnnTape& tape, int r) {
  const int wf = static_cast<int>(node_feat.rows());
  tape.P[r].noalias() = h.l0.W.leftCols(wf) * node_feat;
  tape.P[r].colwise() += h.l0.b;
  tape.A[r].noalias() = h.l0.W.rightCols(ModelParams::kEdgeGeom) * b.zgeo;
  add_segment_broadcast(b, tape.P[r], tape.A[r]);

  nn::relu_forward(tape.A[r], tape.M[r]);
  nn::linear_forward(h.l1, tape.M[r], tape.E[r]);
  nn::segment_mean(tape.E[r], b.offsets, tape.S[r]);
  nn::linear_forward(g.l0, tape.S[r], tape.G[r]);
  nn::relu_forward(tape.G[r], tape.H[r]);
  nn::linear_forward(g.l1, tape.H[r], tape.F[r]);
}

}  // namespace

NodeHead message_rounds(const NeighborhoodBatch& batch, const ModelParams& params,
                        GnnTape* tape) {
  GnnTape local;
  GnnTape& t = tape ? *tape : local;
  run_round(batch, params.h1, params.g1, batch.f0, t, 0);
  run_round(batch, params.h2, params.g2, t.F[0], t, 1);
  run_round(batch, params.h3, params.g3, t.F[1], t, 2);
  NodeHead head;
  head.theta = t.F[2].topRows(ModelParams::kTheta);
  head.quat = t.F[2].bottomRows(ModelParams::kQuat);
  return head;
}

VecX kernel_weights(const NeighborhoodBatch& batch, const NodeHead& head,
                    const ModelParams& params, GnnTape* tape) {
  GnnTape local;
  GnnTape& t = tape ? *tape : local;
  const int S = batch.num_nodes();
  const std::int64_t B = batch.num_edges();
  t.rot.resize(S);
  for (int s = 0; s < S; ++s) t.rot[s] = quat_to_rot(head.quat.col(s));

  resize_keep(t.rotd, 3, B);
  for (std::int64_t e = 0; e < B; ++e)
    t.rotd.col(e).noalias() = t.rot[batch.edge_src_local[e]] * batch.d.col(e);

  // same node/edge split as the message rounds: theta enters once per node
  t.ktheta = head.theta;
  t.kp.noalias() = params.psi.l0.W.rightCols(ModelParams::kTheta) * head.theta;
  t.kp.colwise() += params.psi.l0.b;
  t.ka.noalias() = params.psi.l0.W.leftCols(3) * t.rotd;
  add_segment_broadcast(batch, t.kp, t.ka);

  nn::relu_forward(t.ka, t.km);
  nn::linear_forward(params.psi.l1, t.km, t.kw);
  return t.kw.transpose().col(0);
}

void kernel_backward(const NeighborhoodBatch& batch, ModelParams& params,
                     const GnnTape& tape, const VecX& dRaw, MatX& dTheta,
                     std::vector<Mat3>& dRot) {
  const std::int64_t B = batch.num_edges();
  MatX dW = dRaw.transpose();

  MatX dKm;
  nn::linear_backward(params.psi.l1, tape.km, dW, &dKm);
  nn::relu_backward(tape.ka, dKm);

  // geometry columns see every edge, theta columns one segment sum per node
  params.psi.l0.gW.leftCols(3).noalias() += dKm * tape.rotd.transpose();
  params.psi.l0.gb.noalias() += dKm.rowwise().sum();
  MatX dKp;
  segment_sum(batch, dKm, dKp);
  params.psi.l0.gW.rightCols(ModelParams::kTheta).noalias() +=
      dKp * tape.ktheta.transpose();
  dTheta.noalias() =
      params.psi.l0.W.rightCols(ModelParams::kTheta).transpose() * dKp;

  MatX dRotd = params.psi.l0.W.leftCols(3).transpose() * dKm;
  dRot.assign(batch.num_nodes(), Mat3::Zero());
  for (std::int64_t e = 0; e < B; ++e) {
    // rot = R d  =>  dR += drot d^T
    dRot[batch.edge_src_local[e]].noalias() +=
        dRotd.col(e) * batch.d.col(e).transpose();
  }
}

namespace {

// node_feat is the round's input (f0 or the previous round's F).
void round_backward(const NeighborhoodBatch& b, nn::Mlp& h, nn::Mlp& g,
                    const GnnTape& tape, int r, const MatX& node_feat,
                    const MatX& dF, MatX* dNodeFeat) {
  const int wf = static_cast<int>(node_feat.rows());
  MatX dHidden;
  nn::linear_backward(g.l1, tape.H[r], dF, &dHidden);
  nn::relu_backward(tape.G[r], dHidden);
  MatX dS;
  nn::linear_backward(g.l0, tape.S[r], dHidden, &dS);
  MatX dEdge;
  nn::segment_mean_backward(dS, b.offsets, dEdge);
  MatX dM;
  nn::linear_backward(h.l1, tape.M[r], dEdge, &dM);
  nn::relu_backward(tape.A[r], dM);

  // adjoint of the split first layer
  h.l0.gW.rightCols(ModelParams::kEdgeGeom).noalias() +=
      dM * b.zgeo.transpose();
  h.l0.gb.noalias() += dM.rowwise().sum();
  MatX dP;
  segment_sum(b, dM, dP);
  h.l0.gW.leftCols(wf).noalias() += dP * node_feat.transpose();
  if (dNodeFeat) dNodeFeat->noalias() = h.l0.W.leftCols(wf).transpose() * dP;
}

}  // namespace

void gnn_backward(const NeighborhoodBatch& batch, ModelParams& params,
                  const GnnTape& tape, const MatX& dTheta, const MatX& dQuat) {
  MatX dF3(ModelParams::kHeadOut, batch.num_nodes());
  dF3.topRows(ModelParams::kTheta) = dTheta;
  dF3.bottomRows(ModelParams::kQuat) = dQuat;

  MatX dF2, dF1;
  round_backward(batch, params.h3, params.g3, tape, 2, tape.F[1], dF3, &dF2);
  round_backward(batch, params.h2, params.g2, tape, 1, tape.F[0], dF2, &dF1);
  // f0 is the detached previous normal; no gradient flows further upstream
  round_backward(batch, params.h1, params.g1, tape, 0, batch.f0, dF1, nullptr);
}

void backward_from_raw(const NeighborhoodBatch& batch, ModelParams& params,
                       const GnnTape& tape, const NodeHead& head,
                       const VecX& dRaw) {
  MatX dTheta;
  std::vector<Mat3> dRot;
  kernel_backward(batch, params, tape, dRaw, dTheta, dRot);
  MatX dQuat(ModelParams::kQuat, batch.num_nodes());
  for (int s = 0; s < batch.num_nodes(); ++s)
    dQuat.col(s) = quat_to_rot_backward(head.quat.col(s), dRot[s]);
  gnn_backward(batch, params, tape, dTheta, dQuat);
}

NodeHead message_rounds(const PointCloud& cloud, const NeighborGraph& graph,
                        const std::vector<Vec3>& prev_normals,
                        const ModelParams& params) {
  const CenteredNeighborhoods centered = centered_coords(cloud, graph);
  NeighborhoodBatch b =
      make_batch(cloud, graph, centered, prev_normals, 0, graph.num_nodes());
  return message_rounds(b, params, nullptr);
}

VecX kernel_weights(const PointCloud& cloud, const NeighborGraph& graph,
                    const std::vector<Vec3>& prev_normals, const NodeHead& head,
                    const ModelParams& params) {
  const CenteredNeighborhoods centered = centered_coords(cloud, graph);
  NeighborhoodBatch b =
      make_batch(cloud, graph, centered, prev_normals, 0, graph.num_nodes());
  return kernel_weights(b, head, params, nullptr);
}

}  // namespace iternorm
