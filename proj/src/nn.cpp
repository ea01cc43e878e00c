#include <cmath>
#include <cstring>
#include <fstream>

#include "iternorm/nn.hpp"

namespace iternorm::nn {

void Linear::init(const std::string& layer_name, int out, int in,
                  std::mt19937_64& rng) {
  name = layer_name;
  const double bound = std::sqrt(6.0 / (in + out));
  std::uniform_real_distribution<double> u(-bound, bound);
  W.resize(out, in);
  for (int c = 0; c < in; ++c)
    for (int r = 0; r < out; ++r) W(r, c) = u(rng);
  b = VecX::Zero(out);
  gW = MatX::Zero(out, in);
  gb = VecX::Zero(out);
  vW = MatX::Zero(out, in);
  vb = VecX::Zero(out);
}

void linear_forward(const Linear& lin, const MatX& X, MatX& Y) {
  if (X.rows() != lin.W.cols())
    throw NumericError("linear_forward(" + lin.name + "): input width " +
                       std::to_string(X.rows()) + " != " +
                       std::to_string(lin.W.cols()));
  Y.noalias() = lin.W * X;
  Y.colwise() += lin.b;
}

void linear_backward(Linear& lin, const MatX& X, const MatX& dY, MatX* dX) {
  if (X.cols() != dY.cols() || dY.rows() != lin.W.rows())
    throw NumericError("linear_backward(" + lin.name + "): shape mismatch");
  lin.gW.noalias() += dY * X.transpose();
  lin.gb.noalias() += dY.rowwise().sum();
  if (dX) dX->noalias() = lin.W.transpose() * dY;
}

void relu_forward(const MatX& A, MatX& Y) {
  if (Y.rows() != A.rows() || Y.cols() != A.cols()) Y.resize(A.rows(), A.cols());
  Y = A.cwiseMax(0.0);
}

void relu_backward(const MatX& A, MatX& dY) {
  dY = (A.array() > 0.0).select(dY, 0.0);
}

void ModelParams::init(std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x6a09e667f3bcc908ull);
  constexpr int edge_in1 = kNodeFeat0 + kEdgeGeom;  // 10
  constexpr int edge_in = kNodeOut + kEdgeGeom;     // 15
  constexpr int psi_in = 3 + kTheta;                // rotated offset + theta
  h1.l0.init("h1.0", kEdgeHidden, edge_in1, rng);
  h1.l1.init("h1.1", kEdgeOut, kEdgeHidden, rng);
  g1.l0.init("g1.0", kNodeHidden, kEdgeOut, rng);
  g1.l1.init("g1.1", kNodeOut, kNodeHidden, rng);
  h2.l0.init("h2.0", kEdgeHidden, edge_in, rng);
  h2.l1.init("h2.1", kEdgeOut, kEdgeHidden, rng);
  g2.l0.init("g2.0", kNodeHidden, kEdgeOut, rng);
  g2.l1.init("g2.1", kNodeOut, kNodeHidden, rng);
  h3.l0.init("h3.0", kEdgeHidden, edge_in, rng);
  h3.l1.init("h3.1", kEdgeOut, kEdgeHidden, rng);
  g3.l0.init("g3.0", kNodeHidden, kEdgeOut, rng);
  g3.l1.init("g3.1", kHeadOut, kNodeHidden, rng);
  psi.l0.init("psi.0", kPsiHidden, psi_in, rng);
  psi.l1.init("psi.1", 1, kPsiHidden, rng);
  step = 0;
}

std::vector<Linear*> ModelParams::linears() {
  return {&h1.l0, &h1.l1, &g1.l0, &g1.l1, &h2.l0, &h2.l1, &g2.l0,
          &g2.l1, &h3.l0, &h3.l1, &g3.l0, &g3.l1, &psi.l0, &psi.l1};
}

std::vector<const Linear*> ModelParams::linears() const {
  auto mut = const_cast<ModelParams*>(this)->linears();
  return {mut.begin(), mut.end()};
}

std::int64_t ModelParams::num_parameters() const {
  std::int64_t n = 0;
  for (const Linear* l : linears()) n += l->num_parameters();
  return n;
}

void ModelParams::zero_grads() {
  for (Linear* l : linears()) {
    l->gW.setZero();
    l->gb.setZero();
  }
}

bool ModelParams::grads_finite(std::string* offending) const {
  for (const Linear* l : linears()) {
    if (!l->gW.allFinite() || !l->gb.allFinite()) {
      if (offending) *offending = l->name;
      return false;
    }
  }
  return true;
}

void rmsprop_step(ModelParams& params, const RmsPropConfig& cfg) {
  std::string layer;
  if (!params.grads_finite(&layer))
    throw NumericError("rmsprop_step: non-finite gradient in layer " + layer);
  for (Linear* l : params.linears()) {
    l->vW = cfg.rho * l->vW.array() + (1.0 - cfg.rho) * l->gW.array().square();
    l->vb = cfg.rho * l->vb.array() + (1.0 - cfg.rho) * l->gb.array().square();
    l->W.array() -= cfg.lr * l->gW.array() / (l->vW.array().sqrt() + cfg.eps);
    l->b.array() -= cfg.lr * l->gb.array() / (l->vb.array().sqrt() + cfg.eps);
    l->gW.setZero();
    l->gb.setZero();
  }
  ++params.step;
}

void segment_softmax(const VecX& raw, std::span<const std::int64_t> offsets,
                     VecX& out) {
  out.resize(raw.size());
  const int m = static_cast<int>(offsets.size()) - 1;
  for (int i = 0; i < m; ++i) {
    const std::int64_t b = offsets[i], e = offsets[i + 1];
    if (b >= e) throw NumericError("segment_softmax: empty segment");
    double mx = raw[b];
    for (std::int64_t t = b + 1; t < e; ++t) mx = std::max(mx, raw[t]);
    double sum = 0.0;
    for (std::int64_t t = b; t < e; ++t) {
      out[t] = std::exp(raw[t] - mx);
      sum += out[t];
    }
    for (std::int64_t t = b; t < e; ++t) out[t] /= sum;
  }
}

void segment_softmax_backward(const VecX& softmax_out,
                              std::span<const std::int64_t> offsets,
                              const VecX& dOut, VecX& dRaw) {
  dRaw.resize(softmax_out.size());
  const int m = static_cast<int>(offsets.size()) - 1;
  for (int i = 0; i < m; ++i) {
    const std::int64_t b = offsets[i], e = offsets[i + 1];
    double dot = 0.0;
    for (std::int64_t t = b; t < e; ++t) dot += softmax_out[t] * dOut[t];
    for (std::int64_t t = b; t < e; ++t)
      dRaw[t] = softmax_out[t] * (dOut[t] - dot);
  }
}

void segment_mean(const MatX& edge_feats, std::span<const std::int64_t> offsets,
                  MatX& node_feats) {
  const int m = static_cast<int>(offsets.size()) - 1;
  if (node_feats.rows() != edge_feats.rows() || node_feats.cols() != m)
    node_feats.resize(edge_feats.rows(), m);
  for (int i = 0; i < m; ++i) {
    const std::int64_t b = offsets[i], e = offsets[i + 1];
    if (b >= e) throw NumericError("segment_mean: empty segment");
    auto acc = node_feats.col(i);
    acc = edge_feats.col(b);
    for (std::int64_t t = b + 1; t < e; ++t) acc += edge_feats.col(t);
    acc /= static_cast<double>(e - b);
  }
}

void segment_mean_backward(const MatX& dNode,
                           std::span<const std::int64_t> offsets, MatX& dEdge) {
  const int m = static_cast<int>(offsets.size()) - 1;
  dEdge.resize(dNode.rows(), offsets[m]);
  for (int i = 0; i < m; ++i) {
    const std::int64_t b = offsets[i], e = offsets[i + 1];
    const double inv = 1.0 / static_cast<double>(e - b);
    for (std::int64_t t = b; t < e; ++t) dEdge.col(t) = dNode.col(i) * inv;
  }
}

namespace {

// splitmix64 finalizer; one hash per entry keeps masks independent of batch
// composition.
double hash_to_unit(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  x = x ^ (x >> 31);
  return static_cast<double>(x >> 11) * 0x1.0p-53;
}

}  // namespace

void dropout_edges(const VecX& raw, double p, std::uint64_t seed, bool training,
                   VecX& out, std::vector<std::uint8_t>& mask,
                   std::span<const std::int64_t> global_ids) {
  if (p < 0.0 || p >= 1.0) throw NumericError("dropout_edges: need 0 <= p < 1");
  if (!global_ids.empty() &&
      global_ids.size() != static_cast<std::size_t>(raw.size()))
    throw NumericError("dropout_edges: global_ids length mismatch");
  out = raw;
  mask.assign(raw.size(), 0);
  if (!training || p == 0.0) return;
  for (Eigen::Index i = 0; i < raw.size(); ++i) {
    const std::uint64_t id =
        global_ids.empty() ? static_cast<std::uint64_t>(i)
                           : static_cast<std::uint64_t>(global_ids[i]);
    if (hash_to_unit(seed ^ (id * 0x9e3779b97f4a7c15ull + 0x7f4a7c15ull)) < p) {
      out[i] = 0.0;
      mask[i] = 1;
    }
  }
}

// ---------------------------------------------------------------------------
// checkpoint io (format: docs/formats.md)

namespace {

constexpr char kMagic[4] = {'I', 'N', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ofstream& f, const T& v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void get(std::ifstream& f, T& v) {
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!f) throw IoError("checkpoint truncated");
}

void put_matrix(std::ofstream& f, const MatX& m) {
  // row-major payload, independent of Eigen's storage order
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) put(f, m(r, c));
}

void get_matrix(std::ifstream& f, MatX& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) get(f, m(r, c));
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& params,
                     std::uint64_t config_hash) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write checkpoint: " + path);
  f.write(kMagic, 4);
  put(f, kVersion);
  put(f, config_hash);
  put(f, params.step);
  const auto layers = params.linears();
  put(f, static_cast<std::uint32_t>(layers.size()));
  for (const Linear* l : layers) {
    put(f, static_cast<std::uint16_t>(l->name.size()));
    f.write(l->name.data(), static_cast<std::streamsize>(l->name.size()));
    put(f, static_cast<std::uint32_t>(l->fan_out()));
    put(f, static_cast<std::uint32_t>(l->fan_in()));
    put_matrix(f, l->W);
    for (Eigen::Index i = 0; i < l->b.size(); ++i) put(f, l->b[i]);
    put_matrix(f, l->vW);
    for (Eigen::Index i = 0; i < l->vb.size(); ++i) put(f, l->vb[i]);
  }
  if (!f) throw IoError("checkpoint write failed: " + path);
}

std::uint64_t load_checkpoint(const std::string& path, ModelParams& params) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kMagic, 4) != 0)
    throw IoError(path + ": not an iternorm checkpoint");
  std::uint32_t version = 0;
  get(f, version);
  if (version != kVersion)
    throw IoError(path + ": unsupported checkpoint version " +
                  std::to_string(version));
  std::uint64_t config_hash = 0;
  get(f, config_hash);

  params.init(0);  // sets up shapes
  get(f, params.step);
  std::uint32_t n_layers = 0;
  get(f, n_layers);
  auto layers = params.linears();
  if (n_layers != layers.size())
    throw IoError(path + ": layer count mismatch");
  for (Linear* l : layers) {
    std::uint16_t len = 0;
    get(f, len);
    std::string name(len, '\0');
    f.read(name.data(), len);
    if (!f) throw IoError("checkpoint truncated");
    std::uint32_t out = 0, in = 0;
    get(f, out);
    get(f, in);
    if (name != l->name || out != static_cast<std::uint32_t>(l->fan_out()) ||
        in != static_cast<std::uint32_t>(l->fan_in()))
      throw IoError(path + ": layer " + name + " does not match architecture");
    get_matrix(f, l->W);
    for (Eigen::Index i = 0; i < l->b.size(); ++i) get(f, l->b[i]);
    get_matrix(f, l->vW);
    for (Eigen::Index i = 0; i < l->vb.size(); ++i) get(f, l->vb[i]);
    l->gW.setZero();
    l->gb.setZero();
  }
  return config_hash;
}

}  // namespace iternorm::nn
