#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "iternorm/nn.hpp"
#include "oracles.hpp"

using namespace iternorm;
using namespace iternorm::nn;

namespace {

Linear make_linear(const std::string& name, int out, int in, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Linear l;
  l.init(name, out, in, rng);
  return l;
}

MatX random_matrix(int r, int c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  MatX m(r, c);
  for (int j = 0; j < c; ++j)
    for (int i = 0; i < r; ++i) m(i, j) = g(rng);
  return m;
}

}  // namespace

TEST_SUITE_BEGIN("nncore");

TEST_CASE("linear: identity weights pass through, zero input gives bias") {
  Linear l = make_linear("t", 3, 3, 1);
  l.W = MatX::Identity(3, 3);
  l.b = VecX::Zero(3);
  MatX x = random_matrix(3, 5, 2), y;
  linear_forward(l, x, y);
  CHECK((y - x).norm() < 1e-15);

  l.b = VecX::Constant(3, 0.7);
  linear_forward(l, MatX::Zero(3, 4), y);
  CHECK((y.colwise() - l.b).norm() < 1e-15);
}

TEST_CASE("linear gradients match finite differences") {
  Linear l = make_linear("t", 4, 6, 3);
  const MatX X = random_matrix(6, 7, 4);
  const MatX dY = random_matrix(4, 7, 5);

  l.gW.setZero();
  l.gb.setZero();
  MatX dX;
  linear_backward(l, X, dY, &dX);

  auto loss = [&](const Linear& lin, const MatX& xin) {
    MatX y;
    linear_forward(lin, xin, y);
    return (y.array() * dY.array()).sum();
  };

  const double h = 1e-6;
  double worst = 0.0;
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const int i = static_cast<int>(rng() % 4), j = static_cast<int>(rng() % 6);
    Linear lp = l;
    lp.W(i, j) += h;
    Linear lm = l;
    lm.W(i, j) -= h;
    const double fd = (loss(lp, X) - loss(lm, X)) / (2 * h);
    worst = std::max(worst, oracles::rel_err(l.gW(i, j), fd));

    MatX Xp = X, Xm = X;
    const int r = static_cast<int>(rng() % 6), c = static_cast<int>(rng() % 7);
    Xp(r, c) += h;
    Xm(r, c) -= h;
    const double fdx = (loss(l, Xp) - loss(l, Xm)) / (2 * h);
    worst = std::max(worst, oracles::rel_err(dX(r, c), fdx));
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("relu forward and subgradient") {
  MatX a(1, 3);
  a << -1.0, 0.0, 2.0;
  MatX y;
  relu_forward(a, y);
  CHECK(y(0, 0) == 0.0);
  CHECK(y(0, 1) == 0.0);
  CHECK(y(0, 2) == 2.0);

  MatX dy = MatX::Ones(1, 3);
  relu_backward(a, dy);
  CHECK(dy(0, 0) == 0.0);
  CHECK(dy(0, 1) == 0.0);  // subgradient at the kink is 0
  CHECK(dy(0, 2) == 1.0);

  // finite differences away from the kink
  MatX A = random_matrix(4, 5, 7);
  for (int i = 0; i < A.size(); ++i)
    if (std::abs(A.data()[i]) < 1e-3) A.data()[i] = 0.5;
  const MatX up = random_matrix(4, 5, 8);
  MatX grad = up;
  relu_backward(A, grad);
  const double h = 1e-6;
  for (int i = 0; i < 10; ++i) {
    MatX Ap = A, Am = A;
    Ap.data()[i] += h;
    Am.data()[i] -= h;
    MatX yp, ym;
    relu_forward(Ap, yp);
    relu_forward(Am, ym);
    const double fd =
        ((yp - ym).array() * up.array()).sum() / (2 * h);
    CHECK(oracles::rel_err(grad.data()[i], fd) < 1e-5);
  }
}

TEST_CASE("segment_softmax: uniform inputs, shift invariance, unit sums") {
  const std::vector<std::int64_t> offsets{0, 4, 7};
  VecX raw(7);
  raw << 1, 1, 1, 1, 0.3, -2, 5;
  VecX out;
  segment_softmax(raw, offsets, out);
  for (int t = 0; t < 4; ++t) CHECK(out[t] == doctest::Approx(0.25));
  CHECK(out.segment(0, 4).sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(out.segment(4, 3).sum() == doctest::Approx(1.0).epsilon(1e-12));

  VecX shifted = raw;
  shifted.segment(0, 4).array() += 100.0;
  shifted.segment(4, 3).array() -= 3.5;
  VecX out2;
  segment_softmax(shifted, offsets, out2);
  CHECK((out - out2).cwiseAbs().maxCoeff() < 1e-12);

  const std::vector<std::int64_t> bad{0, 0, 7};
  CHECK_THROWS_AS(segment_softmax(raw, bad, out), NumericError);
}

TEST_CASE("segment_softmax backward matches finite differences") {
  const std::vector<std::int64_t> offsets{0, 3, 8};
  VecX raw = random_matrix(8, 1, 9).col(0);
  const VecX up = random_matrix(8, 1, 10).col(0);

  VecX soft, dRaw;
  segment_softmax(raw, offsets, soft);
  segment_softmax_backward(soft, offsets, up, dRaw);

  const double h = 1e-6;
  for (int i = 0; i < 8; ++i) {
    VecX rp = raw, rm = raw;
    rp[i] += h;
    rm[i] -= h;
    VecX sp, sm;
    segment_softmax(rp, offsets, sp);
    segment_softmax(rm, offsets, sm);
    const double fd = ((sp - sm).dot(up)) / (2 * h);
    CHECK(oracles::rel_err(dRaw[i], fd) < 1e-5);
  }
}

TEST_CASE("segment_mean forward and backward") {
  const std::vector<std::int64_t> offsets{0, 1, 4};
  MatX feats = random_matrix(3, 4, 11);
  MatX nodes;
  segment_mean(feats, offsets, nodes);
  CHECK((nodes.col(0) - feats.col(0)).norm() < 1e-15);  // singleton segment
  const VecX mean = (feats.col(1) + feats.col(2) + feats.col(3)) / 3.0;
  CHECK((nodes.col(1) - mean).norm() < 1e-14);

  MatX constant = MatX::Ones(2, 4) * 0.3;
  MatX cnodes;
  segment_mean(constant, offsets, cnodes);
  CHECK((cnodes.array() - 0.3).abs().maxCoeff() < 1e-15);

  MatX dNode = random_matrix(3, 2, 12), dEdge;
  segment_mean_backward(dNode, offsets, dEdge);
  CHECK((dEdge.col(0) - dNode.col(0)).norm() < 1e-15);
  CHECK((dEdge.col(2) - dNode.col(1) / 3.0).norm() < 1e-15);
}

TEST_CASE("dropout") {
  VecX raw = random_matrix(1000000, 1, 13).col(0);
  VecX out;
  std::vector<std::uint8_t> mask;

  SUBCASE("p = 0 and inference mode are identity") {
    dropout_edges(raw, 0.0, 1, true, out, mask);
    CHECK((out - raw).norm() == 0.0);
    dropout_edges(raw, 0.5, 1, false, out, mask);
    CHECK((out - raw).norm() == 0.0);
  }

  SUBCASE("zero fraction approaches p") {
    dropout_edges(raw, 0.25, 99, true, out, mask);
    std::int64_t zeros = 0;
    for (auto m : mask) zeros += m;
    const double frac = static_cast<double>(zeros) / raw.size();
    CHECK(frac == doctest::Approx(0.25).epsilon(0.008));
  }

  SUBCASE("mask reproducible from seed and honors global ids") {
    VecX out2;
    std::vector<std::uint8_t> mask2;
    dropout_edges(raw, 0.25, 42, true, out, mask);
    dropout_edges(raw, 0.25, 42, true, out2, mask2);
    CHECK(mask == mask2);

    // a subset indexed by global ids reproduces the same decisions
    std::vector<std::int64_t> ids{10, 500, 999999};
    VecX sub(3);
    sub << raw[10], raw[500], raw[999999];
    VecX sub_out;
    std::vector<std::uint8_t> sub_mask;
    dropout_edges(sub, 0.25, 42, true, sub_out, sub_mask, ids);
    CHECK(sub_mask[0] == mask[10]);
    CHECK(sub_mask[1] == mask[500]);
    CHECK(sub_mask[2] == mask[999999]);
  }
}

TEST_CASE("rmsprop") {
  ModelParams p;
  p.init(1);
  const MatX w0 = p.h1.l0.W;

  SUBCASE("zero gradients leave parameters unchanged") {
    rmsprop_step(p, {});
    CHECK((p.h1.l0.W - w0).norm() == 0.0);
    CHECK(p.step == 1);
  }

  SUBCASE("single step from v=0 matches the closed form") {
    RmsPropConfig cfg;
    const double g = 0.37;
    p.h1.l0.gW(0, 0) = g;
    rmsprop_step(p, cfg);
    const double expect =
        w0(0, 0) - cfg.lr * g / (std::sqrt((1 - cfg.rho) * g * g) + cfg.eps);
    CHECK(p.h1.l0.W(0, 0) == doctest::Approx(expect).epsilon(1e-12));
    CHECK(p.h1.l0.gW(0, 0) == 0.0);  // gradients zeroed
  }

  SUBCASE("constant gradient drives the update magnitude to lr") {
    RmsPropConfig cfg;
    double prev = p.h1.l0.W(0, 0);
    double delta = 0.0;
    for (int s = 0; s < 200; ++s) {
      p.h1.l0.gW(0, 0) = 0.01;  // constant gradient
      rmsprop_step(p, cfg);
      delta = prev - p.h1.l0.W(0, 0);
      prev = p.h1.l0.W(0, 0);
    }
    CHECK(delta == doctest::Approx(cfg.lr).epsilon(0.01));
  }

  SUBCASE("non-finite gradient aborts naming the layer") {
    p.g2.l1.gb(0) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_WITH_AS(rmsprop_step(p, {}), doctest::Contains("g2.1"),
                         NumericError);
  }
}

TEST_CASE("parameter store matches the published layer table") {
  ModelParams p;
  p.init(0);
  CHECK(p.h1.l0.fan_in() == 10);
  CHECK(p.h1.l0.fan_out() == 32);
  CHECK(p.h1.l1.fan_out() == 16);
  CHECK(p.g1.l1.fan_out() == 8);
  CHECK(p.g3.l1.fan_out() == 12);
  CHECK(p.psi.l0.fan_in() == 11);
  CHECK(p.psi.l0.fan_out() == 64);
  CHECK(p.psi.l1.fan_out() == 1);
  CHECK(p.num_parameters() == 6349);
}

TEST_CASE("checkpoint round trip is bitwise") {
  namespace fs = std::filesystem;
  auto path = fs::temp_directory_path() / "iternorm_test" / "ckpt.bin";
  fs::create_directories(path.parent_path());

  ModelParams p;
  p.init(77);
  p.step = 1234;
  p.h2.l0.vW.setConstant(0.5);
  save_checkpoint(path.string(), p, 0xabcdef);

  ModelParams q;
  const std::uint64_t hash = load_checkpoint(path.string(), q);
  CHECK(hash == 0xabcdef);
  CHECK(q.step == 1234);
  for (std::size_t i = 0; i < p.linears().size(); ++i) {
    CHECK(p.linears()[i]->W == q.linears()[i]->W);
    CHECK(p.linears()[i]->b == q.linears()[i]->b);
    CHECK(p.linears()[i]->vW == q.linears()[i]->vW);
  }

  SUBCASE("truncated file is rejected") {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    auto tpath = path.parent_path() / "trunc.bin";
    std::ofstream out(tpath, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    out.close();
    ModelParams r;
    CHECK_THROWS_AS(load_checkpoint(tpath.string(), r), IoError);
  }

  SUBCASE("garbage magic is rejected") {
    auto gpath = path.parent_path() / "garbage.bin";
    std::ofstream out(gpath, std::ios::binary);
    out << "not a checkpoint at all";
    out.close();
    ModelParams r;
    CHECK_THROWS_AS(load_checkpoint(gpath.string(), r), IoError);
  }
}

TEST_SUITE_END();
