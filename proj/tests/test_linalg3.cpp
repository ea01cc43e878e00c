#include <doctest.h>

#include <random>

#include "iternorm/linalg3.hpp"
#include "oracles.hpp"

using namespace iternorm;

TEST_SUITE_BEGIN("linalg3");

TEST_CASE("identity matrix") {
  auto res = sym_eig3(Mat3::Identity());
  CHECK(res.eigvals.isApprox(Vec3(1, 1, 1)));
  CHECK((res.eigvecs.transpose() * res.eigvecs).isApprox(Mat3::Identity(), 1e-12));
}

TEST_CASE("diag(3,2,1) gives ascending eigenvalues and signed axes") {
  Mat3 C = Vec3(3, 2, 1).asDiagonal();
  auto res = sym_eig3(C);
  CHECK(res.eigvals.isApprox(Vec3(1, 2, 3), 1e-12));
  CHECK(res.eigvecs.col(0).isApprox(Vec3(0, 0, 1), 1e-12));
  CHECK(res.eigvecs.col(1).isApprox(Vec3(0, 1, 0), 1e-12));
  CHECK(res.eigvecs.col(2).isApprox(Vec3(1, 0, 0), 1e-12));
}

TEST_CASE("reconstruction matches the Jacobi oracle on 1000 random matrices") {
  std::mt19937_64 rng(42);
  double worst_recon = 0.0, worst_val = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Mat3 C = oracles::random_symmetric(rng);
    const auto res = sym_eig3(C);
    const auto ref = oracles::jacobi_eig3(C);

    const Mat3 recon = res.eigvecs * res.eigvals.asDiagonal() *
                       res.eigvecs.transpose();
    const double denom = std::max(C.norm(), 1e-300);
    worst_recon = std::max(worst_recon, (recon - C).norm() / denom);
    worst_val = std::max(worst_val,
                         (res.eigvals - ref.eigvals).norm() / denom);

    CHECK(res.eigvals[0] <= res.eigvals[1]);
    CHECK(res.eigvals[1] <= res.eigvals[2]);
    CHECK((res.eigvecs.transpose() * res.eigvecs - Mat3::Identity()).norm() <
          1e-10);
  }
  CHECK(worst_recon < 1e-8);
  CHECK(worst_val < 1e-8);
}

TEST_CASE("non-finite input is rejected") {
  Mat3 C = Mat3::Identity();
  C(1, 2) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(sym_eig3(C), NumericError);
}

TEST_CASE("backward: zero upstream gives zero") {
  auto res = sym_eig3(Vec3(1, 2, 3).asDiagonal().toDenseMatrix());
  CHECK(sym_eig3_backward(res, Mat3::Zero(), Vec3::Zero()).isZero(0.0));
}

TEST_CASE("backward: eigenvalue gradient of diag(1,2,3) is u1 u1^T") {
  Mat3 C = Vec3(1, 2, 3).asDiagonal();
  auto res = sym_eig3(C);
  Mat3 dC = sym_eig3_backward(res, Mat3::Zero(), Vec3(1, 0, 0));
  CHECK(dC.isApprox(Vec3(1, 0, 0).asDiagonal().toDenseMatrix(), 1e-12));
}

TEST_CASE("backward matches finite differences on well-separated spectra") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const Mat3 C = oracles::random_symmetric_with_gap(rng, 0.1);
    Mat3 dU, dS_full;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        dU(i, j) = g(rng);
        dS_full(i, j) = g(rng);
      }
    }
    const Vec3 dS = dS_full.diagonal();

    const Mat3 grad = sym_eig3_backward(sym_eig3(C), dU, dS);

    auto loss = [&](const Mat3& M) {
      auto r = sym_eig3(M);
      return (dU.array() * r.eigvecs.array()).sum() +
             dS.dot(r.eigvals);
    };
    const double h = 1e-6;
    for (int i = 0; i < 3; ++i) {
      for (int j = i; j < 3; ++j) {
        Mat3 E = Mat3::Zero();
        E(i, j) = E(j, i) = 1.0;  // symmetric perturbation
        const double fd = (loss(C + h * E) - loss(C - h * E)) / (2.0 * h);
        // grad is the symmetrized gradient; a symmetric perturbation of an
        // off-diagonal pair sees both entries
        const double an = (i == j) ? grad(i, i) : 2.0 * grad(i, j);
        worst = std::max(worst, oracles::rel_err(an, fd));
      }
    }
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("regularize") {
  CHECK(regularize(Mat3::Zero(), 1e-9)
            .isApprox(1e-9 * Mat3::Identity(), 1e-15));

  // eigenvalues shift by exactly eps
  std::mt19937_64 rng(3);
  const Mat3 C = oracles::random_symmetric(rng);
  const double eps = 0.37;
  auto before = sym_eig3(C);
  auto after = sym_eig3(regularize(C, eps));
  CHECK((after.eigvals - before.eigvals - Vec3::Constant(eps)).norm() < 1e-12);
}

TEST_CASE("regularize lifts a rank-1 covariance of collinear points") {
  // covariance of points spread along one line
  Vec3 dir = Vec3(1, 2, -1).normalized();
  Mat3 C = Mat3::Zero();
  for (double t : {-1.0, -0.3, 0.4, 0.9}) {
    const Vec3 x = t * dir;
    C += x * x.transpose();
  }
  const double eps = 1e-6;
  auto res = sym_eig3(regularize(C, eps));
  CHECK(res.eigvals[0] == doctest::Approx(eps).epsilon(1e-6));
  CHECK(res.eigvals[1] == doctest::Approx(eps).epsilon(1e-6));
  CHECK(res.eigvals[2] > 1.0);
}

TEST_CASE("clip_gradient") {
  Mat3 dC;
  dC << 0.5, -2.0, 1.0, -2.0, 0.1, 3.0, 1.0, 3.0, -0.5;
  const Mat3 clipped = clip_gradient(dC, 1.0);
  CHECK(clipped(0, 0) == 0.5);
  CHECK(clipped(0, 1) == -1.0);
  CHECK(clipped(1, 2) == 1.0);
  // idempotent
  CHECK(clip_gradient(clipped, 1.0) == clipped);
}

TEST_CASE("near-degenerate spectrum stays finite and bounded after clipping") {
  // two eigenvalues 1e-9 apart
  Mat3 C = Vec3(1.0, 1.0 + 1e-9, 2.0).asDiagonal();
  auto res = sym_eig3(C);
  Mat3 dU = Mat3::Ones();
  Mat3 dC = clip_gradient(sym_eig3_backward(res, dU, Vec3::Zero()), 1e3);
  CHECK(dC.allFinite());
  CHECK(dC.cwiseAbs().maxCoeff() <= 1e3);
}

TEST_CASE("quat_to_rot basics") {
  CHECK(quat_to_rot(Vec4(1, 0, 0, 0)).isApprox(Mat3::Identity(), 1e-15));
  Mat3 expect = Vec3(-1, -1, 1).asDiagonal();
  CHECK(quat_to_rot(Vec4(0, 0, 0, 1)).isApprox(expect, 1e-15));
  // near-zero quaternion falls back to the identity
  CHECK(quat_to_rot(Vec4::Constant(1e-14)).isApprox(Mat3::Identity(), 1e-15));
}

TEST_CASE("random quaternions give orthogonal R; q and -q agree") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const Vec4 q(g(rng), g(rng), g(rng), g(rng));
    if (q.norm() < 1e-6) continue;
    const Mat3 R = quat_to_rot(q);
    CHECK((R.transpose() * R - Mat3::Identity()).norm() < 1e-12);
    CHECK(R.determinant() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((quat_to_rot(-q) - R).norm() < 1e-12);
  }
}

TEST_CASE("quat backward: tangency and finite differences") {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> g(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    Vec4 q(g(rng), g(rng), g(rng), g(rng));
    if (q.norm() < 0.1) q += Vec4(1, 0, 0, 0);
    Mat3 dR;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) dR(i, j) = g(rng);

    CHECK(quat_to_rot_backward(q, Mat3::Zero()).isZero(0.0));
    const Vec4 dq = quat_to_rot_backward(q, dR);
    CHECK(std::abs(dq.dot(q)) < 1e-10 * dR.norm() * std::max(1.0, q.norm()));

    auto loss = [&](const Vec4& qq) {
      return (dR.array() * quat_to_rot(qq).array()).sum();
    };
    const double h = 1e-6;
    for (int c = 0; c < 4; ++c) {
      Vec4 e = Vec4::Zero();
      e[c] = h;
      const double fd = (loss(q + e) - loss(q - e)) / (2.0 * h);
      worst = std::max(worst, oracles::rel_err(dq[c], fd));
    }
  }
  CHECK(worst < 1e-6);
}

TEST_SUITE_END();
