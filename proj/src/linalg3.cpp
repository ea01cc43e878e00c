#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "iternorm/linalg3.hpp"
#include "iternorm/parallel.hpp"

namespace iternorm {

Vec3 sign_convention(const Vec3& v) {
  int arg = 0;
  double best = std::abs(v[0]);
  for (int i = 1; i < 3; ++i) {
    if (std::abs(v[i]) > best) {
      best = std::abs(v[i]);
      arg = i;
    }
  }
  return v[arg] < 0.0 ? Vec3(-v) : v;
}

namespace {

// Eigenvector for a well-separated eigenvalue: the two most independent rows
// of (A - lambda I) are nearly orthogonal to it, so their cross product
// recovers the direction. Picks the largest of the three pairwise products.
Vec3 eigenvector_of_extremal(const Mat3& A, double lambda) {
  Mat3 M = A;
  M(0, 0) -= lambda;
  M(1, 1) -= lambda;
  M(2, 2) -= lambda;
  Vec3 r0 = M.row(0), r1 = M.row(1), r2 = M.row(2);
  Vec3 c01 = r0.cross(r1), c02 = r0.cross(r2), c12 = r1.cross(r2);
  double n01 = c01.squaredNorm(), n02 = c02.squaredNorm(), n12 = c12.squaredNorm();
  Vec3 best = c01;
  double bn = n01;
  if (n02 > bn) {
    best = c02;
    bn = n02;
  }
  if (n12 > bn) {
    best = c12;
    bn = n12;
  }
  if (bn <= 0.0) {
    // (A - lambda I) is (numerically) rank <= 1: any vector orthogonal to its
    // largest row works.
    Vec3 r = r0;
    if (r1.squaredNorm() > r.squaredNorm()) r = r1;
    if (r2.squaredNorm() > r.squaredNorm()) r = r2;
    if (r.squaredNorm() <= 0.0) return Vec3(1, 0, 0);  // A = lambda I
    Vec3 t = std::abs(r.x()) > 0.5 ? Vec3(0, 1, 0) : Vec3(1, 0, 0);
    return r.cross(t).normalized();
  }
  return best / std::sqrt(bn);
}

// Orthonormal basis {u, v} of the plane orthogonal to unit w.
void orthogonal_complement(const Vec3& w, Vec3& u, Vec3& v) {
  u = std::abs(w.x()) > std::abs(w.y()) ? Vec3(-w.z(), 0, w.x()).normalized()
                                        : Vec3(0, w.z(), -w.y()).normalized();
  v = w.cross(u);
}

// Eigenvector for one of the two remaining eigenvalues, solved in the
// complement plane of the already-known eigenvector.
Vec3 eigenvector_in_complement(const Mat3& A, double lambda, const Vec3& known) {
  Vec3 u, v;
  orthogonal_complement(known, u, v);
  // 2x2 projection of (A - lambda I)
  Vec3 Au = A * u, Av = A * v;
  double m00 = u.dot(Au) - lambda;
  double m01 = u.dot(Av);
  double m11 = v.dot(Av) - lambda;
  // null direction of [[m00, m01], [m01, m11]]
  double a00 = std::abs(m00), a11 = std::abs(m11), a01 = std::abs(m01);
  if (a00 >= a11) {
    if (std::max(a00, a01) > 0.0) {
      double inv = 1.0 / std::hypot(m00, m01);
      return (m01 * inv) * u - (m00 * inv) * v;
    }
  } else {
    if (std::max(a11, a01) > 0.0) {
      double inv = 1.0 / std::hypot(m11, m01);
      return (m11 * inv) * u - (m01 * inv) * v;
    }
  }
  return u;  // projected matrix is zero: eigenvalue is (numerically) double
}

}  // namespace

SymEigResult sym_eig3(const Mat3& C) {
  if (!C.allFinite()) throw NumericError("sym_eig3: non-finite input");
  Mat3 A = 0.5 * (C + C.transpose());

  const double scale = A.cwiseAbs().maxCoeff();
  SymEigResult res;
  if (scale == 0.0) {
    res.eigvals.setZero();
    res.eigvecs.setIdentity();
    return res;
  }
  A /= scale;

  const double q = A.trace() / 3.0;
  const double p1 =
      A(0, 1) * A(0, 1) + A(0, 2) * A(0, 2) + A(1, 2) * A(1, 2);
  const double p2 = (A(0, 0) - q) * (A(0, 0) - q) + (A(1, 1) - q) * (A(1, 1) - q) +
                    (A(2, 2) - q) * (A(2, 2) - q) + 2.0 * p1;

  Vec3 vals;
  Mat3 vecs;
  if (p2 <= 1e-30) {
    // already (numerically) a multiple of the identity
    vals = Vec3(q, q, q);
    vecs.setIdentity();
  } else {
    const double p = std::sqrt(p2 / 6.0);
    Mat3 B = (A - q * Mat3::Identity()) / p;
    double r = 0.5 * B.determinant();
    r = std::clamp(r, -1.0, 1.0);
    const double phi = std::acos(r) / 3.0;
    const double two_pi_3 = 2.0 * std::numbers::pi / 3.0;
    const double l3 = q + 2.0 * p * std::cos(phi);
    const double l1 = q + 2.0 * p * std::cos(phi + two_pi_3);
    const double l2 = 3.0 * q - l1 - l3;
    vals = Vec3(l1, l2, l3);

    // recover the best-separated extremal eigenvector first, then solve the
    // remaining pair in its orthogonal complement
    const bool top_first = (l3 - l2) >= (l2 - l1);
    const double first_val = top_first ? l3 : l1;
    Vec3 first = eigenvector_of_extremal(A, first_val);
    const double mid_val = l2;
    Vec3 mid = eigenvector_in_complement(A, mid_val, first);
    Vec3 last = top_first ? mid.cross(first) : first.cross(mid);
    if (top_first) {
      vecs.col(2) = first;
      vecs.col(1) = mid;
      vecs.col(0) = last;
    } else {
      vecs.col(0) = first;
      vecs.col(1) = mid;
      vecs.col(2) = last;
    }

    // polish: Rayleigh quotients of the (orthonormal) columns
    for (int c = 0; c < 3; ++c) vals[c] = vecs.col(c).dot(A * vecs.col(c));
    if (vals[0] > vals[1]) {
      std::swap(vals[0], vals[1]);
      vecs.col(0).swap(vecs.col(1));
    }
    if (vals[1] > vals[2]) {
      std::swap(vals[1], vals[2]);
      vecs.col(1).swap(vecs.col(2));
    }
    if (vals[0] > vals[1]) {
      std::swap(vals[0], vals[1]);
      vecs.col(0).swap(vecs.col(1));
    }
  }

  res.eigvals = vals * scale;
  for (int c = 0; c < 3; ++c) res.eigvecs.col(c) = sign_convention(vecs.col(c));
  return res;
}

void sym_eig3_batch(std::span<const Mat3> C, std::span<SymEigResult> out) {
  parallel_for(static_cast<std::int64_t>(C.size()),
               [&](std::int64_t begin, std::int64_t end, int) {
                 for (std::int64_t i = begin; i < end; ++i) out[i] = sym_eig3(C[i]);
               });
}

Mat3 sym_eig3_backward(const SymEigResult& res, const Mat3& dVecs,
                       const Vec3& dVals, double gap_floor) {
  const Mat3& U = res.eigvecs;
  Mat3 inner = Mat3::Zero();
  inner(0, 0) = dVals[0];
  inner(1, 1) = dVals[1];
  inner(2, 2) = dVals[2];

  const Mat3 UtdU = U.transpose() * dVecs;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      if (i == j) continue;
      double gap = res.eigvals[j] - res.eigvals[i];
      double mag = std::max(std::abs(gap), gap_floor);
      // eigenvalues are ascending, so sign(gap) follows the index order
      double f = (j > i ? 1.0 : -1.0) / mag;
      inner(i, j) += f * UtdU(i, j);
    }
  }
  Mat3 dC = U * inner * U.transpose();
  return 0.5 * (dC + dC.transpose());
}

Mat3 regularize(const Mat3& C, double eps) {
  return C + eps * Mat3::Identity();
}

Mat3 clip_gradient(const Mat3& dC, double tau) {
  Mat3 out;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) out(i, j) = std::clamp(dC(i, j), -tau, tau);
  return out;
}

Mat3 quat_to_rot(const Vec4& q) {
  const double n = q.norm();
  if (n <= 1e-12) return Mat3::Identity();
  const double w = q[0] / n, x = q[1] / n, y = q[2] / n, z = q[3] / n;
  Mat3 R;
  R << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return R;
}

Vec4 quat_to_rot_backward(const Vec4& q, const Mat3& dR) {
  const double n = q.norm();
  if (n <= 1e-12) return Vec4::Zero();
  const Vec4 u = q / n;
  const double w = u[0], x = u[1], y = u[2], z = u[3];

  // dL/du for the unit-quaternion rotation formula
  Vec4 g;
  g[0] = 2 * (-z * dR(0, 1) + y * dR(0, 2) + z * dR(1, 0) - x * dR(1, 2) -
              y * dR(2, 0) + x * dR(2, 1));
  g[1] = 2 * (y * dR(0, 1) + z * dR(0, 2) + y * dR(1, 0) - 2 * x * dR(1, 1) -
              w * dR(1, 2) + z * dR(2, 0) + w * dR(2, 1) - 2 * x * dR(2, 2));
  g[2] = 2 * (-2 * y * dR(0, 0) + x * dR(0, 1) + w * dR(0, 2) + x * dR(1, 0) +
              z * dR(1, 2) - w * dR(2, 0) + z * dR(2, 1) - 2 * y * dR(2, 2));
  g[3] = 2 * (-2 * z * dR(0, 0) - w * dR(0, 1) + x * dR(0, 2) + w * dR(1, 0) -
              2 * z * dR(1, 1) + y * dR(1, 2) + x * dR(2, 0) + y * dR(2, 1));

  // normalization Jacobian: project onto the unit sphere tangent, scale 1/n
  return (g - u * u.dot(g)) / n;
}

}  // namespace iternorm
