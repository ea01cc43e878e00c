#pragma once

#include <span>

#include "iternorm/common.hpp"

namespace iternorm {

/// Spectral decomposition of a symmetric 3x3 matrix. Eigenvalues ascending;
/// column c of eigvecs belongs to eigvals[c]. Columns follow the sign
/// convention of sign_convention().
struct SymEigResult {
  Vec3 eigvals;
  Mat3 eigvecs;
};

/// Flips v so its largest-magnitude component is positive (magnitude ties
/// resolved toward the earlier component). Keeps outputs deterministic.
Vec3 sign_convention(const Vec3& v);

/// Closed-form eigendecomposition (trigonometric Cardano eigenvalues,
/// cross-product eigenvector recovery, Rayleigh polish). Input is
/// symmetrized internally; throws NumericError on non-finite entries.
SymEigResult sym_eig3(const Mat3& C);

void sym_eig3_batch(std::span<const Mat3> C, std::span<SymEigResult> out);

/// Reverse-mode step through sym_eig3:
///   dC = U ((dVals)_diag + F ∘ (Uᵀ dVecs)) Uᵀ,  F_ij = 1/(λ_j - λ_i)
/// with zero diagonal, eigenvalue gaps floored at `gap_floor`, and the result
/// symmetrized. Clipping is the caller's business (see clip_gradient).
Mat3 sym_eig3_backward(const SymEigResult& res, const Mat3& dVecs,
                       const Vec3& dVals, double gap_floor = 1e-6);

/// C + eps*I. Deterministic full-rank lift for PSD inputs.
Mat3 regularize(const Mat3& C, double eps);

/// Entrywise clamp to [-tau, tau]. Idempotent.
Mat3 clip_gradient(const Mat3& dC, double tau);

/// Rotation matrix of a quaternion (w,x,y,z); q is normalized internally and
/// ||q|| <= 1e-12 falls back to the identity. q and -q map to the same R.
Mat3 quat_to_rot(const Vec4& q);

/// Gradient of <dR, quat_to_rot(q)> with respect to the raw (unnormalized)
/// q. Includes the normalization Jacobian, so dq is tangent to q.
Vec4 quat_to_rot_backward(const Vec4& q, const Mat3& dR);

}  // namespace iternorm
