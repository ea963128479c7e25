#pragma once

#include "etsync/errors.hpp"
#include "etsync/types.hpp"

namespace etsync::matops {

inline constexpr Real kDareTol = 1e-12L;
inline constexpr long kDareMaxIter = 1'000'000;
inline constexpr Real kRiccatiTol = 1e-14L;
inline constexpr long kRiccatiMaxIter = 1'000'000;
inline constexpr Real kRankTol = 1e-9L;

// Full eigendecomposition, eigenvalues sorted by (real, imag) so downstream
// objects built from V and Lambda are reproducible across runs.
[[nodiscard]] Spectrum eig(const Mat& M);

// Product of |lambda| over eigenvalues with |lambda| >= 1; 1 when none.
[[nodiscard]] Real mahler_measure(const Mat& M);

// Steady-state prediction-form error covariance: iterate
//   P <- A P A^T - A P C^T (C P C^T + R)^{-1} C P A^T + Q
// from P0 = Q until the sup-norm change drops below dare_tol.
[[nodiscard]] Mat solve_dare_fixed_point(const Mat& A, const Mat& C,
                                         const Mat& Q, const Mat& R,
                                         Real dare_tol = kDareTol,
                                         long max_iter = kDareMaxIter);

// One step of the Riccati recursion (exposed for fixed-point oracles).
[[nodiscard]] Mat dare_step(const Mat& P, const Mat& A, const Mat& C,
                            const Mat& Q, const Mat& R);

// K = P C^T (C P C^T + R)^{-1}
[[nodiscard]] Mat kalman_gain(const Mat& P, const Mat& C, const Mat& R);

// Symmetric positive-definite solution of the epsilon-shifted modified
// Riccati equation
//   P <- S^T P S - (1 - zeta^2) S^T P B (B^T P B)^{-1} B^T P S + eps*I
// iterated from P0 = I. The returned P certifies the strict inequality:
// the residual P - S^T P S + (1-zeta^2) S^T P B B^T P S / (B^T P B) has
// minimum eigenvalue >= eps/2.
[[nodiscard]] Mat solve_modified_riccati(const Mat& S, const Vec& B, Real zeta,
                                         Real eps,
                                         Real tol = kRiccatiTol,
                                         long max_iter = kRiccatiMaxIter);

[[nodiscard]] Real default_riccati_shift(const Mat& S);

// Unique G with G A - Lambda G = RHS, solved via the Kronecker-vectorized
// dense system; requires spec(A) and spec(Lambda) disjoint.
[[nodiscard]] CMat solve_sylvester(const CMat& Lambda, const Mat& A,
                                   const CMat& RHS);

[[nodiscard]] bool is_observable(const Mat& A, const Mat& C);
[[nodiscard]] bool is_controllable(const Mat& S, const Mat& B);

// Numerical rank via singular values, threshold relative to sigma_max.
[[nodiscard]] Index numeric_rank(const Mat& M, Real rel_tol = kRankTol);

}  // namespace etsync::matops
