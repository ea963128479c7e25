#pragma once

#include <optional>
#include <vector>

#include "etsync/kalman.hpp"
#include "etsync/plantsim.hpp"
#include "etsync/types.hpp"

namespace etsync::decomp {

struct BuildOptions {
    bool allow_complex = false;
    // When set, the Kalman gain is moved (minimum-norm update) so that
    // spec(A - K CA) lands on these poles before decomposing. The closed
    // loop's poles are freely assignable this way, trading a little filter
    // optimality for a better-conditioned decomposition and a smaller
    // Mahler measure downstream.
    std::optional<std::vector<Real>> target_poles;
    Real perturb_scale = 1e-6L;
    int max_retries = 20;
    uint64_t perturb_seed = 0x5eedbeefULL;
    Real collision_tol = 1e-9L;
    Real beta_tol = 1e-8L;
};

struct Decomposition {
    Index n = 0;  // plant dimension
    Index m = 0;  // sensor count

    CMat V;                // eigenvectors of A - K_used CA
    CVec lambda;           // eigenvalues (diagonal of Lambda), sorted
    CVec beta;             // shared output weights
    std::vector<CMat> G;   // per-sensor Sylvester solutions
    CMat S_c;              // Lambda + 1 beta^T
    std::vector<CMat> F_c; // fusion matrices V diag(V^{-1} K_i)
    Mat K_used;            // possibly reassigned/perturbed gain
    Mat A;                 // plant dynamics (for factored identities)

    bool is_real = false;  // spectrum real -> real views below are valid
    Mat S;
    Vec beta_r;
    std::vector<Mat> F;
};

struct LocalFilterState {
    CVec xi_hat;
    Complex z_last{0.0L, 0.0L};
};

[[nodiscard]] Decomposition build(const kalman::KalmanDesign& design,
                                  const plantsim::SensorSuite& sensors,
                                  const BuildOptions& opts = {});

// z = y_next - beta^T xi_hat; xi_hat' = S xi_hat + 1 z. Pure; no
// communication involved.
[[nodiscard]] LocalFilterState local_filter_step(const Decomposition& dec, Index i,
                                                 const LocalFilterState& state,
                                                 Real y_next);

// Horizontal concatenation [F_1 ... F_m]; real view requires is_real.
[[nodiscard]] Mat fusion_matrix(const Decomposition& dec);
[[nodiscard]] CMat fusion_matrix_c(const Decomposition& dec);

// Coefficients (c_1..c_n) of det(xI - M) = x^n + c_1 x^{n-1} + ... + c_n
// via the Faddeev-LeVerrier recursion (exact in extended precision at desk
// scale). Exposed for the gain-assignment tests.
[[nodiscard]] Vec char_poly_coeffs(const Mat& M);

// Minimum-norm Gauss-Newton update of K0 such that spec(A - K CA) equals
// the target poles (matched through characteristic-polynomial coefficients).
[[nodiscard]] Mat assign_gain_poles(const Mat& A, const Mat& C, const Mat& K0,
                                    const std::vector<Real>& target_poles);

}  // namespace etsync::decomp
