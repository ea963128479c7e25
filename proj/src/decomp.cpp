#include "etsync/decomp.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "etsync/matops.hpp"

namespace etsync::decomp {

namespace {

constexpr Real kReconTol = 1e-8L;

bool spectrum_usable(const std::vector<Complex>& lam,
                     const std::vector<Complex>& plant_lam, Real tol) {
    for (size_t i = 0; i < lam.size(); ++i) {
        for (size_t j = i + 1; j < lam.size(); ++j) {
            if (std::abs(lam[i] - lam[j]) <= tol) return false;
        }
        for (const Complex& a : plant_lam) {
            if (std::abs(lam[i] - a) <= tol) return false;
        }
    }
    return true;
}

bool spectrum_is_real(const std::vector<Complex>& lam, Real tol) {
    for (const Complex& l : lam) {
        if (std::abs(l.imag()) > tol) return false;
    }
    return true;
}

}  // namespace

Vec char_poly_coeffs(const Mat& M) {
    if (M.rows() != M.cols()) throw NonSquare("char_poly_coeffs: M not square");
    const Index n = M.rows();
    Vec c(n);
    Mat Mk = M;
    for (Index k = 1; k <= n; ++k) {
        c(k - 1) = -Mk.trace() / static_cast<Real>(k);
        if (k < n) Mk = (M * (Mk + c(k - 1) * Mat::Identity(n, n))).eval();
    }
    return c;
}

Mat assign_gain_poles(const Mat& A, const Mat& C, const Mat& K0,
                      const std::vector<Real>& target_poles) {
    const Index n = A.rows();
    const Index m = C.rows();
    if (static_cast<Index>(target_poles.size()) != n) {
        throw DimensionMismatch("assign_gain_poles: need one pole per state");
    }
    // target char-poly coefficients from prod (x - p_j)
    std::vector<Real> poly{1.0L};
    for (Real p : target_poles) {
        std::vector<Real> next(poly.size() + 1, 0.0L);
        for (size_t i = 0; i < poly.size(); ++i) {
            next[i] += poly[i];
            next[i + 1] -= p * poly[i];
        }
        poly = std::move(next);
    }
    Vec target(n);
    for (Index i = 0; i < n; ++i) target(i) = poly[static_cast<size_t>(i + 1)];

    const Mat CA = C * A;
    auto coeffs_at = [&](const Mat& K) { return char_poly_coeffs((A - K * CA).eval()); };

    Mat K = K0;
    const Real coeff_scale = 1.0L + target.cwiseAbs().maxCoeff();
    for (int iter = 0; iter < 100; ++iter) {
        const Vec r = coeffs_at(K) - target;
        if (r.cwiseAbs().maxCoeff() <= 1e-15L * coeff_scale) return K;
        // Jacobian d coeffs / d vec(K), central differences
        Mat J(n, n * m);
        const Real h = 1e-6L;
        for (Index col = 0; col < m; ++col) {
            for (Index row = 0; row < n; ++row) {
                Mat Kp = K, Km = K;
                const Real step = h * (1.0L + std::abs(K(row, col)));
                Kp(row, col) += step;
                Km(row, col) -= step;
                J.col(col * n + row) = (coeffs_at(Kp) - coeffs_at(Km)) / (2.0L * step);
            }
        }
        // minimum-norm step: delta = J^T (J J^T)^{-1} r
        Eigen::FullPivLU<Mat> lu(J * J.transpose());
        if (!lu.isInvertible()) {
            throw SingularSolve("assign_gain_poles: degenerate coefficient Jacobian");
        }
        const Vec delta = J.transpose() * lu.solve(r);
        for (Index col = 0; col < m; ++col) {
            for (Index row = 0; row < n; ++row) {
                K(row, col) -= delta(col * n + row);
            }
        }
    }
    throw ConvergenceFailure("assign_gain_poles: Gauss-Newton did not converge");
}

Decomposition build(const kalman::KalmanDesign& design,
                    const plantsim::SensorSuite& sensors,
                    const BuildOptions& opts) {
    const Mat& A = design.A;
    const Mat& C = design.C;
    const Index n = A.rows();
    const Index m = C.rows();
    const Mat CA = C * A;
    const auto plant_spec = matops::eig(A).eigenvalues;

    Mat K = design.K;
    if (opts.target_poles) {
        K = assign_gain_poles(A, C, K, *opts.target_poles);
    }

    // Distinctness / spectrum-collision handling: retry with small seeded
    // perturbations of K when the closed loop is degenerate.
    std::mt19937_64 perturb_rng(opts.perturb_seed);
    std::uniform_real_distribution<Real> unif(-1.0L, 1.0L);
    Spectrum spec;
    Mat K_used = K;
    bool ok = false;
    for (int attempt = 0; attempt <= opts.max_retries; ++attempt) {
        spec = matops::eig((A - K_used * CA).eval());
        if (spectrum_usable(spec.eigenvalues, plant_spec, opts.collision_tol)) {
            ok = true;
            break;
        }
        const Real scale = opts.perturb_scale * (K.norm() + 1e-12L);
        K_used = K;
        for (Index i = 0; i < n; ++i) {
            for (Index j = 0; j < m; ++j) K_used(i, j) += scale * unif(perturb_rng);
        }
    }
    if (!ok) {
        throw PerturbationExhausted(
            "decomp::build: eigenvalues of A - KCA stayed degenerate after retries");
    }

    Decomposition dec;
    dec.n = n;
    dec.m = m;
    dec.A = A;
    dec.K_used = K_used;
    dec.V = spec.eigenvectors;
    dec.lambda = CVec(n);
    for (Index i = 0; i < n; ++i) dec.lambda(i) = spec.eigenvalues[static_cast<size_t>(i)];

    dec.is_real = spectrum_is_real(spec.eigenvalues, opts.collision_tol);
    if (!dec.is_real && !opts.allow_complex) {
        throw ComplexSpectrumDisallowed(
            "decomp::build: spec(A - KCA) is complex; rerun with allow_complex");
    }
    if (dec.is_real) {
        // scrub the zero imaginary parts so the real views are exact
        dec.lambda = dec.lambda.real().cast<Complex>();
        dec.V = dec.V.real().cast<Complex>();
    }

    // reconstruction sanity: V Lambda V^{-1} must reproduce A - KCA
    {
        const Mat Acl = A - K_used * CA;
        Eigen::FullPivLU<CMat> vlu(dec.V);
        if (!vlu.isInvertible()) throw SingularSolve("decomp::build: eigenvector matrix singular");
        const CMat recon = dec.V * dec.lambda.asDiagonal() * vlu.inverse();
        const Real err = (recon - Acl.cast<Complex>()).cwiseAbs().maxCoeff();
        if (err > kReconTol * (1.0L + Acl.cwiseAbs().maxCoeff())) {
            throw ConvergenceFailure("decomp::build: eigendecomposition reconstruction failed");
        }
        // fusion matrices F_i = V diag(V^{-1} K_i)
        const CMat VinvK = vlu.solve(K_used.cast<Complex>());
        dec.F_c.reserve(static_cast<size_t>(m));
        for (Index i = 0; i < m; ++i) {
            dec.F_c.push_back(dec.V * CVec(VinvK.col(i)).asDiagonal());
        }
    }

    // per-sensor Sylvester solutions: G_i A - Lambda G_i = 1 C_i A
    const CMat Lambda = CMat(dec.lambda.asDiagonal());
    dec.G.reserve(static_cast<size_t>(m));
    for (Index i = 0; i < m; ++i) {
        const CMat rhs = CVec::Ones(n) * CA.row(i).cast<Complex>();
        dec.G.push_back(matops::solve_sylvester(Lambda, A, rhs));
    }

    // shared beta from the stacked system beta^T [G_1 ... G_m] = [C_1 A ... C_m A]
    CMat stacked(n * m, n);
    CVec rhs(n * m);
    for (Index i = 0; i < m; ++i) {
        stacked.middleRows(i * n, n) = dec.G[static_cast<size_t>(i)].transpose();
        rhs.segment(i * n, n) = CA.row(i).transpose().cast<Complex>();
    }
    Eigen::JacobiSVD<CMat> svd(stacked, Eigen::ComputeThinU | Eigen::ComputeThinV);
    dec.beta = svd.solve(rhs);
    const Real beta_res = (stacked * dec.beta - rhs).cwiseAbs().maxCoeff();
    if (beta_res > opts.beta_tol * (1.0L + rhs.cwiseAbs().maxCoeff())) {
        std::ostringstream os;
        os << "decomp::build: stacked beta system inconsistent (residual "
           << static_cast<double>(beta_res) << ")";
        throw InconsistentBetaSystem(os.str());
    }

    dec.S_c = Lambda + CVec::Ones(n) * dec.beta.transpose();

    if (dec.is_real) {
        dec.S = dec.S_c.real();
        dec.beta_r = dec.beta.real();
        dec.F.reserve(static_cast<size_t>(m));
        for (const CMat& f : dec.F_c) dec.F.push_back(f.real());
    }
    return dec;
}

LocalFilterState local_filter_step(const Decomposition& dec, Index i,
                                   const LocalFilterState& state, Real y_next) {
    if (i < 0 || i >= dec.m) throw DimensionMismatch("local_filter_step: sensor index");
    LocalFilterState next;
    next.z_last = Complex(y_next, 0.0L) - (dec.beta.transpose() * state.xi_hat)(0);
    next.xi_hat = dec.S_c * state.xi_hat + CVec::Ones(dec.n) * next.z_last;
    return next;
}

Mat fusion_matrix(const Decomposition& dec) {
    if (!dec.is_real) {
        throw ComplexSpectrumDisallowed("fusion_matrix: real view requires a real spectrum");
    }
    Mat F(dec.n, dec.n * dec.m);
    for (Index i = 0; i < dec.m; ++i) {
        F.middleCols(i * dec.n, dec.n) = dec.F[static_cast<size_t>(i)];
    }
    return F;
}

CMat fusion_matrix_c(const Decomposition& dec) {
    CMat F(dec.n, dec.n * dec.m);
    for (Index i = 0; i < dec.m; ++i) {
        F.middleCols(i * dec.n, dec.n) = dec.F_c[static_cast<size_t>(i)];
    }
    return F;
}

}  // namespace etsync::decomp
