#include "etsync/matops.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace etsync::matops {

namespace {

void require_square(const Mat& M, const char* who) {
    if (M.rows() != M.cols()) {
        std::ostringstream os;
        os << who << ": matrix is " << M.rows() << "x" << M.cols();
        throw NonSquare(os.str());
    }
}

}  // namespace

Spectrum eig(const Mat& M) {
    require_square(M, "eig");
    Eigen::EigenSolver<Mat> es(M, /*computeEigenvectors=*/true);
    if (es.info() != Eigen::Success) {
        throw ConvergenceFailure("eig: QR iteration did not converge");
    }
    const Index n = M.rows();
    std::vector<Index> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    const auto& vals = es.eigenvalues();
    std::sort(order.begin(), order.end(), [&](Index a, Index b) {
        if (vals[a].real() != vals[b].real()) return vals[a].real() < vals[b].real();
        return vals[a].imag() < vals[b].imag();
    });
    Spectrum out;
    out.eigenvalues.reserve(static_cast<size_t>(n));
    out.eigenvectors.resize(n, n);
    for (Index j = 0; j < n; ++j) {
        out.eigenvalues.push_back(vals[order[static_cast<size_t>(j)]]);
        out.eigenvectors.col(j) = es.eigenvectors().col(order[static_cast<size_t>(j)]);
    }
    return out;
}

Real mahler_measure(const Mat& M) {
    Real prod = 1.0L;
    for (const Complex& lam : eig(M).eigenvalues) {
        const Real a = std::abs(lam);
        if (a >= 1.0L) prod *= a;
    }
    return prod;
}

Mat dare_step(const Mat& P, const Mat& A, const Mat& C, const Mat& Q,
              const Mat& R) {
    const Mat PCt = P * C.transpose();
    const Mat innov = C * PCt + R;
    Eigen::FullPivLU<Mat> lu(innov);
    if (!lu.isInvertible()) {
        throw SingularInnovation("dare_step: C P C^T + R is singular");
    }
    Mat next = A * (P - PCt * lu.solve(PCt.transpose())) * A.transpose() + Q;
    return ((next + next.transpose()) / 2.0L).eval();
}

Mat solve_dare_fixed_point(const Mat& A, const Mat& C, const Mat& Q,
                           const Mat& R, Real dare_tol, long max_iter) {
    require_square(A, "solve_dare_fixed_point");
    if (!is_observable(A, C)) {
        throw NotObservable("solve_dare_fixed_point: (A, C) is not observable");
    }
    Mat P = ((Q + Q.transpose()) / 2.0L).eval();
    for (long it = 0; it < max_iter; ++it) {
        Mat next = dare_step(P, A, C, Q, R);
        const Real delta = (next - P).cwiseAbs().maxCoeff();
        P = std::move(next);
        if (delta <= dare_tol) return P;
    }
    throw MaxIterationsExceeded("solve_dare_fixed_point: no fixed point after max_iter steps");
}

Mat kalman_gain(const Mat& P, const Mat& C, const Mat& R) {
    const Mat innov = C * P * C.transpose() + R;
    Eigen::FullPivLU<Mat> lu(innov);
    if (!lu.isInvertible()) {
        throw SingularInnovation("kalman_gain: C P C^T + R is singular");
    }
    // K^T from innov K^T = C P^T keeps the solve on the symmetric factor.
    return lu.solve(C * P.transpose()).transpose();
}

Real default_riccati_shift(const Mat& S) {
    return 1e-6L * (S.transpose() * S).trace() / static_cast<Real>(S.rows());
}

Mat solve_modified_riccati(const Mat& S, const Vec& B, Real zeta, Real eps,
                           Real tol, long max_iter) {
    require_square(S, "solve_modified_riccati");
    if (eps <= 0.0L) throw InvalidSpec("solve_modified_riccati: eps must be > 0");
    if (!is_controllable(S, B)) {
        throw NotControllable("solve_modified_riccati: (S, B) is not controllable");
    }
    const Real mahler = mahler_measure(S);
    if (zeta * mahler >= 1.0L) {
        std::ostringstream os;
        os << "solve_modified_riccati: zeta=" << static_cast<double>(zeta)
           << " violates zeta * Mahler(S) < 1 (Mahler=" << static_cast<double>(mahler) << ")";
        throw InfeasibleZeta(os.str());
    }
    const Index n = S.rows();
    const Real contraction = 1.0L - zeta * zeta;
    Mat P = Mat::Identity(n, n);
    for (long it = 0; it < max_iter; ++it) {
        const Vec PB = P * B;
        const Real btpb = B.dot(PB);
        if (!(btpb > 0.0L)) {
            throw SingularSolve("solve_modified_riccati: B^T P B not positive");
        }
        const RowVec btps = PB.transpose() * S;  // B^T P S
        Mat next = S.transpose() * P * S - (contraction / btpb) * (btps.transpose() * btps)
                 + eps * Mat::Identity(n, n);
        next = ((next + next.transpose()) / 2.0L).eval();
        const Real delta = (next - P).cwiseAbs().maxCoeff();
        const Real scale = next.cwiseAbs().maxCoeff();
        P = std::move(next);
        if (delta <= tol * (1.0L + scale)) return P;
    }
    throw MaxIterationsExceeded("solve_modified_riccati: no fixed point after max_iter steps");
}

CMat solve_sylvester(const CMat& Lambda, const Mat& A, const CMat& RHS) {
    if (Lambda.rows() != Lambda.cols()) throw NonSquare("solve_sylvester: Lambda not square");
    if (A.rows() != A.cols()) throw NonSquare("solve_sylvester: A not square");
    const Index p = Lambda.rows();
    const Index n = A.rows();
    if (RHS.rows() != p || RHS.cols() != n) {
        throw DimensionMismatch("solve_sylvester: RHS shape does not match Lambda x A");
    }

    const auto specA = eig(A).eigenvalues;
    // Common-eigenvalue guard straight from the two spectra (Lambda is
    // diagonal in every call site, but do it generally via its eigenvalues).
    Eigen::ComplexEigenSolver<CMat> lam_es(Lambda);
    const Real scale = A.cwiseAbs().maxCoeff() + Lambda.cwiseAbs().maxCoeff() + 1.0L;
    for (Index i = 0; i < p; ++i) {
        for (const Complex& a : specA) {
            if (std::abs(lam_es.eigenvalues()[i] - a) <= 1e-12L * scale) {
                throw CommonEigenvalue("solve_sylvester: spec(A) and spec(Lambda) intersect");
            }
        }
    }

    // vec(G A) = (A^T kron I_p) vec(G); vec(Lambda G) = (I_n kron Lambda) vec(G)
    const Index N = p * n;
    CMat lhs = CMat::Zero(N, N);
    CVec rhs(N);
    for (Index j = 0; j < n; ++j) {
        for (Index i = 0; i < n; ++i) {
            // block (j, i) of A^T kron I_p is A(i, j) * I_p
            if (A(i, j) != 0.0L) {
                lhs.block(j * p, i * p, p, p) +=
                    Complex(A(i, j), 0.0L) * CMat::Identity(p, p);
            }
        }
        lhs.block(j * p, j * p, p, p) -= Lambda;
        rhs.segment(j * p, p) = RHS.col(j);
    }
    Eigen::FullPivLU<CMat> lu(lhs);
    if (!lu.isInvertible()) {
        throw SingularSolve("solve_sylvester: Kronecker system is singular");
    }
    const CVec g = lu.solve(rhs);
    CMat G(p, n);
    for (Index j = 0; j < n; ++j) G.col(j) = g.segment(j * p, p);
    return G;
}

Index numeric_rank(const Mat& M, Real rel_tol) {
    Eigen::JacobiSVD<Mat> svd(M);
    const auto& sv = svd.singularValues();
    if (sv.size() == 0) return 0;
    const Real thresh = rel_tol * sv(0);
    Index r = 0;
    for (Index i = 0; i < sv.size(); ++i) {
        if (sv(i) > thresh) ++r;
    }
    return r;
}

bool is_observable(const Mat& A, const Mat& C) {
    if (A.rows() != A.cols() || C.cols() != A.rows()) {
        throw DimensionMismatch("is_observable: incompatible A, C");
    }
    const Index n = A.rows();
    Mat obs(C.rows() * n, n);
    Mat block = C;
    for (Index k = 0; k < n; ++k) {
        obs.middleRows(k * C.rows(), C.rows()) = block;
        block = (block * A).eval();
    }
    return numeric_rank(obs) == n;
}

bool is_controllable(const Mat& S, const Mat& B) {
    if (S.rows() != S.cols() || B.rows() != S.rows()) {
        throw DimensionMismatch("is_controllable: incompatible S, B");
    }
    const Index n = S.rows();
    Mat ctrb(n, B.cols() * n);
    Mat block = B;
    for (Index k = 0; k < n; ++k) {
        ctrb.middleCols(k * B.cols(), B.cols()) = block;
        block = (S * block).eval();
    }
    return numeric_rank(ctrb) == n;
}

}  // namespace etsync::matops
