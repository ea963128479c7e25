// Acceptance gate: one line per criterion, nonzero exit when any fail.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "etsync/destimator.hpp"
#include "etsync/matops.hpp"
#include "etsync/rng.hpp"
#include "etsync/runner.hpp"
#include "fixtures.hpp"

using namespace etsync;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int idx, const std::string& name, bool pass, const std::string& detail) {
    std::printf("[%s] %2d. %-28s %s\n", pass ? "PASS" : "FAIL", idx, name.c_str(),
                detail.c_str());
    if (!pass) ++g_failures;
}

std::string fmt(Real v, int prec = 3) {
    std::ostringstream os;
    os.precision(prec);
    os << static_cast<double>(v);
    return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace

int main() {
    const runner::Pipeline pipe = runner::build_pipeline(fixtures::sec5_config());
    const destimator::Setup setup = pipe.setup();
    const unsigned hw = std::thread::hardware_concurrency();
    const int workers = hw == 0 ? 1 : static_cast<int>(hw);

    // ---- 1. exact fusion of local estimates into the central one ----
    // The plant is unstable, so the state (and x_hat with it) grows to ~1e16
    // over 400 steps; the residual bound is read against that scale,
    // 1e-6 * (1 + max_k ||x_hat(k)||), as stated.
    {
        Real worst = 0.0L;
        double worst_t = 0.0;
        bool ok = true;
        // several seeds and a second, very different trigger setting
        destimator::Setup alt = setup;
        alt.trigger.c0 = 0.5L;
        alt.trigger.c1 = 1.0L;
        alt.trigger.rho = 0.9L;
        for (const destimator::Setup* s :
             std::initializer_list<const destimator::Setup*>{&setup, &alt}) {
            for (uint64_t seed : {1ULL, 12061947ULL, 987654321ULL}) {
                const auto t0 = std::chrono::steady_clock::now();
                const auto res = destimator::run_trial(*s, 400, seed, destimator::Mode::event);
                const double dt = seconds_since(t0);
                worst_t = std::max(worst_t, dt);
                const Real bound = 1e-6L * (1.0L + res.max_xhat_norm);
                worst = std::max(worst, res.max_avg_identity_residual / bound);
                ok = ok && res.max_avg_identity_residual <= bound && dt < 1.0;
            }
        }
        report(1, "fusion identity", ok,
               "max residual/bound = " + fmt(worst) + ", slowest trial " +
                   fmt(static_cast<Real>(worst_t)) + " s");
    }

    // ---- 2. lossless decomposition sum_i F_i xi_i = x_hat ----
    {
        const auto t0 = std::chrono::steady_clock::now();
        const auto res = destimator::run_trial(setup, 400, 20260823ULL, destimator::Mode::event);
        const double dt = seconds_since(t0);
        const bool ok = res.max_fusion_rel <= 1e-6L && dt < 1.0;
        report(2, "lossless decomposition", ok,
               "max ||sum F_i xi_i - x_hat|| / (1+||x_hat||) = " + fmt(res.max_fusion_rel) +
                   " (abs " + fmt(res.max_fusion_residual) + " at state scale " +
                   fmt(res.max_xhat_norm) + ")");
    }

    // ---- 3. consistency of the eta-average recursion ----
    {
        Real worst = 0.0L;
        const auto ev = destimator::run_trial(setup, 400, 5ULL, destimator::Mode::event);
        const auto fu = destimator::run_trial(setup, 400, 5ULL, destimator::Mode::full);
        worst = std::max({worst, ev.max_consistency_residual, fu.max_consistency_residual});

        // sync-only mode: standalone agents under the sync_demo dynamics
        runner::RunConfig sc = runner::preset("sync_demo");
        const auto g = sc.graph.build();
        const auto gspec = netgraph::spectrum(g);
        const Vec B = syncctl::default_input_direction(sc.sync->S);
        const Real zeta = syncctl::choose_zeta(sc.sync->S, gspec, std::nullopt);
        const auto design = syncctl::design_gamma(sc.sync->S, B, gspec, zeta);
        const std::vector<Vec> L(4, Vec::Ones(2));
        for (bool full : {false, true}) {
            rng::Stream s(321);
            std::vector<Vec> eta0;
            for (int i = 0; i < 4; ++i) eta0.push_back(Vec{{s.gaussian(), s.gaussian()}});
            auto net = syncctl::init_network(eta0);
            for (Index k = 0; k < 300; ++k) {
                Vec mean0 = Vec::Zero(2);
                for (const auto& a : net.agents) mean0 += a.eta / 4.0L;
                Vec z(4);
                for (Index i = 0; i < 4; ++i) z(i) = 0.3L * s.gaussian();
                syncctl::network_step(net, g, design, z, L, sc.trigger, full);
                Vec mean1 = Vec::Zero(2);
                for (const auto& a : net.agents) mean1 += a.eta / 4.0L;
                Vec expect = design.S * mean0;
                for (Index i = 0; i < 4; ++i) expect += L[static_cast<size_t>(i)] * z(i) / 4.0L;
                worst = std::max(worst, (mean1 - expect).norm() / (1.0L + mean1.norm()));
            }
        }
        report(3, "consistency identity", worst <= 1e-10L,
               "max per-step residual = " + fmt(worst) + " (<= 1e-10)");
    }

    // ---- 4. Gamma reproduction with a strict certificate ----
    {
        const RowVec& G = pipe.sdesign.Gamma;
        const bool close = std::abs(G(0) - 0.80L) <= 0.05L && std::abs(G(1) + 0.41L) <= 0.05L;

        const Mat& S = pipe.sdesign.S;
        const Vec& B = pipe.sdesign.B;
        const Mat& P = pipe.sdesign.P_lyap;
        const Real zeta = pipe.sdesign.zeta;
        const Real eps = matops::default_riccati_shift(S);
        const Mat SPB = S.transpose() * P * B;
        const Mat resid = P - S.transpose() * P * S +
                          (1.0L - zeta * zeta) * SPB * SPB.transpose() / B.dot(P * B);
        Eigen::SelfAdjointEigenSolver<Mat> es(resid);
        const bool cert = es.eigenvalues().minCoeff() >= eps / 2.0L;
        report(4, "gamma reproduction", close && cert,
               "Gamma = [" + fmt(G(0)) + ", " + fmt(G(1)) + "] vs [0.80, -0.41] +- 0.05; " +
                   "certificate min-eig " + fmt(es.eigenvalues().minCoeff()) + " >= " +
                   fmt(eps / 2.0L));
    }

    // ---- 5. feasibility numbers of the 4-ring ----
    {
        const std::vector<Real> expect{0.0L, 2.0L, 2.0L, 4.0L};
        Real worst = 0.0L;
        for (size_t i = 0; i < 4; ++i) {
            worst = std::max(worst, std::abs(pipe.spectrum.mu[i] - expect[i]));
        }
        const Real thr = netgraph::feasibility_threshold(pipe.spectrum);
        bool zeta_ok = false;
        try {
            zeta_ok = syncctl::choose_zeta(pipe.dec.S, pipe.spectrum, 0.5L) == 0.5L;
        } catch (const Error&) {
        }
        const bool ok = worst <= 1e-10L && std::abs(thr - 3.0L) <= 1e-10L && zeta_ok;
        report(5, "feasibility numbers", ok,
               "mu = {0,2,2,4} +- " + fmt(worst) + ", threshold = " + fmt(thr) +
                   ", zeta = 0.5 accepted");
    }

    // ---- 6/7/8 share one 1000-trial Monte Carlo ----
    const auto mc_t0 = std::chrono::steady_clock::now();
    const auto agg = destimator::monte_carlo(setup, 1000, 400, 12061947ULL, workers);
    const double mc_dt = seconds_since(mc_t0);

    {
        bool slope_ok = true, level_ok = true;
        Real worst_slope = -1e30L, worst_mse = 0.0L;
        for (Index i = 0; i < agg.sensors; ++i) {
            const Real s = agg.mse_slope[static_cast<size_t>(i)];
            const Real hwi = agg.mse_slope_hw[static_cast<size_t>(i)];
            slope_ok = slope_ok && (s - hwi <= 0.0L);
            worst_slope = std::max(worst_slope, s - hwi);
            const Real mse = agg.mse_event_mean[static_cast<size_t>(i)];
            level_ok = level_ok && mse < 10.0L * pipe.kdesign.P.trace();
            worst_mse = std::max(worst_mse, mse);
        }
        report(6, "stability", slope_ok && level_ok,
               "worst slope-CI bound " + fmt(worst_slope) + " <= 0, max steady MSE " +
                   fmt(worst_mse) + " < " + fmt(10.0L * pipe.kdesign.P.trace()));
    }
    {
        const bool ok = agg.comm_rate_mean <= 0.75L && agg.loss_steady <= 0.10L &&
                        mc_dt < 300.0;
        report(7, "rate/loss trade-off", ok,
               "rate " + fmt(agg.comm_rate_mean, 4) + " <= 0.75, steady loss " +
                   fmt(agg.loss_steady * 100.0L) + "% <= 10% (whole-horizon " +
                   fmt(agg.loss_whole * 100.0L) + "%), " + fmt(static_cast<Real>(mc_dt)) +
                   " s for 1000 paired trials");
    }
    {
        report(8, "trigger soundness", agg.trigger_violations == 0,
               std::to_string(agg.trigger_violations) + " violations over 1000 trials");
    }

    // ---- 9. independent numeric oracles ----
    {
        bool ok = true;
        std::ostringstream det;

        // DARE fixed point vs a plain million-step recursion
        const Mat P_fp = matops::solve_dare_fixed_point(pipe.model.A, pipe.sensors.C,
                                                        pipe.model.Q, pipe.sensors.R);
        Mat P_it = pipe.model.Q;
        for (long i = 0; i < 1'000'000; ++i) {
            P_it = matops::dare_step(P_it, pipe.model.A, pipe.sensors.C, pipe.model.Q,
                                     pipe.sensors.R);
        }
        const Real dare_diff = (P_fp - P_it).cwiseAbs().maxCoeff();
        ok = ok && dare_diff <= 1e-8L;
        det << "DARE diff " << fmt(dare_diff);

        // Sylvester: 100 random feasible instances, residual check
        std::mt19937_64 rgen(4242);
        std::uniform_real_distribution<Real> unif(-1.0L, 1.0L);
        Real worst_syl = 0.0L;
        for (int inst = 0; inst < 100; ++inst) {
            const Index n = 2 + static_cast<Index>(inst % 2);
            Mat A(n, n);
            for (Index r = 0; r < n; ++r)
                for (Index c = 0; c < n; ++c) A(r, c) = unif(rgen);
            // diagonal Lambda placed well away from spec(A) (|eig(A)| <= n)
            CVec lam(n);
            for (Index r = 0; r < n; ++r) {
                lam(r) = Complex(5.0L + unif(rgen), unif(rgen));
            }
            CMat RHS(n, n);
            for (Index r = 0; r < n; ++r)
                for (Index c = 0; c < n; ++c) RHS(r, c) = Complex(unif(rgen), unif(rgen));
            const CMat Lam = lam.asDiagonal();
            const CMat G = matops::solve_sylvester(Lam, A, RHS);
            const Real resid =
                (G * A.cast<Complex>() - Lam * G - RHS).cwiseAbs().maxCoeff() /
                (1.0L + G.cwiseAbs().maxCoeff());
            worst_syl = std::max(worst_syl, resid);
        }
        ok = ok && worst_syl <= 1e-10L;
        det << ", Sylvester worst " << fmt(worst_syl);

        // Laplacian spectra vs closed-form eigenvalues for m <= 4
        struct Case {
            netgraph::CommGraph g;
            std::vector<Real> mu;
        };
        const Real r2 = std::sqrt(2.0L);
        const std::vector<Case> cases{
            {netgraph::path(2), {0.0L, 2.0L}},
            {netgraph::path(3), {0.0L, 1.0L, 3.0L}},
            {netgraph::path(4), {0.0L, 2.0L - r2, 2.0L, 2.0L + r2}},
            {netgraph::ring(3), {0.0L, 3.0L, 3.0L}},
            {netgraph::ring(4), {0.0L, 2.0L, 2.0L, 4.0L}},
            {netgraph::star(3), {0.0L, 1.0L, 3.0L}},
            {netgraph::star(4), {0.0L, 1.0L, 1.0L, 4.0L}},
            {netgraph::complete(3), {0.0L, 3.0L, 3.0L}},
            {netgraph::complete(4), {0.0L, 4.0L, 4.0L, 4.0L}},
        };
        Real worst_lap = 0.0L;
        for (const Case& c : cases) {
            const auto s = netgraph::spectrum(c.g);
            for (size_t i = 0; i < c.mu.size(); ++i) {
                worst_lap = std::max(worst_lap, std::abs(s.mu[i] - c.mu[i]));
            }
        }
        ok = ok && worst_lap <= 1e-10L;
        det << ", Laplacian worst " << fmt(worst_lap);
        report(9, "oracle equivalences", ok, det.str());
    }

    // ---- 10. byte-identical aggregates across runs and worker counts ----
    {
        runner::RunConfig cfg = fixtures::sec5_config(4, 120);
        const fs::path base = fs::temp_directory_path() / "etsync-acceptance";
        fs::remove_all(base);
        std::vector<std::string> dumps;
        for (int w : {1, 1, workers > 1 ? workers : 3}) {
            cfg.workers = w;
            const fs::path d = base / ("w" + std::to_string(dumps.size()));
            if (runner::run(cfg, d.string(), true) != 0) break;
            dumps.push_back(slurp(d / "aggregate.json"));
        }
        const bool ok = dumps.size() == 3 && !dumps[0].empty() && dumps[0] == dumps[1] &&
                        dumps[0] == dumps[2];
        report(10, "determinism", ok,
               ok ? "aggregate.json byte-identical across repeats and worker counts"
                  : "aggregate.json differs between runs");
        fs::remove_all(base);
    }

    if (g_failures == 0) {
        std::printf("acceptance: all 10 criteria passed\n");
    } else {
        std::printf("acceptance: %d criterion(s) FAILED\n", g_failures);
    }
    return g_failures;
}
