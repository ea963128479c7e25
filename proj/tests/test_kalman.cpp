#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "etsync/kalman.hpp"
#include "etsync/matops.hpp"
#include "fixtures.hpp"

using namespace etsync;

TEST_CASE("design: nothing to estimate when Q = 0 and A stable") {
    plantsim::PlantModel pm;
    pm.A = 0.5L * Mat::Identity(2, 2);
    pm.Q = Mat::Zero(2, 2);
    pm.x0_cov = Mat::Zero(2, 2);
    plantsim::SensorSuite ss;
    ss.C = Mat::Identity(2, 2);
    ss.R = Mat::Identity(2, 2);
    const auto d = kalman::design(pm, ss);
    CHECK(d.P.cwiseAbs().maxCoeff() < 1e-10L);
    CHECK(d.K.cwiseAbs().maxCoeff() < 1e-10L);
    CHECK((d.A_cl - pm.A).cwiseAbs().maxCoeff() < 1e-9L);
}

TEST_CASE("design: scalar gain equals brute-force long-recursion gain") {
    plantsim::PlantModel pm;
    pm.A = Mat::Constant(1, 1, 1.1L);
    pm.Q = Mat::Constant(1, 1, 0.5L);
    pm.x0_cov = Mat::Identity(1, 1);
    plantsim::SensorSuite ss;
    ss.C = Mat::Constant(1, 1, 1.0L);
    ss.R = Mat::Constant(1, 1, 2.0L);
    const auto d = kalman::design(pm, ss);

    Mat P = pm.Q;
    for (int i = 0; i < 300000; ++i) P = matops::dare_step(P, pm.A, ss.C, pm.Q, ss.R);
    const Mat K = matops::kalman_gain(P, ss.C, ss.R);
    CHECK(std::abs(d.K(0, 0) - K(0, 0)) < 1e-8L);
}

TEST_CASE("design: flagship closed loop strictly stable with frozen poles") {
    const auto d = kalman::design(fixtures::plant(), fixtures::sensors());
    const auto spec = matops::eig(d.A_cl).eigenvalues;
    CHECK(std::abs(spec[0].real() - fixtures::kOptPole1) < 1e-12L);
    CHECK(std::abs(spec[1].real() - fixtures::kOptPole2) < 1e-12L);
    for (const auto& lam : spec) CHECK(std::abs(lam) < 1.0L);
    CHECK(std::abs(kalman::filtered_covariance(d).trace() - fixtures::kTracePf) < 1e-11L);
}

TEST_CASE("run_centralized: trivial recursions") {
    const auto pm = fixtures::plant();
    const auto ss = fixtures::sensors();
    auto d = kalman::design(pm, ss);

    plantsim::Trajectory traj;
    traj.states.assign(11, Vec::Zero(2));
    traj.measurements.assign(10, Vec::Zero(4));
    for (const Vec& xh : kalman::run_centralized(d, traj)) {
        CHECK(xh.norm() == 0.0L);  // y = 0, x_hat(0) = 0
    }

    // K = 0 degenerates to pure prediction
    kalman::KalmanDesign pred = d;
    pred.K = Mat::Zero(2, 4);
    pred.A_cl = pm.A;
    plantsim::Trajectory t2 = traj;
    for (auto& y : t2.measurements) y = Vec::Ones(4);
    const auto xs = kalman::run_centralized(pred, t2);
    for (const Vec& xh : xs) CHECK(xh.norm() == 0.0L);
}

TEST_CASE("run_centralized: steady MSE near the filtered covariance trace") {
    const auto pm = fixtures::plant();
    const auto ss = fixtures::sensors();
    const auto d = kalman::design(pm, ss);
    const Real target = kalman::filtered_covariance(d).trace();

    Real mse = 0.0L;
    long count = 0;
    const Index T = 200;
    for (uint64_t seed = 0; seed < 400; ++seed) {
        const auto traj = plantsim::simulate_plant(pm, ss, T, seed);
        const auto xh = kalman::run_centralized(d, traj);
        for (Index k = T / 2; k <= T; ++k) {
            mse += (xh[static_cast<size_t>(k)] - traj.states[static_cast<size_t>(k)]).squaredNorm();
            ++count;
        }
    }
    mse /= static_cast<Real>(count);
    CHECK(std::abs(mse - target) < 0.05L * target);
}

TEST_CASE("run_centralized: innovation whiteness at steady state") {
    const auto pm = fixtures::plant();
    const auto ss = fixtures::sensors();
    const auto d = kalman::design(pm, ss);
    // lag-1 autocorrelation of the innovation y(k+1) - CA x_hat(k)
    Real acc = 0.0L, var = 0.0L;
    long count = 0;
    const Index T = 300;
    for (uint64_t seed = 0; seed < 200; ++seed) {
        const auto traj = plantsim::simulate_plant(pm, ss, T, seed);
        const auto xh = kalman::run_centralized(d, traj);
        Vec prev = Vec::Zero(4);
        for (Index k = 0; k < T; ++k) {
            const Vec innov = traj.measurements[static_cast<size_t>(k)] -
                              ss.C * pm.A * xh[static_cast<size_t>(k)];
            if (k > T / 2) {
                acc += innov.dot(prev);
                var += innov.squaredNorm();
                ++count;
            }
            prev = innov;
        }
    }
    const Real corr = acc / var;
    CHECK(std::abs(corr) < 4.0L / std::sqrt(static_cast<Real>(count)));
}
