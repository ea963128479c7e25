#pragma once

// Shared test fixture: the flagship four-sensor scenario and values frozen
// from an independent high-precision (50-digit) reference implementation.

#include "etsync/plantsim.hpp"
#include "etsync/runner.hpp"
#include "etsync/types.hpp"

namespace fixtures {

using namespace etsync;

inline plantsim::PlantModel plant() {
    plantsim::PlantModel pm;
    pm.A = Mat{{0.9L, 0.0L}, {0.0L, 1.1L}};
    pm.Q = 0.5L * Mat::Identity(2, 2);
    pm.x0_cov = Mat::Identity(2, 2);
    return pm;
}

inline plantsim::SensorSuite sensors() {
    plantsim::SensorSuite ss;
    ss.C = Mat{{1.0L, 0.0L}, {0.0L, 1.0L}, {1.0L, 1.0L}, {1.0L, -1.0L}};
    ss.R = 2.0L * Mat::Identity(4, 4);
    return ss;
}

inline std::vector<Real> target_poles() { return {0.63L, 0.70L}; }

// ---- frozen reference values ----

// steady-state prediction covariance trace for the scenario above
inline constexpr Real kTraceP = 1.7735442158650302L;
// eigenvalues of A - K CA at the unmodified optimal gain
inline constexpr Real kOptPole1 = 0.41092797751264411L;
inline constexpr Real kOptPole2 = 0.44531681494643176L;
// filtered covariance trace (I - KC) P at the optimal gain
inline constexpr Real kTracePf = 0.75905326012410969L;
// S = Lambda + 1 beta^T after moving the poles to {0.63, 0.70}
inline const Mat kSPlaced{{2.4428571428571430L, -1.1428571428571428L},
                          {1.8128571428571432L, -0.4428571428571428L}};
// synchronizing gain for the placed S on the 4-ring with zeta = 0.5
inline constexpr Real kGamma1 = 0.82089210997058807L;
inline constexpr Real kGamma2 = -0.38829282060223570L;

inline runner::RunConfig sec5_config(Index trials = 1, Index horizon = 400) {
    runner::RunConfig cfg = runner::preset("paper_sec5");
    cfg.trials = trials;
    cfg.horizon = horizon;
    return cfg;
}

}  // namespace fixtures
