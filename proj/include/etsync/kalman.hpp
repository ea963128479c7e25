#pragma once

#include <vector>

#include "etsync/matops.hpp"
#include "etsync/plantsim.hpp"
#include "etsync/types.hpp"

namespace etsync::kalman {

struct KalmanDesign {
    Mat P;     // steady-state prediction-form error covariance
    Mat K;     // fixed gain, n x m
    Mat A_cl;  // A - K C A, strictly stable
    // kept alongside so the estimate recursion can run in the factored form
    // x <- A x + K (y - C A x); updating with a separately rounded A_cl
    // injects a residual forcing that compounds on unstable plants.
    Mat A;
    Mat C;
};

[[nodiscard]] KalmanDesign design(const plantsim::PlantModel& model,
                                  const plantsim::SensorSuite& sensors);

// x_hat(k+1) = (A - KCA) x_hat(k) + K y(k+1), x_hat(0) = 0, evaluated in
// factored form. Returns x_hat(0..T).
[[nodiscard]] std::vector<Vec> run_centralized(const KalmanDesign& design,
                                               const plantsim::Trajectory& traj);

// Filtered covariance (I - KC) P, whose trace is the steady MSE baseline.
[[nodiscard]] Mat filtered_covariance(const KalmanDesign& design);

}  // namespace etsync::kalman
