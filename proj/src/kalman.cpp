#include "etsync/kalman.hpp"

#include <cmath>

namespace etsync::kalman {

KalmanDesign design(const plantsim::PlantModel& model,
                    const plantsim::SensorSuite& sensors) {
    model.validate();
    sensors.validate(model.dim());
    if (!matops::is_observable(model.A, sensors.C)) {
        throw NotObservable("kalman::design: (A, C) is not observable");
    }
    KalmanDesign d;
    d.A = model.A;
    d.C = sensors.C;
    d.P = matops::solve_dare_fixed_point(model.A, sensors.C, model.Q, sensors.R);
    d.K = matops::kalman_gain(d.P, sensors.C, sensors.R);
    d.A_cl = model.A - d.K * sensors.C * model.A;
    for (const Complex& lam : matops::eig(d.A_cl).eigenvalues) {
        if (std::abs(lam) >= 1.0L) {
            throw ConvergenceFailure("kalman::design: closed loop A - KCA is not stable");
        }
    }
    return d;
}

std::vector<Vec> run_centralized(const KalmanDesign& design,
                                 const plantsim::Trajectory& traj) {
    const Index n = design.A.rows();
    if (!traj.measurements.empty() && traj.measurements.front().size() != design.C.rows()) {
        throw DimensionMismatch("run_centralized: measurement dim != sensor count");
    }
    std::vector<Vec> xhat;
    xhat.reserve(traj.measurements.size() + 1);
    Vec x = Vec::Zero(n);
    xhat.push_back(x);
    for (const Vec& y : traj.measurements) {
        const Vec pred = design.A * x;
        x = pred + design.K * (y - design.C * pred);
        xhat.push_back(x);
    }
    return xhat;
}

Mat filtered_covariance(const KalmanDesign& design) {
    const Index n = design.A.rows();
    return (Mat::Identity(n, n) - design.K * design.C) * design.P;
}

}  // namespace etsync::kalman
