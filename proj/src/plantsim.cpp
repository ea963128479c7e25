#include "etsync/plantsim.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <sstream>

namespace etsync::plantsim {

namespace {

constexpr Real kPsdTol = 1e-10L;

// Fixed tags for substream derivation; plant/sensor/agent streams stay
// independent of each other and of any future tag additions.
enum : uint64_t {
    kTagInitial = 0x01,
    kTagProcess = 0x02,
    kTagMeasureBase = 0x1000,
    kTagAgentBase = 0x2000,
};

void require_psd(const Mat& M, const char* name) {
    if (M.rows() != M.cols()) {
        throw DimensionMismatch(std::string(name) + ": covariance not square");
    }
    if (((M - M.transpose()).cwiseAbs().maxCoeff()) > kPsdTol * (1.0L + M.cwiseAbs().maxCoeff())) {
        throw InvalidSpec(std::string(name) + ": covariance not symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Mat> es(M, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -kPsdTol) {
        throw InvalidSpec(std::string(name) + ": covariance has negative eigenvalue");
    }
}

Vec colored_draw(const Mat& sqrt_cov, rng::Stream& stream) {
    Vec u(sqrt_cov.cols());
    for (Index i = 0; i < u.size(); ++i) u(i) = stream.gaussian();
    return sqrt_cov * u;
}

}  // namespace

void PlantModel::validate() const {
    const Index n = A.rows();
    if (A.cols() != n) throw DimensionMismatch("PlantModel: A not square");
    if (Q.rows() != n || Q.cols() != n) throw DimensionMismatch("PlantModel: Q shape");
    if (x0_cov.rows() != n || x0_cov.cols() != n) throw DimensionMismatch("PlantModel: x0_cov shape");
    require_psd(Q, "PlantModel.Q");
    require_psd(x0_cov, "PlantModel.x0_cov");
}

void SensorSuite::validate(Index n) const {
    if (C.cols() != n) throw DimensionMismatch("SensorSuite: C column count != plant dim");
    if (C.rows() < 1) throw DimensionMismatch("SensorSuite: need at least one sensor");
    if (R.rows() != C.rows() || R.cols() != C.rows()) {
        throw DimensionMismatch("SensorSuite: R shape != sensor count");
    }
    require_psd(R, "SensorSuite.R");
}

void NoiseSpec::validate(Index agents) const {
    if (variance < 0.0L) throw InvalidSpec("NoiseSpec: negative variance");
    switch (kind) {
        case NoiseKind::gaussian_iid:
            break;
        case NoiseKind::state_dependent:
            if (coupling_gain < 0.0L) throw InvalidSpec("NoiseSpec: negative coupling gain");
            if (cap_factor <= 0.0L) throw InvalidSpec("NoiseSpec: cap factor must be positive");
            break;
        case NoiseKind::ar1_correlated:
            if (!(ar_coeff > -1.0L && ar_coeff < 1.0L)) {
                throw InvalidSpec("NoiseSpec: AR coefficient must lie in (-1, 1)");
            }
            break;
        case NoiseKind::cross_correlated:
            if (cross_cov.rows() != agents || cross_cov.cols() != agents) {
                throw InvalidSpec("NoiseSpec: cross covariance shape != agent count");
            }
            require_psd(cross_cov, "NoiseSpec.cross_cov");
            break;
    }
}

Mat psd_sqrt(const Mat& M) {
    require_psd(M, "psd_sqrt");
    Eigen::SelfAdjointEigenSolver<Mat> es(M);
    Vec d = es.eigenvalues();
    for (Index i = 0; i < d.size(); ++i) d(i) = d(i) > 0.0L ? std::sqrt(d(i)) : 0.0L;
    return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

Trajectory simulate_plant(const PlantModel& model, const SensorSuite& sensors,
                          Index horizon, uint64_t seed) {
    model.validate();
    sensors.validate(model.dim());
    if (horizon < 1) throw InvalidSpec("simulate_plant: horizon must be >= 1");

    const Mat sqrt_x0 = psd_sqrt(model.x0_cov);
    const Mat sqrt_q = psd_sqrt(model.Q);
    const Mat sqrt_r = psd_sqrt(sensors.R);

    rng::Stream init_stream(rng::substream_seed(seed, kTagInitial));
    rng::Stream process_stream(rng::substream_seed(seed, kTagProcess));
    rng::Stream measure_stream(rng::substream_seed(seed, kTagMeasureBase));

    Trajectory traj;
    traj.states.reserve(static_cast<size_t>(horizon) + 1);
    traj.measurements.reserve(static_cast<size_t>(horizon));

    Vec x = colored_draw(sqrt_x0, init_stream);
    traj.states.push_back(x);
    for (Index k = 0; k < horizon; ++k) {
        x = (model.A * x + colored_draw(sqrt_q, process_stream)).eval();
        traj.states.push_back(x);
        traj.measurements.push_back(sensors.C * x + colored_draw(sqrt_r, measure_stream));
    }
    return traj;
}

Real sample_agent_noise(const NoiseSpec& spec, Index agent_index, Index k,
                        Real eta_norm, rng::Stream& stream, Real* ar_carry) {
    (void)agent_index;
    (void)k;
    const Real sigma = std::sqrt(spec.variance);
    switch (spec.kind) {
        case NoiseKind::gaussian_iid:
            return sigma * stream.gaussian();
        case NoiseKind::state_dependent: {
            Real sd = spec.coupling_gain * eta_norm;
            const Real cap = spec.cap_factor * sigma;
            if (sd > cap) sd = cap;  // keep covariance bounded on any trajectory
            return std::sqrt(sigma * sigma + sd * sd) * stream.gaussian();
        }
        case NoiseKind::ar1_correlated: {
            const Real prev = ar_carry ? *ar_carry : 0.0L;
            const Real z = spec.ar_coeff * prev + sigma * stream.gaussian();
            if (ar_carry) *ar_carry = z;
            return z;
        }
        case NoiseKind::cross_correlated:
            throw InvalidSpec("sample_agent_noise: cross_correlated is a joint draw; use AgentNoiseSampler");
    }
    throw InvalidSpec("sample_agent_noise: unknown kind");
}

AgentNoiseSampler::AgentNoiseSampler(NoiseSpec spec, Index agents, uint64_t seed)
    : spec_(std::move(spec)), agents_(agents) {
    spec_.validate(agents_);
    streams_.reserve(static_cast<size_t>(agents_));
    for (Index i = 0; i < agents_; ++i) {
        streams_.emplace_back(rng::substream_seed(seed, kTagAgentBase + static_cast<uint64_t>(i)));
    }
    ar_state_ = Vec::Zero(agents_);
    if (spec_.kind == NoiseKind::cross_correlated) cross_sqrt_ = psd_sqrt(spec_.cross_cov);
}

Vec AgentNoiseSampler::step(const std::vector<Real>& eta_norms) {
    if (static_cast<Index>(eta_norms.size()) != agents_) {
        throw DimensionMismatch("AgentNoiseSampler::step: eta_norms size");
    }
    Vec z(agents_);
    if (spec_.kind == NoiseKind::cross_correlated) {
        // joint draw from agent 0's stream keeps the other streams untouched
        Vec u(agents_);
        for (Index i = 0; i < agents_; ++i) u(i) = streams_[0].gaussian();
        z = cross_sqrt_ * u;
        return z;
    }
    for (Index i = 0; i < agents_; ++i) {
        Real carry = ar_state_(i);
        z(i) = sample_agent_noise(spec_, i, 0, eta_norms[static_cast<size_t>(i)],
                                  streams_[static_cast<size_t>(i)], &carry);
        ar_state_(i) = carry;
    }
    return z;
}

}  // namespace etsync::plantsim
