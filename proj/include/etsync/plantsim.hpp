#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "etsync/errors.hpp"
#include "etsync/rng.hpp"
#include "etsync/types.hpp"

namespace etsync::plantsim {

struct PlantModel {
    Mat A;
    Mat Q;
    Mat x0_cov;

    [[nodiscard]] Index dim() const { return A.rows(); }
    void validate() const;
};

struct SensorSuite {
    Mat C;  // m x n, one row per sensor
    Mat R;  // m x m

    [[nodiscard]] Index count() const { return C.rows(); }
    [[nodiscard]] RowVec row(Index i) const { return C.row(i); }
    void validate(Index n) const;
};

enum class NoiseKind { gaussian_iid, state_dependent, ar1_correlated, cross_correlated };

struct NoiseSpec {
    NoiseKind kind = NoiseKind::gaussian_iid;
    Real variance = 1.0L;       // base/innovation variance
    Real ar_coeff = 0.0L;       // phi in (-1, 1), ar1_correlated only
    Real coupling_gain = 0.0L;  // state_dependent only
    Real cap_factor = 10.0L;    // state-dependent std cap, x iid scale
    Mat cross_cov;              // m x m, cross_correlated only

    void validate(Index agents) const;
};

struct Trajectory {
    std::vector<Vec> states;        // x(0..T)
    std::vector<Vec> measurements;  // y(1..T), stacked per-sensor

    [[nodiscard]] Index horizon() const {
        return static_cast<Index>(measurements.size());
    }
};

// Symmetric PSD square root used to color unit Gaussian draws.
[[nodiscard]] Mat psd_sqrt(const Mat& M);

// Deterministic given seed: x(0) ~ N(0, x0_cov); w, v iid Gaussian with
// covariances Q, R drawn from mutually independent substreams.
[[nodiscard]] Trajectory simulate_plant(const PlantModel& model,
                                        const SensorSuite& sensors,
                                        Index horizon, uint64_t seed);

// Stateful per-network sampler for the standalone synchronization noises
// z_i(k). Holds the AR recursions and the joint cross-correlated draw so the
// per-agent sample_agent_noise call stays a pure read of the round's values.
class AgentNoiseSampler {
  public:
    AgentNoiseSampler(NoiseSpec spec, Index agents, uint64_t seed);

    // Advance one round; eta_norms[i] = ||eta_i(k)|| feeds the
    // state-dependent kind. Returns z(k), one entry per agent.
    Vec step(const std::vector<Real>& eta_norms);

    [[nodiscard]] const NoiseSpec& spec() const { return spec_; }

  private:
    NoiseSpec spec_;
    Index agents_;
    std::vector<rng::Stream> streams_;
    Vec ar_state_;
    Mat cross_sqrt_;
};

// Single draw of one agent's noise for the given round. ar_carry holds the
// previous AR(1) output for that agent (in/out); cross_correlated is a joint
// draw across agents and only available through AgentNoiseSampler.
[[nodiscard]] Real sample_agent_noise(const NoiseSpec& spec, Index agent_index,
                                      Index k, Real eta_norm, rng::Stream& stream,
                                      Real* ar_carry = nullptr);

}  // namespace etsync::plantsim
