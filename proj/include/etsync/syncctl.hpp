#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "etsync/netgraph.hpp"
#include "etsync/types.hpp"

namespace etsync::syncctl {

struct FeasibilityCertificate {
    Real mahler = 0.0L;
    Real threshold = 0.0L;
    Real zeta = 0.0L;
    bool feasible = false;
};

struct SyncDesign {
    Mat S;
    Vec B;
    RowVec Gamma;
    Mat P_lyap;
    Real zeta = 0.0L;
    Real mu2 = 0.0L;
    Real mu_m = 0.0L;
    FeasibilityCertificate certificate;
};

struct TriggerParams {
    Real c0 = 0.1L;
    Real c1 = 1.0L;
    Real rho = 0.95L;

    void validate() const;
    [[nodiscard]] Real threshold(Index k) const;
};

struct AgentState {
    Vec eta;                  // eta_i(k)
    Vec held;                 // S^(k - k_s) eta_i(k_s), advanced incrementally
    Vec last_broadcast_value; // eta_i(k_s)
    Index last_broadcast_time = 0;
    long trigger_count = 0;
};

struct NetworkState {
    std::vector<AgentState> agents;
    Index k = 0;
    // event_log[t] = agents that broadcast at time t (t=0 is the mandatory
    // initial round)
    std::vector<std::vector<Index>> event_log;
};

// Mahler(S) against the Laplacian threshold; throws on infeasible instances
// with both numbers in the message.
[[nodiscard]] FeasibilityCertificate check_feasibility(
    const Mat& S, const netgraph::LaplacianSpectrum& spec);

// Validate a requested zeta against Mahler(S) < 1/zeta <= threshold, or pick
// the midpoint of the valid interval in 1/zeta coordinates.
[[nodiscard]] Real choose_zeta(const Mat& S, const netgraph::LaplacianSpectrum& spec,
                               std::optional<Real> requested = std::nullopt);

// Gamma = (2 / (mu2 + mu_m)) B^T P S / (B^T P B), with P from the modified
// Riccati fixed point.
[[nodiscard]] SyncDesign design_gamma(const Mat& S, const Vec& B,
                                      const netgraph::LaplacianSpectrum& spec,
                                      Real zeta);

// Default actuation direction when the application leaves B free; falls back
// to a deterministic seeded redraw if (S, ones) happens to be uncontrollable.
[[nodiscard]] Vec default_input_direction(const Mat& S, uint64_t seed = 0xb0ULL);

[[nodiscard]] NetworkState init_network(const std::vector<Vec>& eta0);

// S^(k - k_s) eta(k_s), recomputed from scratch (reference form; the round
// loop advances AgentState::held incrementally instead).
[[nodiscard]] Vec held_state(const AgentState& agent, const Mat& S, Index k);

// u_i(k) = Gamma sum_j a_ij (held_j - held_i)
[[nodiscard]] Real control_input(Index i, const NetworkState& network,
                                 const netgraph::CommGraph& g, const SyncDesign& design);

// f_i(k) = ||held - eta||^2 - (c0 + c1 rho^k); fires at f >= 0.
[[nodiscard]] bool evaluate_trigger(const AgentState& agent, Index k,
                                    const TriggerParams& params);

// One synchronous round: controls from held states at k, state advance with
// noise z(k), clock tick, then triggering/broadcasts at k+1. force_full
// makes every agent broadcast (full-transmission reference mode).
void network_step(NetworkState& network, const netgraph::CommGraph& g,
                  const SyncDesign& design, const Vec& noises,
                  const std::vector<Vec>& L, const TriggerParams& params,
                  bool force_full = false);

}  // namespace etsync::syncctl
