#pragma once

#include <cstdint>
#include <vector>

#include "etsync/decomp.hpp"
#include "etsync/kalman.hpp"
#include "etsync/netgraph.hpp"
#include "etsync/plantsim.hpp"
#include "etsync/syncctl.hpp"
#include "etsync/types.hpp"

namespace etsync::destimator {

enum class Mode { event, full };
enum class McMode { event, full, both };

struct SensorNode {
    Index index = 0;
    Vec xi_hat;               // local filter state, dim n
    Vec eta;                  // lifted sync state, dim m*n
    Vec held;                 // S~^(k-k_s) eta(k_s), advanced incrementally
    Vec last_broadcast_value;
    Index last_broadcast_time = 0;
    long trigger_count = 0;
    Vec x_breve;              // local estimate, dim n
};

struct TrialResult {
    std::vector<Real> mse_steady;  // per sensor, mean over last half of horizon
    std::vector<Real> mse_whole;   // per sensor, mean over k >= 1
    Real central_mse_steady = 0.0L;
    Real comm_rate = 0.0L;         // k >= 1 broadcasts / (m * T)
    Real max_avg_identity_residual = 0.0L;  // ||mean_i x_breve_i - x_hat||
    Real max_avg_identity_rel = 0.0L;       // same, / (1 + ||x_hat(k)||) per step
    Real max_fusion_residual = 0.0L;        // ||sum_i F_i xi_i - x_hat||
    Real max_fusion_rel = 0.0L;
    Real max_decomp_identity_residual = 0.0L;  // ||sum_i eta_{i,j} - xi_j||
    Real max_consistency_residual = 0.0L;   // eta-average recursion, relative
    Real max_xhat_norm = 0.0L;
    long trigger_violations = 0;   // ||eps||^2 >= threshold at non-fired steps

    // per-step detail for trace emission
    std::vector<std::vector<Real>> sqerr;   // [k-1][sensor], k = 1..T
    std::vector<std::vector<char>> fired;   // [k-1][sensor]
    std::vector<Real> avg_identity_trace;   // [k-1]
};

struct PairedTrial {
    TrialResult event;
    TrialResult full;
    Real loss_steady = 0.0L;  // network-average steady MSE, (event-full)/full
    Real loss_whole = 0.0L;
};

struct Aggregate {
    Index trials = 0;
    Index sensors = 0;
    std::vector<Real> mse_event_mean, mse_event_hw;  // per sensor +- CI half-width
    std::vector<Real> mse_full_mean, mse_full_hw;
    Real comm_rate_mean = 0.0L, comm_rate_hw = 0.0L;
    Real loss_steady = 0.0L, loss_whole = 0.0L;      // from trial-averaged MSE
    Real loss_steady_hw = 0.0L;                      // CI of per-trial paired loss
    Real central_mse_mean = 0.0L;
    Real max_avg_identity_residual = 0.0L;
    Real max_avg_identity_rel = 0.0L;  // residual / (1 + max ||x_hat||), per trial
    Real max_consistency_residual = 0.0L;
    long trigger_violations = 0;
    // per-sensor steady-window MSE linear fit over trial-mean traces
    std::vector<Real> mse_slope, mse_slope_hw;
    std::vector<std::vector<Real>> mse_trace_mean;   // [k-1][sensor]
};

struct Setup {
    const plantsim::PlantModel* model = nullptr;
    const plantsim::SensorSuite* sensors = nullptr;
    const netgraph::CommGraph* graph = nullptr;
    const decomp::Decomposition* dec = nullptr;
    const syncctl::SyncDesign* design = nullptr;  // on (S, B); lifted internally
    syncctl::TriggerParams trigger;
};

[[nodiscard]] std::vector<SensorNode> init_nodes(const decomp::Decomposition& dec);

// One estimator round: local filters with own measurements, lifted sync
// update of eta from held states, estimate extraction, trigger/broadcast.
void step(std::vector<SensorNode>& nodes, const Setup& setup, const Vec& y_next,
          Index k, Mode mode, Vec* z_out = nullptr,
          std::vector<char>* fired_out = nullptr, long* violations_out = nullptr);

[[nodiscard]] TrialResult run_trial(const Setup& setup, Index horizon,
                                    uint64_t seed, Mode mode,
                                    bool keep_traces = false);

[[nodiscard]] PairedTrial run_paired_trial(const Setup& setup, Index horizon,
                                           uint64_t seed, bool keep_traces = false);

// Deterministic given master_seed: per-trial seeds are substreams, results
// accumulated in trial order regardless of worker count. Loss fields are
// only populated for McMode::both (paired realizations).
[[nodiscard]] Aggregate monte_carlo(const Setup& setup, Index trials, Index horizon,
                                    uint64_t master_seed, int workers,
                                    McMode mode = McMode::both,
                                    bool keep_trace_mean = true);

// Per-trial results (traces kept on the primary mode) and the deterministic
// reduction monte_carlo is built from.
[[nodiscard]] std::vector<PairedTrial> run_trials(const Setup& setup, Index trials,
                                                  Index horizon, uint64_t master_seed,
                                                  int workers, McMode mode);
[[nodiscard]] Aggregate aggregate(const std::vector<PairedTrial>& results,
                                  const Setup& setup, Index horizon, McMode mode,
                                  bool keep_trace_mean);

}  // namespace etsync::destimator
