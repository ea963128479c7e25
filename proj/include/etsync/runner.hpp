#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "etsync/decomp.hpp"
#include "etsync/destimator.hpp"
#include "etsync/kalman.hpp"
#include "etsync/netgraph.hpp"
#include "etsync/plantsim.hpp"
#include "etsync/syncctl.hpp"

namespace etsync::runner {

enum class RunMode { event, full, both, sync_only };

struct GraphSpec {
    std::string kind;  // "ring" | "complete" | "path" | "star" | "edges"
    Index nodes = 0;
    std::vector<std::array<Real, 3>> edges;  // (i, j, w) when kind == "edges"

    [[nodiscard]] netgraph::CommGraph build() const;
};

struct SyncOnlySpec {
    Mat S;
    std::optional<Vec> B;
    std::vector<Vec> L;  // per-agent input columns; default 1_n each
    std::vector<plantsim::NoiseSpec> noises;
    Real eta0_std = 1.0L;
};

struct RunConfig {
    RunMode mode = RunMode::both;
    Index horizon = 400;
    Index trials = 1;
    uint64_t seed = 1;
    int workers = 0;  // 0 = hardware concurrency
    bool allow_complex = false;
    Index trace_trials = 1;

    syncctl::TriggerParams trigger;
    GraphSpec graph;

    // estimation modes
    std::optional<plantsim::PlantModel> plant;
    std::optional<plantsim::SensorSuite> sensors;
    std::optional<Real> zeta;
    std::optional<Vec> B;
    std::optional<std::vector<Real>> target_poles;

    // sync-only mode
    std::optional<SyncOnlySpec> sync;

    std::string preset_name;  // set when loaded from a preset
};

[[nodiscard]] RunConfig load_config(const std::string& path);
[[nodiscard]] RunConfig parse_config(const std::string& json_text);
[[nodiscard]] RunConfig preset(const std::string& name);  // paper_sec5 | sync_demo
[[nodiscard]] std::vector<std::string> preset_names();

// JSON echo that parse_config round-trips to an equivalent config.
[[nodiscard]] std::string config_echo(const RunConfig& cfg);

// Fully built estimation pipeline (design layer), shared by the CLI, the
// acceptance suite and the bindings.
struct Pipeline {
    plantsim::PlantModel model;
    plantsim::SensorSuite sensors;
    std::shared_ptr<netgraph::CommGraph> graph;
    netgraph::LaplacianSpectrum spectrum;
    kalman::KalmanDesign kdesign;
    decomp::Decomposition dec;
    syncctl::SyncDesign sdesign;
    syncctl::TriggerParams trigger;

    [[nodiscard]] destimator::Setup setup() const;
};

[[nodiscard]] Pipeline build_pipeline(const RunConfig& cfg);

// Execute per config; writes <out>/aggregate.json and <out>/traces.csv (or
// <out>/sync_events.csv for sync-only), prints a one-screen summary.
// Returns the process exit code; partial outputs are removed on failure.
int run(const RunConfig& cfg, const std::string& out_dir, bool quiet = false);

}  // namespace etsync::runner
