#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "etsync/runner.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Event-triggered synchronization and event-based distributed Kalman filtering"};

    std::string config_path, preset_name, mode_str, out_dir = "out";
    std::optional<long> trials, horizon;
    std::optional<uint64_t> seed;
    std::optional<int> workers;
    bool allow_complex = false;

    auto* cfg_opt = app.add_option("--config", config_path, "Path to a JSON run config");
    auto* preset_opt = app.add_option("--preset", preset_name, "Bundled preset (paper_sec5, sync_demo)");
    cfg_opt->excludes(preset_opt);
    app.add_option("--trials", trials, "Monte Carlo trial count override");
    app.add_option("--horizon", horizon, "Simulation horizon override");
    app.add_option("--seed", seed, "Master seed override");
    app.add_option("--mode", mode_str, "event|full|both|sync-only")
        ->check(CLI::IsMember({"event", "full", "both", "sync-only"}));
    app.add_option("--workers", workers, "Worker thread count (0 = hardware)");
    app.add_option("--out", out_dir, "Output directory (aggregate.json, traces.csv)");
    app.add_flag("--allow-complex", allow_complex,
                 "Permit complex closed-loop spectra in the decomposition");

    CLI11_PARSE(app, argc, argv);

    try {
        if (config_path.empty() && preset_name.empty()) {
            std::cerr << "error: one of --config or --preset is required\n";
            return 2;
        }
        etsync::runner::RunConfig cfg = !config_path.empty()
                                            ? etsync::runner::load_config(config_path)
                                            : etsync::runner::preset(preset_name);
        if (trials) cfg.trials = *trials;
        if (horizon) cfg.horizon = *horizon;
        if (seed) cfg.seed = *seed;
        if (workers) cfg.workers = *workers;
        if (allow_complex) cfg.allow_complex = true;
        if (!mode_str.empty()) {
            if (mode_str == "event") cfg.mode = etsync::runner::RunMode::event;
            else if (mode_str == "full") cfg.mode = etsync::runner::RunMode::full;
            else if (mode_str == "both") cfg.mode = etsync::runner::RunMode::both;
            else cfg.mode = etsync::runner::RunMode::sync_only;
        }
        return etsync::runner::run(cfg, out_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
