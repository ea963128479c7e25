#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "etsync/runner.hpp"
#include "fixtures.hpp"

using namespace etsync;
using namespace etsync::runner;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string msg_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const std::exception& e) {
        return e.what();
    }
    return "";
}

fs::path temp_dir(const std::string& tag) {
    const fs::path p = fs::temp_directory_path() / ("etsync-test-" + tag);
    fs::remove_all(p);
    return p;
}

}  // namespace

TEST_CASE("preset: paper_sec5 carries the reference scenario") {
    const RunConfig cfg = preset("paper_sec5");
    CHECK(cfg.preset_name == "paper_sec5");
    CHECK(cfg.mode == RunMode::both);
    CHECK(cfg.horizon == 400);
    CHECK(cfg.trials == 1000);
    CHECK(cfg.seed == 12061947ULL);
    REQUIRE(cfg.plant.has_value());
    CHECK(cfg.plant->A(0, 0) == 0.9);
    CHECK(cfg.plant->A(1, 1) == 1.1);
    CHECK(cfg.plant->Q(0, 0) == 0.5L);
    REQUIRE(cfg.sensors.has_value());
    CHECK(cfg.sensors->C.rows() == 4);
    CHECK(cfg.sensors->R(2, 2) == 2.0L);
    CHECK(cfg.graph.kind == "ring");
    CHECK(cfg.graph.nodes == 4);
    REQUIRE(cfg.zeta.has_value());
    CHECK(*cfg.zeta == 0.5L);
    REQUIRE(cfg.target_poles.has_value());
    CHECK((*cfg.target_poles)[0] == 0.63);
    CHECK(cfg.trigger.c0 == 6.0L);
    CHECK(cfg.trigger.c1 == 100.0L);
    CHECK(cfg.trigger.rho == 0.985);
}

TEST_CASE("preset: sync_demo and the preset registry") {
    const RunConfig cfg = preset("sync_demo");
    CHECK(cfg.mode == RunMode::sync_only);
    REQUIRE(cfg.sync.has_value());
    CHECK(cfg.sync->S(0, 0) == 1.05);
    CHECK(cfg.sync->noises.size() == 4);

    const auto names = preset_names();
    REQUIRE(names.size() == 2);
    CHECK(names[0] == "paper_sec5");
    CHECK(names[1] == "sync_demo");
    CHECK_THROWS_AS((void)preset("nope"), ParseError);
}

TEST_CASE("parse_config: unknown keys are rejected at every level") {
    CHECK_THROWS_AS((void)parse_config(R"({"grap": {"kind": "ring", "nodes": 4}})"),
                    ParseError);
    const std::string m = msg_of([] {
        (void)parse_config(R"({"graph": {"kind": "ring", "nodes": 4, "color": "red"}})");
    });
    CHECK(m.find("unknown key 'color'") != std::string::npos);
    CHECK_THROWS_AS((void)parse_config(R"({"trigger": {"c0": 1, "c9": 2},
                                           "graph": {"kind": "ring", "nodes": 4}})"),
                    ParseError);
    CHECK_THROWS_AS((void)parse_config("not json"), ParseError);
}

TEST_CASE("parse_config: missing sections produce a collected ValidationError") {
    const std::string m = msg_of([] { (void)parse_config(R"({"mode": "both"})"); });
    CHECK(m.find("graph: missing") != std::string::npos);
    CHECK(m.find("'plant' section") != std::string::npos);
    CHECK(m.find("'sensors' section") != std::string::npos);
    CHECK_THROWS_AS((void)parse_config(R"({"mode": "both"})"), ValidationError);
}

TEST_CASE("parse_config: infeasible plant is screened with both numbers") {
    const std::string text = R"({
      "mode": "both",
      "plant": {"A": [[5.0, 0.0], [0.0, 1.0]], "Q": [[0.5, 0.0], [0.0, 0.5]]},
      "sensors": {"C": [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, -1.0]],
                  "R": [[2.0, 0, 0, 0], [0, 2.0, 0, 0], [0, 0, 2.0, 0], [0, 0, 0, 2.0]]},
      "graph": {"kind": "ring", "nodes": 4}
    })";
    const std::string m = msg_of([&] { (void)parse_config(text); });
    CHECK(m.find("Mahler(A) = 5") != std::string::npos);
    CHECK(m.find("= 3") != std::string::npos);
    CHECK_THROWS_AS((void)parse_config(text), ValidationError);
}

TEST_CASE("parse_config: unobservable pair and node-count mismatch are collected") {
    const std::string text = R"({
      "mode": "both",
      "plant": {"A": [[0.9, 0.0], [0.0, 1.1]], "Q": [[0.5, 0.0], [0.0, 0.5]]},
      "sensors": {"C": [[1.0, 0.0], [1.0, 0.0], [1.0, 0.0]],
                  "R": [[2.0, 0, 0], [0, 2.0, 0], [0, 0, 2.0]]},
      "graph": {"kind": "ring", "nodes": 4}
    })";
    const std::string m = msg_of([&] { (void)parse_config(text); });
    CHECK(m.find("not jointly observable") != std::string::npos);
    CHECK(m.find("sensor count must equal graph node count") != std::string::npos);
}

TEST_CASE("parse_config: zeta range and trigger validation feed the same report") {
    const std::string text = R"({
      "mode": "both", "zeta": 1.5, "trigger": {"rho": 2.0},
      "plant": {"A": [[0.9, 0.0], [0.0, 1.1]], "Q": [[0.5, 0.0], [0.0, 0.5]]},
      "sensors": {"C": [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, -1.0]],
                  "R": [[2.0, 0, 0, 0], [0, 2.0, 0, 0], [0, 0, 2.0, 0], [0, 0, 0, 2.0]]},
      "graph": {"kind": "ring", "nodes": 4}
    })";
    const std::string m = msg_of([&] { (void)parse_config(text); });
    CHECK(m.find("zeta must lie in (0, 1)") != std::string::npos);
    CHECK(m.find("rho must lie in (0, 1)") != std::string::npos);
}

TEST_CASE("GraphSpec: edges kind builds a weighted graph") {
    GraphSpec gs;
    gs.kind = "edges";
    gs.nodes = 3;
    gs.edges = {{{0.0L, 1.0L, 2.0L}}, {{1.0L, 2.0L, 2.0L}}, {{0.0L, 2.0L, 2.0L}}};
    const auto g = gs.build();
    CHECK(g.weight(0, 1) == 2.0L);
    CHECK(g.weight(1, 0) == 2.0L);

    gs.edges.push_back({{0.0L, 5.0L, 1.0L}});
    CHECK_THROWS_AS((void)gs.build(), InvalidGraph);
    gs.kind = "moebius";
    CHECK_THROWS_AS((void)gs.build(), ParseError);
}

TEST_CASE("config_echo round-trips to an equivalent config") {
    for (const std::string& name : preset_names()) {
        const RunConfig cfg = preset(name);
        const std::string echo1 = config_echo(cfg);
        const RunConfig back = parse_config(echo1);
        const std::string echo2 = config_echo(back);
        CHECK(echo1 == echo2);
    }
}

TEST_CASE("build_pipeline: flagship design values") {
    const Pipeline p = build_pipeline(fixtures::sec5_config());
    CHECK(std::abs(p.sdesign.Gamma(0) - fixtures::kGamma1) < 1e-9L);
    CHECK(std::abs(p.sdesign.Gamma(1) - fixtures::kGamma2) < 1e-9L);
    CHECK(p.sdesign.zeta == 0.5L);
    CHECK(std::abs(p.sdesign.certificate.threshold - 3.0L) < 1e-10L);
    CHECK(std::abs(p.kdesign.P.trace() - fixtures::kTraceP) < 1e-12L);
    CHECK((p.dec.S - fixtures::kSPlaced).cwiseAbs().maxCoeff() < 1e-10L);

    RunConfig no_plant;
    no_plant.graph.kind = "ring";
    no_plant.graph.nodes = 4;
    CHECK_THROWS_AS((void)build_pipeline(no_plant), ValidationError);
}

TEST_CASE("run: estimation outputs, schema, and determinism") {
    RunConfig cfg = fixtures::sec5_config(3, 120);
    cfg.trace_trials = 2;
    cfg.workers = 2;
    const fs::path d1 = temp_dir("run1");
    const fs::path d2 = temp_dir("run2");
    REQUIRE(run(cfg, d1.string(), true) == 0);
    cfg.workers = 1;
    REQUIRE(run(cfg, d2.string(), true) == 0);

    const std::string agg1 = slurp(d1 / "aggregate.json");
    const std::string agg2 = slurp(d2 / "aggregate.json");
    CHECK(agg1 == agg2);  // byte-identical across worker counts

    for (const char* key : {"\"config_echo\"", "\"seed\"", "\"gamma\"", "\"per_sensor\"",
                            "\"comm_rate\"", "\"perf_loss\"", "\"identities\"",
                            "\"feasibility\""}) {
        CHECK(agg1.find(key) != std::string::npos);
    }
    CHECK(agg1.find("\"workers\"") == std::string::npos);  // execution detail

    const std::string traces = slurp(d1 / "traces.csv");
    CHECK(traces.rfind("k,trial,sensor,mse,triggered,avg_identity_residual\n", 0) == 0);
    // 2 trace trials x 120 steps x 4 sensors data rows + header
    long lines = 0;
    for (char c : traces) lines += (c == '\n');
    CHECK(lines == 1 + 2 * 120 * 4);

    fs::remove_all(d1);
    fs::remove_all(d2);
}

TEST_CASE("run: different seeds change the aggregate") {
    RunConfig cfg = fixtures::sec5_config(2, 80);
    const fs::path d1 = temp_dir("seed1");
    const fs::path d2 = temp_dir("seed2");
    REQUIRE(run(cfg, d1.string(), true) == 0);
    cfg.seed += 1;
    REQUIRE(run(cfg, d2.string(), true) == 0);
    CHECK(slurp(d1 / "aggregate.json") != slurp(d2 / "aggregate.json"));
    fs::remove_all(d1);
    fs::remove_all(d2);
}

TEST_CASE("run: sync-only preset writes events and per-noise reports") {
    RunConfig cfg = preset("sync_demo");
    cfg.trials = 3;
    cfg.horizon = 120;
    const fs::path d = temp_dir("sync");
    REQUIRE(run(cfg, d.string(), true) == 0);

    const std::string agg = slurp(d / "aggregate.json");
    for (const char* kind : {"gaussian_iid", "state_dependent", "ar1_correlated",
                             "cross_correlated"}) {
        CHECK(agg.find(kind) != std::string::npos);
    }
    CHECK(agg.find("\"per_noise\"") != std::string::npos);
    const std::string ev = slurp(d / "sync_events.csv");
    CHECK(ev.rfind("kind,trial,k,agent,triggered\n", 0) == 0);
    CHECK(ev.find("gaussian_iid,0,") != std::string::npos);
    fs::remove_all(d);
}

TEST_CASE("run: failures clean up partial outputs") {
    RunConfig cfg = preset("sync_demo");
    cfg.sync->L.assign(2, Vec::Ones(2));  // wrong agent count, trips mid-run
    const fs::path d = temp_dir("fail");
    CHECK(run(cfg, d.string(), true) == 1);
    CHECK_FALSE(fs::exists(d / "aggregate.json"));
    CHECK_FALSE(fs::exists(d / "sync_events.csv"));
    fs::remove_all(d);
}

TEST_CASE("load_config: file round-trip and missing file") {
    const fs::path p = fs::temp_directory_path() / "etsync-test-config.json";
    {
        std::ofstream out(p);
        out << config_echo(preset("paper_sec5"));
    }
    const RunConfig cfg = load_config(p.string());
    CHECK(cfg.horizon == 400);
    CHECK(cfg.seed == 12061947ULL);
    fs::remove(p);
    CHECK_THROWS_AS((void)load_config(p.string()), ParseError);
}
