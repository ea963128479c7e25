#include "etsync/runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "etsync/matops.hpp"
#include "etsync/rng.hpp"

namespace etsync::runner {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------- JSON <-> matrix helpers ----------

Mat parse_matrix(const json& j, const std::string& where) {
    if (!j.is_array() || j.empty() || !j[0].is_array()) {
        throw ParseError(where + ": expected a nested array (matrix)");
    }
    const Index rows = static_cast<Index>(j.size());
    const Index cols = static_cast<Index>(j[0].size());
    Mat M(rows, cols);
    for (Index r = 0; r < rows; ++r) {
        if (static_cast<Index>(j[r].size()) != cols) {
            throw ParseError(where + ": ragged matrix rows");
        }
        for (Index c = 0; c < cols; ++c) {
            if (!j[r][c].is_number()) throw ParseError(where + ": non-numeric entry");
            M(r, c) = static_cast<Real>(j[r][c].get<double>());
        }
    }
    return M;
}

Vec parse_vector(const json& j, const std::string& where) {
    if (!j.is_array() || (j.size() > 0 && j[0].is_array())) {
        throw ParseError(where + ": expected a flat array (vector)");
    }
    Vec v(static_cast<Index>(j.size()));
    for (Index i = 0; i < v.size(); ++i) {
        if (!j[i].is_number()) throw ParseError(where + ": non-numeric entry");
        v(i) = static_cast<Real>(j[i].get<double>());
    }
    return v;
}

json dump_matrix(const Mat& M) {
    json rows = json::array();
    for (Index r = 0; r < M.rows(); ++r) {
        json row = json::array();
        for (Index c = 0; c < M.cols(); ++c) row.push_back(static_cast<double>(M(r, c)));
        rows.push_back(std::move(row));
    }
    return rows;
}

json dump_vector(const Vec& v) {
    json out = json::array();
    for (Index i = 0; i < v.size(); ++i) out.push_back(static_cast<double>(v(i)));
    return out;
}

void reject_unknown(const json& obj, std::initializer_list<const char*> allowed,
                    const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (std::find_if(allowed.begin(), allowed.end(), [&](const char* k) {
                return it.key() == k;
            }) == allowed.end()) {
            throw ParseError(where + ": unknown key '" + it.key() + "'");
        }
    }
}

plantsim::NoiseKind noise_kind_from(const std::string& s) {
    if (s == "gaussian_iid") return plantsim::NoiseKind::gaussian_iid;
    if (s == "state_dependent") return plantsim::NoiseKind::state_dependent;
    if (s == "ar1_correlated") return plantsim::NoiseKind::ar1_correlated;
    if (s == "cross_correlated") return plantsim::NoiseKind::cross_correlated;
    throw ParseError("noise: unknown kind '" + s + "'");
}

std::string noise_kind_name(plantsim::NoiseKind k) {
    switch (k) {
        case plantsim::NoiseKind::gaussian_iid: return "gaussian_iid";
        case plantsim::NoiseKind::state_dependent: return "state_dependent";
        case plantsim::NoiseKind::ar1_correlated: return "ar1_correlated";
        case plantsim::NoiseKind::cross_correlated: return "cross_correlated";
    }
    return "?";
}

plantsim::NoiseSpec parse_noise(const json& j, const std::string& where) {
    reject_unknown(j, {"kind", "variance", "ar_coeff", "coupling_gain", "cap_factor",
                       "cross_cov"},
                   where);
    plantsim::NoiseSpec spec;
    spec.kind = noise_kind_from(j.at("kind").get<std::string>());
    if (j.contains("variance")) spec.variance = static_cast<Real>(j["variance"].get<double>());
    if (j.contains("ar_coeff")) spec.ar_coeff = static_cast<Real>(j["ar_coeff"].get<double>());
    if (j.contains("coupling_gain"))
        spec.coupling_gain = static_cast<Real>(j["coupling_gain"].get<double>());
    if (j.contains("cap_factor"))
        spec.cap_factor = static_cast<Real>(j["cap_factor"].get<double>());
    if (j.contains("cross_cov")) spec.cross_cov = parse_matrix(j["cross_cov"], where + ".cross_cov");
    return spec;
}

json dump_noise(const plantsim::NoiseSpec& spec) {
    json j;
    j["kind"] = noise_kind_name(spec.kind);
    j["variance"] = static_cast<double>(spec.variance);
    switch (spec.kind) {
        case plantsim::NoiseKind::ar1_correlated:
            j["ar_coeff"] = static_cast<double>(spec.ar_coeff);
            break;
        case plantsim::NoiseKind::state_dependent:
            j["coupling_gain"] = static_cast<double>(spec.coupling_gain);
            j["cap_factor"] = static_cast<double>(spec.cap_factor);
            break;
        case plantsim::NoiseKind::cross_correlated:
            j["cross_cov"] = dump_matrix(spec.cross_cov);
            break;
        case plantsim::NoiseKind::gaussian_iid:
            break;
    }
    return j;
}

RunMode mode_from(const std::string& s) {
    if (s == "event") return RunMode::event;
    if (s == "full") return RunMode::full;
    if (s == "both") return RunMode::both;
    if (s == "sync-only") return RunMode::sync_only;
    throw ParseError("mode: expected event|full|both|sync-only, got '" + s + "'");
}

std::string mode_name(RunMode m) {
    switch (m) {
        case RunMode::event: return "event";
        case RunMode::full: return "full";
        case RunMode::both: return "both";
        case RunMode::sync_only: return "sync-only";
    }
    return "?";
}

}  // namespace

netgraph::CommGraph GraphSpec::build() const {
    if (kind == "ring") return netgraph::ring(nodes);
    if (kind == "complete") return netgraph::complete(nodes);
    if (kind == "path") return netgraph::path(nodes);
    if (kind == "star") return netgraph::star(nodes);
    if (kind == "edges") {
        Mat a = Mat::Zero(nodes, nodes);
        for (const auto& e : edges) {
            const Index i = static_cast<Index>(e[0]);
            const Index j = static_cast<Index>(e[1]);
            if (i < 0 || j < 0 || i >= nodes || j >= nodes || i == j) {
                throw InvalidGraph("graph.edges: endpoint out of range");
            }
            a(i, j) = a(j, i) = e[2];
        }
        return netgraph::CommGraph(std::move(a));
    }
    throw ParseError("graph.kind: expected ring|complete|path|star|edges");
}

RunConfig parse_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("config: ") + e.what());
    }
    reject_unknown(j,
                   {"mode", "horizon", "trials", "seed", "workers", "allow_complex",
                    "trace_trials", "trigger", "graph", "plant", "sensors", "zeta", "B",
                    "target_poles", "sync", "preset_name"},
                   "config");

    RunConfig cfg;
    std::vector<std::string> errors;

    if (j.contains("mode")) cfg.mode = mode_from(j["mode"].get<std::string>());
    if (j.contains("horizon")) cfg.horizon = j["horizon"].get<Index>();
    if (j.contains("trials")) cfg.trials = j["trials"].get<Index>();
    if (j.contains("seed")) cfg.seed = j["seed"].get<uint64_t>();
    if (j.contains("workers")) cfg.workers = j["workers"].get<int>();
    if (j.contains("allow_complex")) cfg.allow_complex = j["allow_complex"].get<bool>();
    if (j.contains("trace_trials")) cfg.trace_trials = j["trace_trials"].get<Index>();
    if (j.contains("preset_name")) cfg.preset_name = j["preset_name"].get<std::string>();

    if (cfg.horizon < 1) errors.push_back("horizon must be >= 1");
    if (cfg.trials < 1) errors.push_back("trials must be >= 1");
    if (cfg.trace_trials < 0) errors.push_back("trace_trials must be >= 0");

    if (j.contains("trigger")) {
        reject_unknown(j["trigger"], {"c0", "c1", "rho"}, "trigger");
        if (j["trigger"].contains("c0"))
            cfg.trigger.c0 = static_cast<Real>(j["trigger"]["c0"].get<double>());
        if (j["trigger"].contains("c1"))
            cfg.trigger.c1 = static_cast<Real>(j["trigger"]["c1"].get<double>());
        if (j["trigger"].contains("rho"))
            cfg.trigger.rho = static_cast<Real>(j["trigger"]["rho"].get<double>());
    }
    try {
        cfg.trigger.validate();
    } catch (const Error& e) {
        errors.push_back(e.what());
    }

    if (!j.contains("graph")) {
        errors.push_back("graph: missing (a connected undirected topology is required)");
    } else {
        const json& g = j["graph"];
        reject_unknown(g, {"kind", "nodes", "edges"}, "graph");
        cfg.graph.kind = g.value("kind", std::string("edges"));
        cfg.graph.nodes = g.value("nodes", Index{0});
        if (g.contains("edges")) {
            for (const auto& e : g["edges"]) {
                if (!e.is_array() || e.size() != 3) {
                    errors.push_back("graph.edges: each edge must be [i, j, weight]");
                    break;
                }
                cfg.graph.edges.push_back({static_cast<Real>(e[0].get<double>()),
                                           static_cast<Real>(e[1].get<double>()),
                                           static_cast<Real>(e[2].get<double>())});
            }
        }
    }

    if (j.contains("zeta")) cfg.zeta = static_cast<Real>(j["zeta"].get<double>());
    if (j.contains("B")) cfg.B = parse_vector(j["B"], "B");
    if (j.contains("target_poles")) {
        std::vector<Real> poles;
        for (const auto& p : j["target_poles"]) poles.push_back(static_cast<Real>(p.get<double>()));
        cfg.target_poles = std::move(poles);
    }

    if (j.contains("plant")) {
        reject_unknown(j["plant"], {"A", "Q", "x0_cov"}, "plant");
        plantsim::PlantModel pm;
        pm.A = parse_matrix(j["plant"].at("A"), "plant.A");
        pm.Q = parse_matrix(j["plant"].at("Q"), "plant.Q");
        pm.x0_cov = j["plant"].contains("x0_cov")
                        ? parse_matrix(j["plant"]["x0_cov"], "plant.x0_cov")
                        : Mat(Mat::Identity(pm.A.rows(), pm.A.rows()));
        cfg.plant = std::move(pm);
    }
    if (j.contains("sensors")) {
        reject_unknown(j["sensors"], {"C", "R"}, "sensors");
        plantsim::SensorSuite ss;
        ss.C = parse_matrix(j["sensors"].at("C"), "sensors.C");
        ss.R = parse_matrix(j["sensors"].at("R"), "sensors.R");
        cfg.sensors = std::move(ss);
    }
    if (j.contains("sync")) {
        reject_unknown(j["sync"], {"S", "B", "L", "noises", "eta0_std"}, "sync");
        SyncOnlySpec sp;
        sp.S = parse_matrix(j["sync"].at("S"), "sync.S");
        if (j["sync"].contains("B")) sp.B = parse_vector(j["sync"]["B"], "sync.B");
        if (j["sync"].contains("L")) {
            for (const auto& l : j["sync"]["L"]) sp.L.push_back(parse_vector(l, "sync.L"));
        }
        if (j["sync"].contains("eta0_std"))
            sp.eta0_std = static_cast<Real>(j["sync"]["eta0_std"].get<double>());
        if (j["sync"].contains("noises")) {
            for (const auto& nj : j["sync"]["noises"]) sp.noises.push_back(parse_noise(nj, "sync.noises"));
        }
        if (sp.noises.empty()) sp.noises.push_back(plantsim::NoiseSpec{});
        cfg.sync = std::move(sp);
    }

    // ---- cross-field validation; collect every violation ----
    std::optional<netgraph::LaplacianSpectrum> gspec;
    if (cfg.graph.nodes >= 2) {
        try {
            gspec = netgraph::spectrum(cfg.graph.build());
        } catch (const Error& e) {
            errors.push_back(std::string("graph: ") + e.what() +
                             " (synchronization needs a connected undirected graph)");
        }
    }

    if (cfg.mode == RunMode::sync_only) {
        if (!cfg.sync) {
            errors.push_back("sync-only mode requires a 'sync' section (S, noises)");
        } else if (gspec) {
            if (cfg.sync->S.rows() != cfg.sync->S.cols()) {
                errors.push_back("sync.S must be square");
            } else {
                const Real mahler = matops::mahler_measure(cfg.sync->S);
                const Real thr = netgraph::feasibility_threshold(*gspec);
                if (mahler >= thr) {
                    std::ostringstream os;
                    os << "sync.S infeasible: Mahler(S) = " << static_cast<double>(mahler)
                       << " >= (1 + mu2/mum)/(1 - mu2/mum) = " << static_cast<double>(thr);
                    errors.push_back(os.str());
                }
                for (const auto& sp : cfg.sync->noises) {
                    try {
                        sp.validate(cfg.graph.nodes);
                    } catch (const Error& e) {
                        errors.push_back(e.what());
                    }
                }
            }
        }
    } else {
        if (!cfg.plant) errors.push_back("estimation modes require a 'plant' section");
        if (!cfg.sensors) errors.push_back("estimation modes require a 'sensors' section");
        if (cfg.plant && cfg.sensors) {
            try {
                cfg.plant->validate();
                cfg.sensors->validate(cfg.plant->dim());
                if (!matops::is_observable(cfg.plant->A, cfg.sensors->C)) {
                    errors.push_back("(A, C) is not jointly observable");
                }
                if (cfg.sensors->count() != cfg.graph.nodes) {
                    errors.push_back("sensor count must equal graph node count");
                }
                if (gspec) {
                    // spec(S) reproduces spec(A), so the synchronizability
                    // condition can be screened before any design work
                    const Real mahler = matops::mahler_measure(cfg.plant->A);
                    const Real thr = netgraph::feasibility_threshold(*gspec);
                    if (mahler >= thr) {
                        std::ostringstream os;
                        os << "infeasible: Mahler(A) = " << static_cast<double>(mahler)
                           << " >= (1 + mu2/mum)/(1 - mu2/mum) = " << static_cast<double>(thr)
                           << " (the synchronizability condition cannot hold)";
                        errors.push_back(os.str());
                    }
                    if (cfg.zeta) {
                        if (!(*cfg.zeta > 0.0L && *cfg.zeta < 1.0L)) {
                            errors.push_back("zeta must lie in (0, 1)");
                        }
                    }
                }
            } catch (const Error& e) {
                errors.push_back(e.what());
            }
        }
    }
    if (cfg.zeta && !(*cfg.zeta > 0.0L && *cfg.zeta < 1.0L)) {
        errors.push_back("zeta must lie in (0, 1)");
    }

    if (!errors.empty()) {
        std::ostringstream os;
        os << "config validation failed (" << errors.size() << " problem"
           << (errors.size() > 1 ? "s" : "") << "):";
        // dedupe while keeping order
        std::vector<std::string> seen;
        for (const auto& e : errors) {
            if (std::find(seen.begin(), seen.end(), e) == seen.end()) {
                seen.push_back(e);
                os << "\n  - " << e;
            }
        }
        throw ValidationError(os.str());
    }
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("load_config: cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

namespace {

const char* kPaperSec5 = R"JSON({
  "preset_name": "paper_sec5",
  "mode": "both",
  "horizon": 400,
  "trials": 1000,
  "seed": 12061947,
  "plant": {
    "A": [[0.9, 0.0], [0.0, 1.1]],
    "Q": [[0.5, 0.0], [0.0, 0.5]],
    "x0_cov": [[1.0, 0.0], [0.0, 1.0]]
  },
  "sensors": {
    "C": [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, -1.0]],
    "R": [[2.0, 0.0, 0.0, 0.0], [0.0, 2.0, 0.0, 0.0], [0.0, 0.0, 2.0, 0.0], [0.0, 0.0, 0.0, 2.0]]
  },
  "graph": {"kind": "ring", "nodes": 4},
  "zeta": 0.5,
  "target_poles": [0.63, 0.7],
  "trigger": {"c0": 6.0, "c1": 100.0, "rho": 0.985}
})JSON";

const char* kSyncDemo = R"JSON({
  "preset_name": "sync_demo",
  "mode": "sync-only",
  "horizon": 300,
  "trials": 50,
  "seed": 90210,
  "graph": {"kind": "ring", "nodes": 4},
  "trigger": {"c0": 0.1, "c1": 1.0, "rho": 0.95},
  "sync": {
    "S": [[1.05, 1.0], [0.0, 0.8]],
    "eta0_std": 1.0,
    "noises": [
      {"kind": "gaussian_iid", "variance": 0.1},
      {"kind": "state_dependent", "variance": 0.1, "coupling_gain": 0.05, "cap_factor": 10.0},
      {"kind": "ar1_correlated", "variance": 0.1, "ar_coeff": 0.6},
      {"kind": "cross_correlated", "variance": 0.1,
       "cross_cov": [[0.10, 0.05, 0.05, 0.05], [0.05, 0.10, 0.05, 0.05],
                      [0.05, 0.05, 0.10, 0.05], [0.05, 0.05, 0.05, 0.10]]}
    ]
  }
})JSON";

}  // namespace

std::vector<std::string> preset_names() { return {"paper_sec5", "sync_demo"}; }

RunConfig preset(const std::string& name) {
    if (name == "paper_sec5") return parse_config(kPaperSec5);
    if (name == "sync_demo") return parse_config(kSyncDemo);
    throw ParseError("preset: unknown preset '" + name + "' (have: paper_sec5, sync_demo)");
}

std::string config_echo(const RunConfig& cfg) {
    json j;
    j["mode"] = mode_name(cfg.mode);
    j["horizon"] = cfg.horizon;
    j["trials"] = cfg.trials;
    j["seed"] = cfg.seed;
    // workers is an execution detail: results are worker-count independent
    // and the aggregate must stay byte-identical across worker counts
    j["allow_complex"] = cfg.allow_complex;
    j["trace_trials"] = cfg.trace_trials;
    if (!cfg.preset_name.empty()) j["preset_name"] = cfg.preset_name;
    j["trigger"] = {{"c0", static_cast<double>(cfg.trigger.c0)},
                    {"c1", static_cast<double>(cfg.trigger.c1)},
                    {"rho", static_cast<double>(cfg.trigger.rho)}};
    j["graph"]["kind"] = cfg.graph.kind;
    j["graph"]["nodes"] = cfg.graph.nodes;
    if (!cfg.graph.edges.empty()) {
        json edges = json::array();
        for (const auto& e : cfg.graph.edges) {
            edges.push_back({static_cast<double>(e[0]), static_cast<double>(e[1]),
                             static_cast<double>(e[2])});
        }
        j["graph"]["edges"] = std::move(edges);
    }
    if (cfg.plant) {
        j["plant"]["A"] = dump_matrix(cfg.plant->A);
        j["plant"]["Q"] = dump_matrix(cfg.plant->Q);
        j["plant"]["x0_cov"] = dump_matrix(cfg.plant->x0_cov);
    }
    if (cfg.sensors) {
        j["sensors"]["C"] = dump_matrix(cfg.sensors->C);
        j["sensors"]["R"] = dump_matrix(cfg.sensors->R);
    }
    if (cfg.zeta) j["zeta"] = static_cast<double>(*cfg.zeta);
    if (cfg.B) j["B"] = dump_vector(*cfg.B);
    if (cfg.target_poles) {
        json poles = json::array();
        for (Real p : *cfg.target_poles) poles.push_back(static_cast<double>(p));
        j["target_poles"] = std::move(poles);
    }
    if (cfg.sync) {
        j["sync"]["S"] = dump_matrix(cfg.sync->S);
        if (cfg.sync->B) j["sync"]["B"] = dump_vector(*cfg.sync->B);
        if (!cfg.sync->L.empty()) {
            json ls = json::array();
            for (const Vec& l : cfg.sync->L) ls.push_back(dump_vector(l));
            j["sync"]["L"] = std::move(ls);
        }
        j["sync"]["eta0_std"] = static_cast<double>(cfg.sync->eta0_std);
        json ns = json::array();
        for (const auto& sp : cfg.sync->noises) ns.push_back(dump_noise(sp));
        j["sync"]["noises"] = std::move(ns);
    }
    return j.dump(2);
}

destimator::Setup Pipeline::setup() const {
    destimator::Setup s;
    s.model = &model;
    s.sensors = &sensors;
    s.graph = graph.get();
    s.dec = &dec;
    s.design = &sdesign;
    s.trigger = trigger;
    return s;
}

Pipeline build_pipeline(const RunConfig& cfg) {
    if (!cfg.plant || !cfg.sensors) {
        throw ValidationError("build_pipeline: estimation config needs plant and sensors");
    }
    Pipeline p;
    p.model = *cfg.plant;
    p.sensors = *cfg.sensors;
    p.graph = std::make_shared<netgraph::CommGraph>(cfg.graph.build());
    p.spectrum = netgraph::spectrum(*p.graph);
    p.kdesign = kalman::design(p.model, p.sensors);

    decomp::BuildOptions opts;
    opts.allow_complex = cfg.allow_complex;
    opts.target_poles = cfg.target_poles;
    p.dec = decomp::build(p.kdesign, p.sensors, opts);
    if (!p.dec.is_real) {
        throw ComplexSpectrumDisallowed(
            "build_pipeline: estimator requires a real decomposition spectrum");
    }

    const Vec B = cfg.B ? *cfg.B : syncctl::default_input_direction(p.dec.S);
    const Real zeta = syncctl::choose_zeta(p.dec.S, p.spectrum, cfg.zeta);
    p.sdesign = syncctl::design_gamma(p.dec.S, B, p.spectrum, zeta);
    p.trigger = cfg.trigger;
    return p;
}

namespace {

int resolve_workers(int requested) {
    if (requested > 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

struct SyncKindReport {
    std::string kind;
    Real consistency_max = 0.0L;
    Real comm_rate = 0.0L;
    Real dispersion_median = 0.0L;
    Real dispersion_max = 0.0L;
    std::vector<std::array<long, 3>> events;  // (trial, k, agent) of first trial
};

SyncKindReport run_sync_kind(const RunConfig& cfg, const netgraph::CommGraph& g,
                             const syncctl::SyncDesign& design,
                             const plantsim::NoiseSpec& noise) {
    const Index m = g.node_count();
    const Index n = design.S.rows();
    const Index T = cfg.horizon;
    std::vector<Vec> L = cfg.sync->L;
    if (L.empty()) L.assign(static_cast<size_t>(m), Vec::Ones(n));
    if (static_cast<Index>(L.size()) != m) {
        throw DimensionMismatch("sync.L: need one input column per agent");
    }

    SyncKindReport rep;
    rep.kind = noise_kind_name(noise.kind);
    std::vector<Real> disp_mean(static_cast<size_t>(T), 0.0L);

    for (Index trial = 0; trial < cfg.trials; ++trial) {
        const uint64_t tseed = rng::substream_seed(cfg.seed, 0x9100 + static_cast<uint64_t>(trial));
        rng::Stream init(rng::substream_seed(tseed, 0x11));
        std::vector<Vec> eta0(static_cast<size_t>(m));
        for (Index i = 0; i < m; ++i) {
            Vec e(n);
            for (Index r = 0; r < n; ++r) e(r) = cfg.sync->eta0_std * init.gaussian();
            eta0[static_cast<size_t>(i)] = std::move(e);
        }
        syncctl::NetworkState net = syncctl::init_network(eta0);
        plantsim::AgentNoiseSampler sampler(noise, m, rng::substream_seed(tseed, 0x22));

        long broadcasts = 0;
        for (Index k = 0; k < T; ++k) {
            Vec eta_bar_prev = Vec::Zero(n);
            for (const auto& a : net.agents) eta_bar_prev += a.eta;
            eta_bar_prev /= static_cast<Real>(m);

            std::vector<Real> norms;
            norms.reserve(static_cast<size_t>(m));
            for (const auto& a : net.agents) norms.push_back(a.eta.norm());
            const Vec z = sampler.step(norms);

            syncctl::network_step(net, g, design, z, L, cfg.trigger);

            Vec eta_bar = Vec::Zero(n);
            for (const auto& a : net.agents) eta_bar += a.eta;
            eta_bar /= static_cast<Real>(m);
            Vec lz = Vec::Zero(n);
            for (Index i = 0; i < m; ++i) lz += L[static_cast<size_t>(i)] * z(i);
            const Vec expect = design.S * eta_bar_prev + lz / static_cast<Real>(m);
            rep.consistency_max =
                std::max(rep.consistency_max,
                         (eta_bar - expect).norm() / (1.0L + eta_bar.norm()));

            Real disp = 0.0L;
            for (const auto& a : net.agents) disp += (a.eta - eta_bar).squaredNorm();
            disp_mean[static_cast<size_t>(k)] += disp / static_cast<Real>(cfg.trials);

            broadcasts += static_cast<long>(net.event_log.back().size());
            if (trial == 0) {
                for (Index who : net.event_log.back()) {
                    rep.events.push_back({static_cast<long>(trial), static_cast<long>(k + 1),
                                          static_cast<long>(who)});
                }
            }
        }
        rep.comm_rate += static_cast<Real>(broadcasts) /
                         (static_cast<Real>(m) * static_cast<Real>(T) * static_cast<Real>(cfg.trials));
    }

    std::vector<Real> tail(disp_mean.begin() + T / 2, disp_mean.end());
    std::sort(tail.begin(), tail.end());
    rep.dispersion_median = tail[tail.size() / 2];
    rep.dispersion_max = tail.back();
    return rep;
}

void print_summary_line(std::ostream& os, const std::string& label, const std::string& val) {
    os << "  " << label;
    for (size_t i = label.size(); i < 28; ++i) os << ' ';
    os << val << "\n";
}

std::string fmt(Real v, int prec = 6) {
    std::ostringstream os;
    os.precision(prec);
    os << static_cast<double>(v);
    return os.str();
}

}  // namespace

int run(const RunConfig& cfg, const std::string& out_dir, bool quiet) {
    std::vector<fs::path> written;
    try {
        fs::create_directories(out_dir);
        const fs::path agg_path = fs::path(out_dir) / "aggregate.json";
        json out;
        out["config_echo"] = json::parse(config_echo(cfg));
        out["seed"] = cfg.seed;
        out["mode"] = mode_name(cfg.mode);
        if (!cfg.preset_name.empty()) out["preset"] = cfg.preset_name;

        std::ostringstream summary;

        if (cfg.mode == RunMode::sync_only) {
            const netgraph::CommGraph g = cfg.graph.build();
            const auto gspec = netgraph::spectrum(g);
            const Vec B = cfg.sync->B ? *cfg.sync->B
                                      : syncctl::default_input_direction(cfg.sync->S);
            const Real zeta = syncctl::choose_zeta(cfg.sync->S, gspec, cfg.zeta);
            const syncctl::SyncDesign design = syncctl::design_gamma(cfg.sync->S, B, gspec, zeta);

            out["feasibility"] = {
                {"mahler", static_cast<double>(design.certificate.mahler)},
                {"threshold", static_cast<double>(design.certificate.threshold)},
                {"zeta", static_cast<double>(design.zeta)},
                {"mu", json::array()}};
            for (Real mu : gspec.mu) out["feasibility"]["mu"].push_back(static_cast<double>(mu));
            out["gamma"] = dump_vector(design.Gamma.transpose());

            const fs::path ev_path = fs::path(out_dir) / "sync_events.csv";
            std::ofstream ev(ev_path);
            written.push_back(ev_path);
            ev << "kind,trial,k,agent,triggered\n";

            json kinds = json::array();
            summary << "sync-only: Mahler(S)=" << fmt(design.certificate.mahler)
                    << " threshold=" << fmt(design.certificate.threshold)
                    << " zeta=" << fmt(design.zeta) << "\n";
            for (const auto& noise : cfg.sync->noises) {
                const SyncKindReport rep = run_sync_kind(cfg, g, design, noise);
                json jk;
                jk["kind"] = rep.kind;
                jk["consistency_residual_max"] = static_cast<double>(rep.consistency_max);
                jk["comm_rate"] = static_cast<double>(rep.comm_rate);
                jk["dispersion_median_tail"] = static_cast<double>(rep.dispersion_median);
                jk["dispersion_max_tail"] = static_cast<double>(rep.dispersion_max);
                kinds.push_back(std::move(jk));
                for (const auto& e : rep.events) {
                    ev << rep.kind << ',' << e[0] << ',' << e[1] << ',' << e[2] << ",1\n";
                }
                summary << "  noise=" << rep.kind
                        << " consistency<=" << fmt(rep.consistency_max, 3)
                        << " comm_rate=" << fmt(rep.comm_rate, 4)
                        << " tail dispersion med/max=" << fmt(rep.dispersion_median, 4) << "/"
                        << fmt(rep.dispersion_max, 4) << "\n";
            }
            out["per_noise"] = std::move(kinds);
        } else {
            const Pipeline p = build_pipeline(cfg);
            const destimator::Setup setup = p.setup();
            const destimator::McMode mc =
                cfg.mode == RunMode::event ? destimator::McMode::event
                : cfg.mode == RunMode::full ? destimator::McMode::full
                                            : destimator::McMode::both;
            const int workers = resolve_workers(cfg.workers);
            const auto results = destimator::run_trials(setup, cfg.trials, cfg.horizon,
                                                        cfg.seed, workers, mc);
            const destimator::Aggregate agg =
                destimator::aggregate(results, setup, cfg.horizon, mc, true);

            out["feasibility"] = {
                {"mahler", static_cast<double>(p.sdesign.certificate.mahler)},
                {"threshold", static_cast<double>(p.sdesign.certificate.threshold)},
                {"zeta", static_cast<double>(p.sdesign.zeta)},
                {"mu", json::array()}};
            for (Real mu : p.spectrum.mu) out["feasibility"]["mu"].push_back(static_cast<double>(mu));
            out["gamma"] = dump_vector(p.sdesign.Gamma.transpose());
            out["trace_P"] = static_cast<double>(p.kdesign.P.trace());
            out["trace_P_filtered"] = static_cast<double>(kalman::filtered_covariance(p.kdesign).trace());
            out["central_mse_mean"] = static_cast<double>(agg.central_mse_mean);

            json per_sensor;
            per_sensor["mse_event_mean"] = json::array();
            per_sensor["mse_event_hw"] = json::array();
            per_sensor["mse_full_mean"] = json::array();
            per_sensor["mse_full_hw"] = json::array();
            per_sensor["mse_slope"] = json::array();
            per_sensor["mse_slope_hw"] = json::array();
            for (Index i = 0; i < agg.sensors; ++i) {
                per_sensor["mse_event_mean"].push_back(static_cast<double>(agg.mse_event_mean[static_cast<size_t>(i)]));
                per_sensor["mse_event_hw"].push_back(static_cast<double>(agg.mse_event_hw[static_cast<size_t>(i)]));
                per_sensor["mse_full_mean"].push_back(static_cast<double>(agg.mse_full_mean[static_cast<size_t>(i)]));
                per_sensor["mse_full_hw"].push_back(static_cast<double>(agg.mse_full_hw[static_cast<size_t>(i)]));
                per_sensor["mse_slope"].push_back(static_cast<double>(agg.mse_slope[static_cast<size_t>(i)]));
                per_sensor["mse_slope_hw"].push_back(static_cast<double>(agg.mse_slope_hw[static_cast<size_t>(i)]));
            }
            out["per_sensor"] = std::move(per_sensor);
            out["comm_rate"] = {{"mean", static_cast<double>(agg.comm_rate_mean)},
                                {"hw", static_cast<double>(agg.comm_rate_hw)}};
            if (mc == destimator::McMode::both) {
                out["perf_loss"] = {{"steady", static_cast<double>(agg.loss_steady)},
                                    {"whole", static_cast<double>(agg.loss_whole)},
                                    {"hw", static_cast<double>(agg.loss_steady_hw)}};
            }
            out["identities"] = {
                {"max_avg_identity_residual", static_cast<double>(agg.max_avg_identity_residual)},
                {"max_avg_identity_rel", static_cast<double>(agg.max_avg_identity_rel)},
                {"max_consistency_residual", static_cast<double>(agg.max_consistency_residual)},
                {"trigger_violations", agg.trigger_violations}};

            // trace CSV for the first trace_trials trials of the primary mode
            const fs::path tr_path = fs::path(out_dir) / "traces.csv";
            std::ofstream tr(tr_path);
            written.push_back(tr_path);
            tr << "k,trial,sensor,mse,triggered,avg_identity_residual\n";
            tr.precision(12);
            const Index tt = std::min(cfg.trace_trials, cfg.trials);
            for (Index t = 0; t < tt; ++t) {
                const destimator::TrialResult& res = (mc == destimator::McMode::full)
                                                         ? results[static_cast<size_t>(t)].full
                                                         : results[static_cast<size_t>(t)].event;
                for (size_t k = 0; k < res.sqerr.size(); ++k) {
                    for (Index i = 0; i < agg.sensors; ++i) {
                        tr << (k + 1) << ',' << t << ',' << i << ','
                           << static_cast<double>(res.sqerr[k][static_cast<size_t>(i)]) << ','
                           << static_cast<int>(res.fired[k][static_cast<size_t>(i)]) << ','
                           << static_cast<double>(res.avg_identity_trace[k]) << "\n";
                    }
                }
            }

            summary << "feasibility: Mahler(S)=" << fmt(p.sdesign.certificate.mahler)
                    << " threshold=" << fmt(p.sdesign.certificate.threshold)
                    << " zeta=" << fmt(p.sdesign.zeta) << "\n";
            summary << "gamma: [";
            for (Index i = 0; i < p.sdesign.Gamma.cols(); ++i) {
                summary << (i ? ", " : "") << fmt(p.sdesign.Gamma(i));
            }
            summary << "]\n";
            print_summary_line(summary, "trials x horizon",
                               std::to_string(cfg.trials) + " x " + std::to_string(cfg.horizon));
            print_summary_line(summary, "comm rate (k>=1)", fmt(agg.comm_rate_mean, 4));
            if (mc == destimator::McMode::both) {
                print_summary_line(summary, "perf loss steady/whole",
                                   fmt(agg.loss_steady * 100.0L, 3) + "% / " +
                                       fmt(agg.loss_whole * 100.0L, 3) + "%");
            }
            std::ostringstream mse;
            for (Index i = 0; i < agg.sensors; ++i) {
                mse << (i ? ", " : "")
                    << fmt((mc == destimator::McMode::full ? agg.mse_full_mean
                                                           : agg.mse_event_mean)[static_cast<size_t>(i)],
                           4);
            }
            print_summary_line(summary, "per-sensor steady MSE", mse.str());
            print_summary_line(summary, "central steady MSE", fmt(agg.central_mse_mean, 4));
            print_summary_line(summary, "max avg-identity residual",
                               fmt(agg.max_avg_identity_residual, 3));
            print_summary_line(summary, "max consistency residual",
                               fmt(agg.max_consistency_residual, 3));
        }

        std::ofstream ja(agg_path);
        written.push_back(agg_path);
        ja << out.dump(2) << "\n";
        ja.close();

        if (!quiet) {
            std::cout << summary.str();
            std::cout << "wrote " << agg_path.string() << "\n";
        }
        return 0;
    } catch (const std::exception& e) {
        for (const fs::path& p : written) {
            std::error_code ec;
            fs::remove(p, ec);
        }
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace etsync::runner
