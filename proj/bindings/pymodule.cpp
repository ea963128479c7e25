// Python bindings over the double-precision boundary: the core computes in
// long double; values crossing into numpy are narrowed to double.
#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <complex>
#include <string>
#include <vector>

#include "etsync/destimator.hpp"
#include "etsync/matops.hpp"
#include "etsync/runner.hpp"

namespace py = pybind11;
using namespace etsync;

using MatD = Eigen::MatrixXd;
using VecD = Eigen::VectorXd;
using CMatD = Eigen::MatrixXcd;

namespace {

Mat widen(const MatD& m) { return m.cast<Real>(); }
MatD narrow(const Mat& m) { return m.cast<double>(); }
VecD narrow_v(const Vec& v) { return v.cast<double>(); }
CMatD narrow_c(const CMat& m) { return m.cast<std::complex<double>>(); }

netgraph::CommGraph graph_of(const std::string& kind, Index nodes) {
    runner::GraphSpec gs;
    gs.kind = kind;
    gs.nodes = nodes;
    return gs.build();
}

py::dict design_summary(const runner::Pipeline& p) {
    py::dict d;
    d["gamma"] = narrow_v(p.sdesign.Gamma.transpose());
    d["S"] = narrow(p.dec.S);
    d["beta"] = narrow_v(p.dec.beta_r);
    d["K"] = narrow(p.dec.K_used);
    d["trace_P"] = static_cast<double>(p.kdesign.P.trace());
    d["trace_P_filtered"] =
        static_cast<double>(kalman::filtered_covariance(p.kdesign).trace());
    d["mahler"] = static_cast<double>(p.sdesign.certificate.mahler);
    d["threshold"] = static_cast<double>(p.sdesign.certificate.threshold);
    d["zeta"] = static_cast<double>(p.sdesign.zeta);
    std::vector<double> mu;
    for (Real m : p.spectrum.mu) mu.push_back(static_cast<double>(m));
    d["mu"] = mu;
    return d;
}

py::dict trial_summary(const destimator::TrialResult& r) {
    py::dict d;
    std::vector<double> st, wh;
    for (Real v : r.mse_steady) st.push_back(static_cast<double>(v));
    for (Real v : r.mse_whole) wh.push_back(static_cast<double>(v));
    d["mse_steady"] = st;
    d["mse_whole"] = wh;
    d["central_mse_steady"] = static_cast<double>(r.central_mse_steady);
    d["comm_rate"] = static_cast<double>(r.comm_rate);
    d["max_avg_identity_residual"] = static_cast<double>(r.max_avg_identity_residual);
    d["max_avg_identity_rel"] = static_cast<double>(r.max_avg_identity_rel);
    d["max_consistency_residual"] = static_cast<double>(r.max_consistency_residual);
    d["trigger_violations"] = r.trigger_violations;
    return d;
}

destimator::Mode mode_of(const std::string& s) {
    if (s == "event") return destimator::Mode::event;
    if (s == "full") return destimator::Mode::full;
    throw ParseError("mode: expected event|full, got '" + s + "'");
}

destimator::McMode mc_mode_of(const std::string& s) {
    if (s == "event") return destimator::McMode::event;
    if (s == "full") return destimator::McMode::full;
    if (s == "both") return destimator::McMode::both;
    throw ParseError("mode: expected event|full|both, got '" + s + "'");
}

}  // namespace

PYBIND11_MODULE(pyetsync, m) {
    m.doc() = "Event-triggered synchronization and event-based distributed "
              "Kalman filtering";

    py::register_exception<Error>(m, "EtsyncError");

    // ---- matrix-level operations ----
    m.def("eig", [](const MatD& M) {
        const Spectrum s = matops::eig(widen(M));
        std::vector<std::complex<double>> lam;
        for (const Complex& l : s.eigenvalues) {
            lam.emplace_back(static_cast<double>(l.real()), static_cast<double>(l.imag()));
        }
        return py::make_tuple(lam, narrow_c(s.eigenvectors));
    }, py::arg("M"), "Eigendecomposition with (real, imag)-sorted eigenvalues");

    m.def("mahler_measure", [](const MatD& M) {
        return static_cast<double>(matops::mahler_measure(widen(M)));
    }, py::arg("M"));

    m.def("solve_dare", [](const MatD& A, const MatD& C, const MatD& Q, const MatD& R) {
        return narrow(matops::solve_dare_fixed_point(widen(A), widen(C), widen(Q), widen(R)));
    }, py::arg("A"), py::arg("C"), py::arg("Q"), py::arg("R"),
       "Steady-state prediction error covariance (DARE fixed point)");

    m.def("kalman_gain", [](const MatD& P, const MatD& C, const MatD& R) {
        return narrow(matops::kalman_gain(widen(P), widen(C), widen(R)));
    }, py::arg("P"), py::arg("C"), py::arg("R"));

    // ---- graph operations ----
    m.def("laplacian", [](const std::string& kind, Index nodes) {
        return narrow(netgraph::laplacian(graph_of(kind, nodes)));
    }, py::arg("kind"), py::arg("nodes"));

    m.def("laplacian_spectrum", [](const std::string& kind, Index nodes) {
        std::vector<double> mu;
        for (Real v : netgraph::spectrum(graph_of(kind, nodes)).mu) {
            mu.push_back(static_cast<double>(v));
        }
        return mu;
    }, py::arg("kind"), py::arg("nodes"));

    m.def("feasibility_threshold", [](const std::string& kind, Index nodes) {
        return static_cast<double>(
            netgraph::feasibility_threshold(netgraph::spectrum(graph_of(kind, nodes))));
    }, py::arg("kind"), py::arg("nodes"),
       "(1 + mu2/mum) / (1 - mu2/mum), +inf when mu2 == mum");

    // ---- configs and the design layer ----
    m.def("preset_names", &runner::preset_names);
    m.def("preset_json", [](const std::string& name) {
        return runner::config_echo(runner::preset(name));
    }, py::arg("name"), "Bundled preset as a JSON string");

    m.def("validate_config", [](const std::string& json_text) {
        return runner::config_echo(runner::parse_config(json_text));
    }, py::arg("json_text"), "Parse + validate; returns the canonical echo");

    m.def("build_design", [](const std::string& json_text) {
        return design_summary(runner::build_pipeline(runner::parse_config(json_text)));
    }, py::arg("json_text"),
       "Full design layer: Kalman gain, decomposition, synchronizing gain");

    // ---- simulation ----
    m.def("run_trial", [](const std::string& json_text, Index horizon, uint64_t seed,
                          const std::string& mode) {
        const runner::RunConfig cfg = runner::parse_config(json_text);
        const runner::Pipeline p = runner::build_pipeline(cfg);
        return trial_summary(destimator::run_trial(p.setup(), horizon, seed, mode_of(mode)));
    }, py::arg("json_text"), py::arg("horizon"), py::arg("seed"), py::arg("mode") = "event");

    m.def("monte_carlo", [](const std::string& json_text, Index trials, Index horizon,
                            uint64_t seed, int workers, const std::string& mode) {
        const runner::RunConfig cfg = runner::parse_config(json_text);
        const runner::Pipeline p = runner::build_pipeline(cfg);
        const auto agg = destimator::monte_carlo(p.setup(), trials, horizon, seed,
                                                 workers, mc_mode_of(mode));
        py::dict d;
        std::vector<double> em, eh, fm, fh, sl, sh;
        for (Index i = 0; i < agg.sensors; ++i) {
            em.push_back(static_cast<double>(agg.mse_event_mean[static_cast<size_t>(i)]));
            eh.push_back(static_cast<double>(agg.mse_event_hw[static_cast<size_t>(i)]));
            fm.push_back(static_cast<double>(agg.mse_full_mean[static_cast<size_t>(i)]));
            fh.push_back(static_cast<double>(agg.mse_full_hw[static_cast<size_t>(i)]));
            sl.push_back(static_cast<double>(agg.mse_slope[static_cast<size_t>(i)]));
            sh.push_back(static_cast<double>(agg.mse_slope_hw[static_cast<size_t>(i)]));
        }
        d["trials"] = agg.trials;
        d["mse_event_mean"] = em;
        d["mse_event_hw"] = eh;
        d["mse_full_mean"] = fm;
        d["mse_full_hw"] = fh;
        d["mse_slope"] = sl;
        d["mse_slope_hw"] = sh;
        d["comm_rate_mean"] = static_cast<double>(agg.comm_rate_mean);
        d["comm_rate_hw"] = static_cast<double>(agg.comm_rate_hw);
        d["loss_steady"] = static_cast<double>(agg.loss_steady);
        d["loss_whole"] = static_cast<double>(agg.loss_whole);
        d["central_mse_mean"] = static_cast<double>(agg.central_mse_mean);
        d["max_avg_identity_rel"] = static_cast<double>(agg.max_avg_identity_rel);
        d["max_consistency_residual"] = static_cast<double>(agg.max_consistency_residual);
        d["trigger_violations"] = agg.trigger_violations;
        return d;
    }, py::arg("json_text"), py::arg("trials"), py::arg("horizon"), py::arg("seed"),
       py::arg("workers") = 0, py::arg("mode") = "both");

    m.def("run", [](const std::string& json_text, const std::string& out_dir) {
        return runner::run(runner::parse_config(json_text), out_dir, /*quiet=*/true);
    }, py::arg("json_text"), py::arg("out_dir"),
       "Execute a config end to end; writes aggregate.json and traces");
}
