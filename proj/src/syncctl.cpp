#include "etsync/syncctl.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "etsync/matops.hpp"

namespace etsync::syncctl {

void TriggerParams::validate() const {
    if (c0 < 0.0L || c1 < 0.0L) throw InvalidSpec("TriggerParams: c0, c1 must be >= 0");
    if (c0 + c1 <= 0.0L) throw InvalidSpec("TriggerParams: c0 + c1 must be > 0");
    if (!(rho > 0.0L && rho < 1.0L)) throw InvalidSpec("TriggerParams: rho must lie in (0, 1)");
}

Real TriggerParams::threshold(Index k) const {
    return c0 + c1 * std::pow(rho, static_cast<Real>(k));
}

FeasibilityCertificate check_feasibility(const Mat& S,
                                         const netgraph::LaplacianSpectrum& spec) {
    FeasibilityCertificate cert;
    cert.mahler = matops::mahler_measure(S);
    cert.threshold = netgraph::feasibility_threshold(spec);
    cert.feasible = cert.mahler < cert.threshold;
    if (!cert.feasible) {
        std::ostringstream os;
        os << "check_feasibility: Mahler(S) = " << static_cast<double>(cert.mahler)
           << " >= synchronizability threshold " << static_cast<double>(cert.threshold);
        throw Infeasible(os.str());
    }
    return cert;
}

Real choose_zeta(const Mat& S, const netgraph::LaplacianSpectrum& spec,
                 std::optional<Real> requested) {
    FeasibilityCertificate cert = check_feasibility(S, spec);
    if (requested) {
        const Real z = *requested;
        if (!(z > 0.0L && z < 1.0L)) {
            throw ZetaOutOfRange("choose_zeta: zeta must lie in (0, 1)");
        }
        const Real inv = 1.0L / z;
        if (!(cert.mahler < inv) || !(inv <= cert.threshold)) {
            std::ostringstream os;
            os << "choose_zeta: need Mahler(S) < 1/zeta <= threshold, got "
               << static_cast<double>(cert.mahler) << " / " << static_cast<double>(inv)
               << " / " << static_cast<double>(cert.threshold);
            throw ZetaOutOfRange(os.str());
        }
        return z;
    }
    // midpoint of the valid interval (Mahler, threshold] in 1/zeta coordinates;
    // with the +inf sentinel fall back to doubling the lower end.
    const Real lo = cert.mahler;
    const Real inv = std::isinf(cert.threshold) ? 2.0L * std::max(lo, 1.0L)
                                                : (lo + cert.threshold) / 2.0L;
    return 1.0L / inv;
}

Vec default_input_direction(const Mat& S, uint64_t seed) {
    Vec B = Vec::Ones(S.rows());
    if (matops::is_controllable(S, B)) return B;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<Real> unif(-1.0L, 1.0L);
    for (int attempt = 0; attempt < 64; ++attempt) {
        for (Index i = 0; i < B.size(); ++i) B(i) = unif(rng);
        if (matops::is_controllable(S, B)) return B;
    }
    throw NotControllable("default_input_direction: no controllable direction found");
}

SyncDesign design_gamma(const Mat& S, const Vec& B,
                        const netgraph::LaplacianSpectrum& spec, Real zeta) {
    if (!matops::is_controllable(S, B)) {
        throw NotControllable("design_gamma: (S, B) is not controllable");
    }
    SyncDesign d;
    d.S = S;
    d.B = B;
    d.zeta = choose_zeta(S, spec, zeta);
    d.mu2 = spec.mu[1];
    d.mu_m = spec.mu.back();
    d.certificate = check_feasibility(S, spec);
    d.certificate.zeta = d.zeta;
    d.P_lyap = matops::solve_modified_riccati(S, B, d.zeta, matops::default_riccati_shift(S));
    const Vec PB = d.P_lyap * B;
    const Real btpb = B.dot(PB);
    d.Gamma = (2.0L / (d.mu2 + d.mu_m)) * (PB.transpose() * S) / btpb;
    return d;
}

NetworkState init_network(const std::vector<Vec>& eta0) {
    NetworkState net;
    net.k = 0;
    net.agents.reserve(eta0.size());
    std::vector<Index> initial;
    for (size_t i = 0; i < eta0.size(); ++i) {
        AgentState a;
        a.eta = eta0[i];
        a.held = eta0[i];  // everyone broadcasts at the initial phase
        a.last_broadcast_value = eta0[i];
        a.last_broadcast_time = 0;
        a.trigger_count = 0;
        net.agents.push_back(std::move(a));
        initial.push_back(static_cast<Index>(i));
    }
    net.event_log.push_back(std::move(initial));
    return net;
}

Vec held_state(const AgentState& agent, const Mat& S, Index k) {
    if (k < agent.last_broadcast_time) {
        throw ClockSkew("held_state: query time precedes last broadcast");
    }
    Vec h = agent.last_broadcast_value;
    for (Index t = agent.last_broadcast_time; t < k; ++t) h = (S * h).eval();
    return h;
}

Real control_input(Index i, const NetworkState& network, const netgraph::CommGraph& g,
                   const SyncDesign& design) {
    const AgentState& self = network.agents[static_cast<size_t>(i)];
    Vec accum = Vec::Zero(self.held.size());
    for (Index j = 0; j < g.node_count(); ++j) {
        const Real a = g.weight(i, j);
        if (a > 0.0L) {
            accum += a * (network.agents[static_cast<size_t>(j)].held - self.held);
        }
    }
    return (design.Gamma * accum)(0);
}

bool evaluate_trigger(const AgentState& agent, Index k, const TriggerParams& params) {
    const Real err2 = (agent.held - agent.eta).squaredNorm();
    return err2 >= params.threshold(k);
}

void network_step(NetworkState& network, const netgraph::CommGraph& g,
                  const SyncDesign& design, const Vec& noises,
                  const std::vector<Vec>& L, const TriggerParams& params,
                  bool force_full) {
    const size_t m = network.agents.size();
    if (static_cast<size_t>(noises.size()) != m || L.size() != m) {
        throw DimensionMismatch("network_step: per-agent noise/input sizes");
    }
    params.validate();

    // (1)+(2) controls from the held states of round k (read-only phase)
    std::vector<Real> u(m);
    for (size_t i = 0; i < m; ++i) {
        u[i] = control_input(static_cast<Index>(i), network, g, design);
    }

    // (3) advance states, (4) clock, incremental held-state prediction
    for (size_t i = 0; i < m; ++i) {
        AgentState& a = network.agents[i];
        a.eta = (design.S * a.eta + design.B * u[i] + L[i] * noises(static_cast<Index>(i))).eval();
        a.held = (design.S * a.held).eval();
    }
    network.k += 1;

    // (5) triggers at k+1; broadcasts become visible to the next round
    std::vector<Index> fired;
    for (size_t i = 0; i < m; ++i) {
        AgentState& a = network.agents[i];
        if (force_full || evaluate_trigger(a, network.k, params)) {
            a.held = a.eta;
            a.last_broadcast_value = a.eta;
            a.last_broadcast_time = network.k;
            a.trigger_count += 1;
            fired.push_back(static_cast<Index>(i));
        }
    }
    network.event_log.push_back(std::move(fired));
}

}  // namespace etsync::syncctl
