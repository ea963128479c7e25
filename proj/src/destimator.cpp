#include "etsync/destimator.hpp"

#include <atomic>
#include <cmath>
#include <thread>

#include "etsync/rng.hpp"

namespace etsync::destimator {

namespace {

constexpr uint64_t kTrialTagBase = 0x7000;

struct Moments {
    Real mean = 0.0L;
    Real hw = 0.0L;  // 1.96 * stderr
};

Moments moments(const std::vector<Real>& xs) {
    Moments mo;
    const Real n = static_cast<Real>(xs.size());
    if (xs.empty()) return mo;
    for (Real x : xs) mo.mean += x;
    mo.mean /= n;
    if (xs.size() < 2) return mo;
    Real ss = 0.0L;
    for (Real x : xs) ss += (x - mo.mean) * (x - mo.mean);
    mo.hw = 1.96L * std::sqrt(ss / (n - 1.0L)) / std::sqrt(n);
    return mo;
}

}  // namespace

std::vector<SensorNode> init_nodes(const decomp::Decomposition& dec) {
    if (!dec.is_real) {
        throw ComplexSpectrumDisallowed(
            "destimator: the event-based estimator needs a real decomposition spectrum");
    }
    std::vector<SensorNode> nodes;
    nodes.reserve(static_cast<size_t>(dec.m));
    for (Index i = 0; i < dec.m; ++i) {
        SensorNode nd;
        nd.index = i;
        nd.xi_hat = Vec::Zero(dec.n);
        nd.eta = Vec::Zero(dec.m * dec.n);
        nd.held = Vec::Zero(dec.m * dec.n);  // everyone broadcasts eta(0) = 0
        nd.last_broadcast_value = nd.held;
        nd.last_broadcast_time = 0;
        nd.x_breve = Vec::Zero(dec.n);
        nodes.push_back(std::move(nd));
    }
    return nodes;
}

void step(std::vector<SensorNode>& nodes, const Setup& setup, const Vec& y_next,
          Index k, Mode mode, Vec* z_out, std::vector<char>* fired_out,
          long* violations_out) {
    const decomp::Decomposition& dec = *setup.dec;
    const syncctl::SyncDesign& design = *setup.design;
    const netgraph::CommGraph& g = *setup.graph;
    const Index n = dec.n;
    const Index m = dec.m;
    if (y_next.size() != m || static_cast<Index>(nodes.size()) != m) {
        throw DimensionMismatch("destimator::step: per-sensor sizes");
    }

    // (1) local filters: z_i(k) = y_i(k+1) - beta^T xi_i(k)
    Vec z(m);
    for (Index i = 0; i < m; ++i) {
        SensorNode& nd = nodes[static_cast<size_t>(i)];
        z(i) = y_next(i) - dec.beta_r.dot(nd.xi_hat);
        nd.xi_hat = (dec.S * nd.xi_hat + Vec::Ones(n) * z(i)).eval();
    }
    if (z_out) *z_out = z;

    // (2) lifted synchronization input from held states at k:
    // u_i block b = Gamma sum_j a_ij (held_j - held_i) restricted to block b
    std::vector<Vec> u(static_cast<size_t>(m));
    for (Index i = 0; i < m; ++i) {
        Vec accum = Vec::Zero(m * n);
        for (Index j = 0; j < m; ++j) {
            const Real a = g.weight(i, j);
            if (a > 0.0L) {
                accum += a * (nodes[static_cast<size_t>(j)].held -
                              nodes[static_cast<size_t>(i)].held);
            }
        }
        Vec ui(m);
        for (Index b = 0; b < m; ++b) {
            ui(b) = design.Gamma.dot(accum.segment(b * n, n));
        }
        u[static_cast<size_t>(i)] = std::move(ui);
    }

    // (3) eta_i(k+1) = S~ eta_i + B~ u_i + L~_i z_i, and local estimates
    const Mat F = fusion_matrix(dec);
    for (Index i = 0; i < m; ++i) {
        SensorNode& nd = nodes[static_cast<size_t>(i)];
        for (Index b = 0; b < m; ++b) {
            auto block = nd.eta.segment(b * n, n);
            block = (dec.S * block + design.B * u[static_cast<size_t>(i)](b)).eval();
        }
        nd.eta.segment(i * n, n) += Vec::Ones(n) * z(i);
        nd.x_breve = static_cast<Real>(m) * (F * nd.eta);
    }

    // (4) advance held predictions to k+1, then evaluate triggers
    const Real thr = setup.trigger.threshold(k + 1);
    if (fired_out) fired_out->assign(static_cast<size_t>(m), 0);
    for (Index i = 0; i < m; ++i) {
        SensorNode& nd = nodes[static_cast<size_t>(i)];
        for (Index b = 0; b < m; ++b) {
            auto block = nd.held.segment(b * n, n);
            block = (dec.S * block).eval();
        }
        const Real err2 = (nd.held - nd.eta).squaredNorm();
        const bool fire = (mode == Mode::full) || err2 >= thr;
        if (fire) {
            nd.held = nd.eta;
            nd.last_broadcast_value = nd.eta;
            nd.last_broadcast_time = k + 1;
            nd.trigger_count += 1;
            if (fired_out) (*fired_out)[static_cast<size_t>(i)] = 1;
        } else if (violations_out && err2 >= thr) {
            *violations_out += 1;
        }
    }
}

TrialResult run_trial(const Setup& setup, Index horizon, uint64_t seed, Mode mode,
                      bool keep_traces) {
    const decomp::Decomposition& dec = *setup.dec;
    const Index n = dec.n;
    const Index m = dec.m;
    setup.trigger.validate();

    const plantsim::Trajectory traj =
        plantsim::simulate_plant(*setup.model, *setup.sensors, horizon, seed);

    std::vector<SensorNode> nodes = init_nodes(dec);
    TrialResult res;
    res.mse_steady.assign(static_cast<size_t>(m), 0.0L);
    res.mse_whole.assign(static_cast<size_t>(m), 0.0L);
    res.sqerr.reserve(keep_traces ? static_cast<size_t>(horizon) : 0);

    const Index steady_from = horizon / 2 + 1;  // k in [steady_from, horizon]
    const Real steady_count = static_cast<Real>(horizon - steady_from + 1);

    // centralized baseline with the gain the decomposition actually uses,
    // in factored form (see kalman::KalmanDesign note)
    Vec xhat = Vec::Zero(n);
    const Mat& A = dec.A;
    const Mat& C = setup.sensors->C;
    const Mat& K = dec.K_used;

    Vec eta_bar_prev = Vec::Zero(m * n);
    Vec z(m);
    std::vector<char> fired;

    for (Index k = 0; k < horizon; ++k) {
        const Vec& y = traj.measurements[static_cast<size_t>(k)];

        step(nodes, setup, y, k, mode, &z, keep_traces ? &fired : nullptr,
             &res.trigger_violations);

        const Vec pred = A * xhat;
        xhat = pred + K * (y - C * pred);
        res.max_xhat_norm = std::max(res.max_xhat_norm, xhat.norm());

        const Index t = k + 1;
        const Vec& x_true = traj.states[static_cast<size_t>(t)];

        // identities
        Vec xsum = Vec::Zero(n);
        Vec eta_bar = Vec::Zero(m * n);
        Vec xi_sum_stacked = Vec::Zero(m * n);
        long broadcasts = 0;
        for (Index i = 0; i < m; ++i) {
            const SensorNode& nd = nodes[static_cast<size_t>(i)];
            xsum += nd.x_breve;
            eta_bar += nd.eta;
            for (Index b = 0; b < m; ++b) {
                xi_sum_stacked.segment(b * n, n) += nd.eta.segment(b * n, n);
            }
            broadcasts += (nd.last_broadcast_time == t) ? 1 : 0;
        }
        eta_bar /= static_cast<Real>(m);
        res.comm_rate += static_cast<Real>(broadcasts);

        const Vec avg = xsum / static_cast<Real>(m);
        const Real avg_res = (avg - xhat).norm();
        const Real xhat_scale = 1.0L + xhat.norm();
        res.max_avg_identity_residual = std::max(res.max_avg_identity_residual, avg_res);
        res.max_avg_identity_rel = std::max(res.max_avg_identity_rel, avg_res / xhat_scale);

        // sum_i F_i xi_i vs central estimate
        Vec fus = Vec::Zero(n);
        for (Index i = 0; i < m; ++i) {
            fus += dec.F[static_cast<size_t>(i)] * nodes[static_cast<size_t>(i)].xi_hat;
        }
        const Real fus_res = (fus - xhat).norm();
        res.max_fusion_residual = std::max(res.max_fusion_residual, fus_res);
        res.max_fusion_rel = std::max(res.max_fusion_rel, fus_res / xhat_scale);

        // xi_j(k) = sum_i eta_{i,j}(k)
        Real dec_res = 0.0L;
        for (Index b = 0; b < m; ++b) {
            dec_res = std::max(
                dec_res, (xi_sum_stacked.segment(b * n, n) -
                          nodes[static_cast<size_t>(b)].xi_hat).norm() /
                             (1.0L + nodes[static_cast<size_t>(b)].xi_hat.norm()));
        }
        res.max_decomp_identity_residual = std::max(res.max_decomp_identity_residual, dec_res);

        // eta-average recursion: eta_bar(k+1) = S~ eta_bar(k) + (1/m) sum L~_i z_i
        Vec expect(m * n);
        for (Index b = 0; b < m; ++b) {
            expect.segment(b * n, n) =
                dec.S * eta_bar_prev.segment(b * n, n) + Vec::Ones(n) * (z(b) / static_cast<Real>(m));
        }
        const Real cons = (eta_bar - expect).norm() / (1.0L + eta_bar.norm());
        res.max_consistency_residual = std::max(res.max_consistency_residual, cons);
        eta_bar_prev = eta_bar;

        // errors
        std::vector<Real> row(static_cast<size_t>(m));
        for (Index i = 0; i < m; ++i) {
            const Real e2 = (nodes[static_cast<size_t>(i)].x_breve - x_true).squaredNorm();
            row[static_cast<size_t>(i)] = e2;
            res.mse_whole[static_cast<size_t>(i)] += e2 / static_cast<Real>(horizon);
            if (t >= steady_from) res.mse_steady[static_cast<size_t>(i)] += e2 / steady_count;
        }
        if (t >= steady_from) {
            res.central_mse_steady += (xhat - x_true).squaredNorm() / steady_count;
        }
        if (keep_traces) {
            res.sqerr.push_back(std::move(row));
            res.fired.push_back(fired);
            res.avg_identity_trace.push_back(avg_res);
        }
    }
    res.comm_rate /= static_cast<Real>(m) * static_cast<Real>(horizon);
    return res;
}

PairedTrial run_paired_trial(const Setup& setup, Index horizon, uint64_t seed,
                             bool keep_traces) {
    PairedTrial pt;
    pt.event = run_trial(setup, horizon, seed, Mode::event, keep_traces);
    pt.full = run_trial(setup, horizon, seed, Mode::full, keep_traces);
    auto net = [](const std::vector<Real>& v) {
        Real s = 0.0L;
        for (Real x : v) s += x;
        return s / static_cast<Real>(v.size());
    };
    pt.loss_steady = (net(pt.event.mse_steady) - net(pt.full.mse_steady)) / net(pt.full.mse_steady);
    pt.loss_whole = (net(pt.event.mse_whole) - net(pt.full.mse_whole)) / net(pt.full.mse_whole);
    return pt;
}

std::vector<PairedTrial> run_trials(const Setup& setup, Index trials, Index horizon,
                                    uint64_t master_seed, int workers, McMode mode) {
    if (trials < 1) throw InvalidSpec("run_trials: trials must be >= 1");
    if (workers < 1) workers = 1;

    std::vector<PairedTrial> results(static_cast<size_t>(trials));
    std::atomic<Index> cursor{0};
    auto worker = [&]() {
        for (;;) {
            const Index t = cursor.fetch_add(1);
            if (t >= trials) return;
            const uint64_t seed =
                rng::substream_seed(master_seed, kTrialTagBase + static_cast<uint64_t>(t));
            PairedTrial& pt = results[static_cast<size_t>(t)];
            switch (mode) {
                case McMode::event:
                    pt.event = run_trial(setup, horizon, seed, Mode::event, true);
                    break;
                case McMode::full:
                    pt.full = run_trial(setup, horizon, seed, Mode::full, true);
                    break;
                case McMode::both: {
                    pt.event = run_trial(setup, horizon, seed, Mode::event, true);
                    pt.full = run_trial(setup, horizon, seed, Mode::full, false);
                    auto net = [](const std::vector<Real>& v) {
                        Real s = 0.0L;
                        for (Real x : v) s += x;
                        return s / static_cast<Real>(v.size());
                    };
                    pt.loss_steady = (net(pt.event.mse_steady) - net(pt.full.mse_steady)) /
                                     net(pt.full.mse_steady);
                    pt.loss_whole = (net(pt.event.mse_whole) - net(pt.full.mse_whole)) /
                                    net(pt.full.mse_whole);
                    break;
                }
            }
        }
    };
    {
        std::vector<std::thread> pool;
        const int nthreads = std::min<int>(workers, static_cast<int>(trials));
        pool.reserve(static_cast<size_t>(nthreads));
        for (int i = 0; i < nthreads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    return results;
}

Aggregate aggregate(const std::vector<PairedTrial>& results, const Setup& setup,
                    Index horizon, McMode mode, bool keep_trace_mean) {
    // deterministic reduction: strict trial order, independent of workers
    const Index m = setup.dec->m;
    const Index trials = static_cast<Index>(results.size());
    const bool has_event = mode != McMode::full;
    const bool has_full = mode != McMode::event;
    auto primary = [&](const PairedTrial& pt) -> const TrialResult& {
        return has_event ? pt.event : pt.full;
    };
    Aggregate agg;
    agg.trials = trials;
    agg.sensors = m;
    agg.mse_event_mean.assign(static_cast<size_t>(m), 0.0L);
    agg.mse_event_hw.assign(static_cast<size_t>(m), 0.0L);
    agg.mse_full_mean.assign(static_cast<size_t>(m), 0.0L);
    agg.mse_full_hw.assign(static_cast<size_t>(m), 0.0L);

    std::vector<Real> rates, losses, central;
    rates.reserve(static_cast<size_t>(trials));
    std::vector<std::vector<Real>> ev(static_cast<size_t>(m)), fu(static_cast<size_t>(m));
    for (const PairedTrial& pt : results) {
        rates.push_back(primary(pt).comm_rate);
        central.push_back(primary(pt).central_mse_steady);
        if (mode == McMode::both) losses.push_back(pt.loss_steady);
        for (Index i = 0; i < m; ++i) {
            if (has_event)
                ev[static_cast<size_t>(i)].push_back(pt.event.mse_steady[static_cast<size_t>(i)]);
            if (has_full)
                fu[static_cast<size_t>(i)].push_back(pt.full.mse_steady[static_cast<size_t>(i)]);
        }
        if (has_event) {
            agg.max_avg_identity_residual =
                std::max(agg.max_avg_identity_residual, pt.event.max_avg_identity_residual);
            agg.max_avg_identity_rel =
                std::max(agg.max_avg_identity_rel, pt.event.max_avg_identity_rel);
            agg.max_consistency_residual =
                std::max(agg.max_consistency_residual, pt.event.max_consistency_residual);
            agg.trigger_violations += pt.event.trigger_violations;
        }
        if (has_full) {
            agg.max_avg_identity_residual =
                std::max(agg.max_avg_identity_residual, pt.full.max_avg_identity_residual);
            agg.max_avg_identity_rel =
                std::max(agg.max_avg_identity_rel, pt.full.max_avg_identity_rel);
            agg.max_consistency_residual =
                std::max(agg.max_consistency_residual, pt.full.max_consistency_residual);
            agg.trigger_violations += pt.full.trigger_violations;
        }
    }
    for (Index i = 0; i < m; ++i) {
        const Moments me = moments(ev[static_cast<size_t>(i)]);
        const Moments mf = moments(fu[static_cast<size_t>(i)]);
        agg.mse_event_mean[static_cast<size_t>(i)] = me.mean;
        agg.mse_event_hw[static_cast<size_t>(i)] = me.hw;
        agg.mse_full_mean[static_cast<size_t>(i)] = mf.mean;
        agg.mse_full_hw[static_cast<size_t>(i)] = mf.hw;
    }
    const Moments mr = moments(rates);
    agg.comm_rate_mean = mr.mean;
    agg.comm_rate_hw = mr.hw;
    agg.loss_steady_hw = moments(losses).hw;
    agg.central_mse_mean = moments(central).mean;

    if (mode == McMode::both) {
        // loss from trial-averaged network MSE (steady and whole horizon)
        Real ev_st = 0.0L, fu_st = 0.0L, ev_wh = 0.0L, fu_wh = 0.0L;
        for (const PairedTrial& pt : results) {
            for (Index i = 0; i < m; ++i) {
                ev_st += pt.event.mse_steady[static_cast<size_t>(i)];
                fu_st += pt.full.mse_steady[static_cast<size_t>(i)];
                ev_wh += pt.event.mse_whole[static_cast<size_t>(i)];
                fu_wh += pt.full.mse_whole[static_cast<size_t>(i)];
            }
        }
        agg.loss_steady = (ev_st - fu_st) / fu_st;
        agg.loss_whole = (ev_wh - fu_wh) / fu_wh;
    }

    if (keep_trace_mean) {
        agg.mse_trace_mean.assign(static_cast<size_t>(horizon),
                                  std::vector<Real>(static_cast<size_t>(m), 0.0L));
        for (const PairedTrial& pt : results) {
            const TrialResult& tr = primary(pt);
            for (Index k = 0; k < horizon; ++k) {
                for (Index i = 0; i < m; ++i) {
                    agg.mse_trace_mean[static_cast<size_t>(k)][static_cast<size_t>(i)] +=
                        tr.sqerr[static_cast<size_t>(k)][static_cast<size_t>(i)] /
                        static_cast<Real>(trials);
                }
            }
        }
        // steady-window OLS slope per sensor with a CI half-width
        const Index steady_from = horizon / 2;  // trace index (k-1) window start
        const Real cnt = static_cast<Real>(horizon - steady_from);
        agg.mse_slope.assign(static_cast<size_t>(m), 0.0L);
        agg.mse_slope_hw.assign(static_cast<size_t>(m), 0.0L);
        for (Index i = 0; i < m; ++i) {
            Real tbar = 0.0L, ybar = 0.0L;
            for (Index k = steady_from; k < horizon; ++k) {
                tbar += static_cast<Real>(k);
                ybar += agg.mse_trace_mean[static_cast<size_t>(k)][static_cast<size_t>(i)];
            }
            tbar /= cnt;
            ybar /= cnt;
            Real sxx = 0.0L, sxy = 0.0L;
            for (Index k = steady_from; k < horizon; ++k) {
                const Real dt = static_cast<Real>(k) - tbar;
                sxx += dt * dt;
                sxy += dt * (agg.mse_trace_mean[static_cast<size_t>(k)][static_cast<size_t>(i)] - ybar);
            }
            const Real slope = sxy / sxx;
            Real sse = 0.0L;
            for (Index k = steady_from; k < horizon; ++k) {
                const Real fit = ybar + slope * (static_cast<Real>(k) - tbar);
                const Real r = agg.mse_trace_mean[static_cast<size_t>(k)][static_cast<size_t>(i)] - fit;
                sse += r * r;
            }
            const Real sigma = std::sqrt(sse / (cnt - 2.0L));
            agg.mse_slope[static_cast<size_t>(i)] = slope;
            agg.mse_slope_hw[static_cast<size_t>(i)] = 1.96L * sigma / std::sqrt(sxx);
        }
    }
    return agg;
}

Aggregate monte_carlo(const Setup& setup, Index trials, Index horizon,
                      uint64_t master_seed, int workers, McMode mode,
                      bool keep_trace_mean) {
    return aggregate(run_trials(setup, trials, horizon, master_seed, workers, mode),
                     setup, horizon, mode, keep_trace_mean);
}

}  // namespace etsync::destimator
