"""Smoke tests for the pyetsync module and the CLI binary.

The CMake test target exports PYTHONPATH (module location) and ETSYNC_CLI
(path to the command-line binary).
"""

import json
import math
import os
import subprocess

import pytest

import pyetsync


def test_eig_and_mahler():
    lam, V = pyetsync.eig([[0.9, 0.0], [0.0, 1.1]])
    assert abs(lam[0] - 0.9) < 1e-12
    assert abs(lam[1] - 1.1) < 1e-12
    assert V.shape == (2, 2)
    assert abs(pyetsync.mahler_measure([[0.9, 0.0], [0.0, 1.1]]) - 1.1) < 1e-12
    assert abs(pyetsync.mahler_measure([[2.0, 0.0], [0.0, 3.0]]) - 6.0) < 1e-12


def test_dare_and_gain():
    A = [[0.9, 0.0], [0.0, 1.1]]
    C = [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, -1.0]]
    Q = [[0.5, 0.0], [0.0, 0.5]]
    R = [[2.0 if i == j else 0.0 for j in range(4)] for i in range(4)]
    P = pyetsync.solve_dare(A, C, Q, R)
    assert abs(P[0][0] + P[1][1] - 1.7735442158650302) < 1e-10
    K = pyetsync.kalman_gain(P, C, R)
    assert K.shape == (2, 4)


def test_graph_operations():
    mu = pyetsync.laplacian_spectrum("ring", 4)
    assert [round(x, 9) for x in mu] == [0.0, 2.0, 2.0, 4.0]
    assert abs(pyetsync.feasibility_threshold("ring", 4) - 3.0) < 1e-9
    assert math.isinf(pyetsync.feasibility_threshold("complete", 4))
    L = pyetsync.laplacian("ring", 4)
    assert L[0][0] == 2.0 and L[0][1] == -1.0


def test_presets_and_design():
    assert pyetsync.preset_names() == ["paper_sec5", "sync_demo"]
    cfg = pyetsync.preset_json("paper_sec5")
    design = pyetsync.build_design(cfg)
    gamma = design["gamma"]
    assert abs(gamma[0] - 0.80) <= 0.05
    assert abs(gamma[1] + 0.41) <= 0.05
    assert abs(design["threshold"] - 3.0) < 1e-9
    assert design["zeta"] == 0.5
    assert abs(design["trace_P"] - 1.7735442158650302) < 1e-10


def test_invalid_config_raises():
    with pytest.raises(pyetsync.EtsyncError):
        pyetsync.validate_config('{"mode": "both"}')
    with pytest.raises(pyetsync.EtsyncError):
        pyetsync.validate_config('{"graph": {"kind": "ring", "nodes": 4, "typo": 1}}')


def test_run_trial_identities():
    cfg = pyetsync.preset_json("paper_sec5")
    res = pyetsync.run_trial(cfg, horizon=200, seed=7, mode="event")
    assert res["trigger_violations"] == 0
    assert res["max_avg_identity_rel"] <= 1e-8
    assert 0.0 < res["comm_rate"] < 1.0
    full = pyetsync.run_trial(cfg, horizon=200, seed=7, mode="full")
    assert full["comm_rate"] == 1.0


def test_monte_carlo_summary():
    cfg = pyetsync.preset_json("paper_sec5")
    agg = pyetsync.monte_carlo(cfg, trials=4, horizon=120, seed=3, workers=2)
    assert agg["trials"] == 4
    assert len(agg["mse_event_mean"]) == 4
    assert agg["trigger_violations"] == 0
    assert all(m > 0 for m in agg["mse_event_mean"])
    # deterministic reduction regardless of workers
    again = pyetsync.monte_carlo(cfg, trials=4, horizon=120, seed=3, workers=1)
    assert agg == again


def test_cli_end_to_end(tmp_path):
    cli = os.environ.get("ETSYNC_CLI")
    if not cli:
        pytest.skip("ETSYNC_CLI not set")
    out1 = tmp_path / "run1"
    out2 = tmp_path / "run2"
    for out, workers in ((out1, "1"), (out2, "3")):
        proc = subprocess.run(
            [cli, "--preset", "paper_sec5", "--trials", "2", "--horizon", "80",
             "--workers", workers, "--out", str(out)],
            capture_output=True, text=True, timeout=120)
        assert proc.returncode == 0, proc.stderr

    agg1 = (out1 / "aggregate.json").read_text()
    agg2 = (out2 / "aggregate.json").read_text()
    assert agg1 == agg2  # byte-identical across worker counts

    data = json.loads(agg1)
    for key in ("config_echo", "seed", "gamma", "per_sensor", "comm_rate",
                "perf_loss", "identities", "feasibility"):
        assert key in data
    assert data["seed"] == 12061947

    traces = (out1 / "traces.csv").read_text()
    assert traces.startswith("k,trial,sensor,mse,triggered,avg_identity_residual\n")


def test_cli_sync_only(tmp_path):
    cli = os.environ.get("ETSYNC_CLI")
    if not cli:
        pytest.skip("ETSYNC_CLI not set")
    out = tmp_path / "sync"
    proc = subprocess.run(
        [cli, "--preset", "sync_demo", "--trials", "2", "--horizon", "60",
         "--out", str(out)],
        capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0, proc.stderr
    data = json.loads((out / "aggregate.json").read_text())
    kinds = [k["kind"] for k in data["per_noise"]]
    assert kinds == ["gaussian_iid", "state_dependent", "ar1_correlated",
                     "cross_correlated"]
    assert (out / "sync_events.csv").read_text().startswith(
        "kind,trial,k,agent,triggered\n")
