import math

import numpy as np
import pytest

import cefl


def test_rate_formulas():
    n0 = 1e-9
    v = 1e6
    assert cefl.uplink_rate(v, 3.0 * n0 * v, 1.0, n0) == pytest.approx(2e6)
    assert cefl.uplink_rate(v, 0.0, 1.0, n0) == 0.0
    assert cefl.downlink_rate(2e6, 2e6 * n0, 1.0, n0) == pytest.approx(2e6)
    with pytest.raises(Exception):
        cefl.uplink_rate(0.0, 1.0, 1.0, n0)


def test_offload_plan_conservation():
    rho_ue = np.full((3, 2), 0.2)
    rho_bs = np.full((2, 2), 0.5)
    dbar = np.array([100.0, 50.0, 10.0])
    out = cefl.apply_offload_plan(rho_ue, rho_bs, dbar)
    total = out["ue_kept"].sum() + out["dc_total"].sum()
    assert total == pytest.approx(dbar.sum())


def test_variance_bound_and_stepsize():
    assert cefl.sgd_variance_bound(100.0, 0.5, 1.0, 1.0) == pytest.approx(0.0198)
    assert cefl.sgd_variance_bound(100.0, 1.0, 1.0, 1.0) == 0.0
    ok, lhs, thr = cefl.step_size_check(0.001, np.full(4, 5.0), 0.01, 1.0, 10.0)
    assert ok and lhs <= thr
    ok_big, _, _ = cefl.step_size_check(0.001, np.full(4, 5000.0), 0.01, 1.0, 10.0)
    assert not ok_big


def test_accumulation_weights():
    a = cefl.accumulation_weights(3, 0.5, 1.0)  # q = 1/2
    assert np.allclose(a, [0.25, 0.5, 1.0])


def test_consensus_mean_preservation():
    adj = np.array([[0, 1, 1], [1, 0, 1], [1, 1, 0]], dtype=np.int32)
    w = cefl.consensus_weights(adj, 0.3)
    assert np.allclose(w.sum(axis=1), 1.0)
    state = np.array([[1.0], [5.0], [9.0]])
    out = cefl.consensus_run(state, w, 200, 0)
    assert np.allclose(out, 5.0, atol=1e-9)


def test_simplex_projection():
    p = cefl.project_simplex(np.array([2.0, 0.0]), 1.0)
    assert np.allclose(p, [1.0, 0.0])


def test_network_generation(tmp_path):
    csv = tmp_path / "network.csv"
    toml = tmp_path / "topology.toml"
    n, b, s = cefl.generate_network_files(str(csv), str(toml), 5, 4, 2, seed=1)
    assert (n, b, s) == (20, 10, 5)
    assert csv.exists() and toml.exists()
    header = csv.read_text().splitlines()[0]
    assert header.startswith("src_kind,src_id,dst_kind,dst_id,rate_mean_bps")


def test_e2e_rates_positive():
    rates = cefl.e2e_rate_matrix(sub_networks=2, seed=3)
    assert rates.shape == (8, 2)
    assert (rates > 0).all()


def test_solver_descends_and_rounds_binary():
    out = cefl.solve_orchestration(sub_networks=2, seed=5, sca_iters=20)
    trace = out["trace"]
    assert trace[-1] <= trace[0]
    i_dc = out["decision"]["i_dc"]
    assert sorted(i_dc)[-1] == 1.0 and math.isclose(sum(i_dc), 1.0)
    assert out["feasible"]


def test_experiment_loop_runs():
    metrics = cefl.run_experiment(seed=3, rounds=2, sub_networks=2, method="cefl")
    assert len(metrics["round"]) == 2
    assert metrics["round_energy"][0] > 0
    base = cefl.run_experiment(seed=3, rounds=2, sub_networks=2, method="fednova_uniform")
    assert len(base["round"]) == 2


def test_selftest():
    assert cefl.selftest(7)
