"""One test per acceptance criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines.
"""
import dataclasses
import math
import time

import numpy as np
import pytest

from lockdown_hjb import ModelParams, constants, solve_value_function
from lockdown_hjb.cli import main
from lockdown_hjb.hamiltonian import classify_array, hamiltonian_array, psi_array
from lockdown_hjb.verify import (
    VerifyConfig,
    _grid_gap,
    _region_predicates,
    _suite_rng,
    check_dpp,
    check_gronwall,
    check_output_identity,
    oracle_hamiltonian_array,
    run_all,
    sample_costates,
    sample_triangle,
    suite_hamiltonian,
    suite_policy,
    suite_value,
)

from conftest import ACTIVE_PARAMS

SEED = 2024


def _line(num, title, ok, measured):
    print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {num:>2} {title}: {measured}")
    return ok


def _by_name(results):
    return {r.name: r for r in results}


def test_01_hamiltonian_oracle_equivalence(params):
    start = time.perf_counter()
    rng = np.random.default_rng([SEED, 1])
    n, m = 100_000, 10_000
    x = sample_triangle(rng, n)
    p, q = sample_costates(rng, n)
    s, i = x[:, 0], x[:, 1]
    closed = hamiltonian_array(s, i, p, q, params)
    oracle, arg = oracle_hamiltonian_array(s, i, p, q, params, m)
    levels, full = psi_array(s, i, p, q, params)
    err = float(np.max(np.abs(closed - oracle)))
    cell = params.l_bar / (m - 1)
    arg_gap = float(np.max(np.where(full, 0.0, np.abs(levels - arg))))
    secs = time.perf_counter() - start
    ok = err <= 1e-6 and arg_gap <= cell * (1 + 1e-9) and secs <= 30.0
    assert _line(1, "oracle equivalence", ok,
                 f"max|H - oracle| = {err:.3g} (tol 1e-6), argmin gap = {arg_gap:.3g} "
                 f"(cell {cell:.3g}), {secs:.1f} s (limit 30 s)")


def test_02_partition_and_continuity(params):
    start = time.perf_counter()
    rng = np.random.default_rng([SEED, 2])
    n = 1_000_000
    x = sample_triangle(rng, n)
    edge = rng.random(n)
    x[edge < 0.02, 1] = 0.0
    x[(edge >= 0.02) & (edge < 0.04), 0] = 0.0
    p, q = sample_costates(rng, n)
    preds = _region_predicates(x[:, 0], x[:, 1], p, q, params)
    not_one = int(np.sum(preds.sum(axis=0) != 1))
    codes = classify_array(x[:, 0], x[:, 1], p, q, params)
    mismatch = int(np.sum(np.argmax(preds, axis=0) != codes))

    cfg = VerifyConfig(seed=SEED, hamiltonian_samples=1, oracle_m=2, partition_samples=1,
                       concavity_samples=1, boundary_samples=100_000)
    cont = _by_name(suite_hamiltonian(params, cfg))["continuous_across_boundaries"]
    secs = time.perf_counter() - start
    ok = not_one == 0 and mismatch == 0 and cont.max_violation <= 1e-6 and secs <= 60.0
    assert _line(2, "partition and continuity", ok,
                 f"{not_one} samples not in exactly one region, {mismatch} misclassified "
                 f"of {n}; max jump across boundaries = {cont.max_violation:.3g} (tol 1e-6); "
                 f"{secs:.1f} s (limit 60 s)")


def test_03_concavity_in_costate(params):
    rng = np.random.default_rng([SEED, 3])
    n = 10_000
    x = sample_triangle(rng, n)
    p1, q1 = sample_costates(rng, n)
    p2, q2 = sample_costates(rng, n)
    lam = rng.random(n)
    s, i = x[:, 0], x[:, 1]
    mid = hamiltonian_array(s, i, lam * p1 + (1 - lam) * p2, lam * q1 + (1 - lam) * q2, params)
    chord = (lam * hamiltonian_array(s, i, p1, q1, params)
             + (1 - lam) * hamiltonian_array(s, i, p2, q2, params))
    viol = max(float(np.max(chord - mid)), 0.0)
    assert _line(3, "concavity in (p, q)", viol <= 1e-10,
                 f"max violation = {viol:.3g} over {n} combinations (tol 1e-10)")


def test_04_gronwall(params):
    res = check_gronwall(params, trials=100, seed=SEED, n_times=32)
    assert res.samples == 3200
    assert _line(4, "trajectory Gronwall estimate", res.passed,
                 f"max excess = {res.max_violation:.3g} over {res.samples} (pair, time) "
                 "checks; zero violations required")


def test_05_vaccine_identity(params):
    start = time.perf_counter()
    res = check_output_identity(params, trials=100, rel_tol=1e-4, seed=SEED)
    secs = time.perf_counter() - start
    tol = 5e-4 * params.w / params.r
    ok = res.max_violation <= tol and secs <= 120.0
    assert _line(5, "expected-output identity", ok,
                 f"max|J~ - (w/r - J)| = {res.max_violation:.3g} (tol {tol:.3g}), "
                 f"{secs:.1f} s (limit 120 s)")


def test_06_value_bounds_and_edge(params, timed_field200):
    field, secs = timed_field200
    k_f = constants(params)[2]
    upper = k_f / params.rho + 1e-9
    vmin, vmax = float(field.values.min()), float(field.values.max())
    edge = float(np.max(np.abs(field.values[field.grid.k == 0])))
    ok = vmin >= 0 and vmax <= upper and edge <= 1e-6 and secs <= 600.0
    assert _line(6, "value bounds and i = 0 edge", ok,
                 f"V in [{vmin:.3g}, {vmax:.6g}] vs [0, {upper:.6g}], max|V| on i=0 edge = "
                 f"{edge:.3g} (tol 1e-6), n=200 solve {secs:.1f} s (limit 600 s)")


@pytest.mark.parametrize("base", ["default", "active"])
def test_07_lipschitz_bound(base):
    params = ModelParams() if base == "default" else ACTIVE_PARAMS
    m_b = constants(params)[1]
    # raise nu until r + nu clears M_b by a margin
    params = dataclasses.replace(params, nu=max(params.nu, math.ceil((m_b + 0.5) * 10) / 10))
    _, m_b, _, m_f = constants(params)
    assert params.rho > m_b
    field = solve_value_function(params, n=100)
    res = _by_name(suite_value(params, VerifyConfig(seed=SEED), field))["lipschitz_bound"]
    tol = m_f / (params.rho - m_b) + 10 * field.h * m_f
    assert _line(7, f"Lipschitz bound ({base}, nu={params.nu})", res.passed,
                 f"max adjacent slope = {res.max_violation:.4g} (bound {tol:.4g})")


@pytest.mark.parametrize("which", ["default", "active"])
def test_08_dpp(which, field100, active_field):
    field = field100 if which == "default" else active_field
    params = field.params
    res = _by_name(check_dpp(field, params, trials=50, seed=SEED))
    fwd, back = res["forward_dpp"], res["backward_dpp_inequality"]
    ok = fwd.passed and back.passed
    assert _line(8, f"dynamic programming ({which}, n={field.grid.n})", ok,
                 f"forward mismatch = {fwd.max_violation:.3g} (tol {fwd.tolerance:.3g}); "
                 f"backward max excess = {back.max_violation:.3g} over {back.samples} "
                 f"starts, violations = {0 if back.passed else 'some'}")


@pytest.fixture(scope="module")
def policy_results(field100, active_field):
    cfg = VerifyConfig(seed=SEED, policy_starts=20, policy_controls=10)
    return {
        "default": _by_name(suite_policy(field100.params, cfg, field100)),
        "active": _by_name(suite_policy(active_field.params, cfg, active_field)),
    }


@pytest.mark.parametrize("which", ["default", "active"])
def test_09_closed_loop_optimality(which, policy_results):
    res = policy_results[which]
    cost, g, mono = (res["closed_loop_cost_matches_value"], res["closed_loop_g_constant"],
                     res["g_non_decreasing_any_control"])
    ok = cost.passed and g.passed and mono.passed
    assert _line(9, f"closed-loop optimality ({which})", ok,
                 f"max|cost - V| = {cost.max_violation:.3g}, g spread = {g.max_violation:.3g} "
                 f"(tol {cost.tolerance:.3g}); g drop under 10 random controls = "
                 f"{mono.max_violation:.3g} (tol {mono.tolerance:.3g})")


@pytest.mark.parametrize("which", ["default", "active"])
def test_10_policy_structure(which, policy_results):
    res = policy_results[which]
    lf, adj = res["laissez_faire_when_q_le_p"], res["adjacent_region_transitions"]
    ok = lf.passed and adj.passed
    assert _line(10, f"policy structure ({which})", ok,
                 f"max lockdown where q <= p = {lf.max_violation:.3g} over {lf.samples} "
                 f"instants ({lf.detail}); non-adjacent transitions = "
                 f"{int(adj.max_violation)}")


def test_11_self_convergence(field50, field100, field200):
    d1 = _grid_gap(field50, field100)
    d2 = _grid_gap(field100, field200)
    assert _line(11, "self-convergence", d2 <= 3 * d1,
                 f"|V200 - V100| = {d2:.3g}, |V100 - V50| = {d1:.3g}, "
                 f"ratio {d2 / d1:.3f} (limit 3)")


def test_12_determinism(tmp_path, monkeypatch, capsys):
    import os

    for name in list(os.environ):
        if name.startswith("LOCKDOWN_HJB_"):
            monkeypatch.delenv(name)
    outputs = []
    for k, workers in enumerate(("1", "1", "2")):
        out = tmp_path / f"run{k}"
        code = main(["verify", "--seed", str(SEED), "--out", str(out), "--workers", workers])
        outputs.append(((out / "verify_report.txt").read_bytes(),
                        (out / "verify_report.json").read_bytes(), code))
    capsys.readouterr()
    same = outputs[0] == outputs[1] == outputs[2]
    ok = same and outputs[0][2] == 0
    assert _line(12, "determinism", ok,
                 f"three full verify runs (seed {SEED}, workers 1/1/2) byte-identical: {same}; "
                 f"exit code {outputs[0][2]}")
