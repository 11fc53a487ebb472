import json

import numpy as np
import pytest

from lockdown_hjb import (
    ConfigError,
    ModelParams,
    VerificationError,
    VerifyConfig,
    check_dpp,
    check_gronwall,
    check_output_identity,
    hamiltonian_H,
    oracle_hamiltonian,
    run_all,
)
from lockdown_hjb import hamiltonian as ham
from lockdown_hjb.verify import SUITES, oracle_hamiltonian_array, sample_costates, sample_triangle

SMALL = VerifyConfig(
    n=20, vector_samples=2000, hamiltonian_samples=2000, oracle_m=2000,
    partition_samples=20000, concavity_samples=2000, boundary_samples=2000,
    trajectory_trials=5, gronwall_trials=5, identity_trials=5, dpp_trials=10,
    policy_starts=3, policy_controls=2, convergence_levels=(10, 20, 40),
)


def test_oracle_trivial_at_zero_infected(params):
    val, arg = oracle_hamiltonian((0.4, 0.0), (3.0, -2.0), params, m=101)
    assert val == 0.0 and arg == 0.0


def test_oracle_within_quadratic_grid_error(params):
    rng = np.random.default_rng(0)
    x = sample_triangle(rng, 3000)
    p, q = sample_costates(rng, 3000)
    m = 200
    vals, args = oracle_hamiltonian_array(x[:, 0], x[:, 1], p, q, params, m)
    closed = ham.hamiltonian_array(x[:, 0], x[:, 1], p, q, params)
    bound = (params.beta * params.theta**2 * x[:, 0] * x[:, 1] * np.abs(q - p)
             * (params.l_bar / (m - 1)) ** 2 / 4)
    scale = 1 + np.abs(p) + np.abs(q)
    assert np.all(vals - closed <= bound + 1e-12 * scale)
    assert np.all(vals >= closed - 1e-12 * scale)
    levels, _ = ham.psi_array(x[:, 0], x[:, 1], p, q, params)
    assert np.all(np.abs(levels - args) <= params.l_bar / (m - 1) + 1e-12)


def test_gronwall_identical_inputs_zero(params):
    res = check_gronwall(params, trials=3, seed=1)
    assert res.passed and res.max_violation == 0.0


def test_output_identity_check_passes(params):
    res = check_output_identity(params, trials=4, rel_tol=1e-4, seed=2)
    assert res.passed
    assert res.tolerance == pytest.approx(5e-4 * params.w / params.r)


def test_dpp_check(field50, params):
    out = check_dpp(field50, params, trials=10, seed=0)
    names = [r.name for r in out]
    assert names == ["forward_dpp", "backward_dpp_inequality", "one_step_dpp"]
    assert all(r.passed for r in out)
    assert "skipped" in out[1].detail


def test_run_all_small_passes(params):
    report = run_all(params, SMALL)
    assert report.passed, report.to_text()
    suites = {r.suite for r in report.results}
    assert suites == set(SUITES)


def test_run_all_subset(params):
    report = run_all(params, SMALL, suites=["hamiltonian"])
    assert {r.suite for r in report.results} == {"hamiltonian"}


def test_unknown_suite(params):
    with pytest.raises(ConfigError):
        run_all(params, SMALL, suites=["nope"])


@pytest.mark.parametrize("key", ["gronwall_trials", "identity_trials", "dpp_trials",
                                 "hamiltonian_samples", "policy_starts"])
def test_zero_size_config_rejected(key):
    with pytest.raises(ConfigError):
        SMALL.replace(**{key: 0})


def test_bad_convergence_levels():
    with pytest.raises(ConfigError):
        VerifyConfig(convergence_levels=(10, 30, 60))


def test_report_deterministic(params, field50):
    a = run_all(params, SMALL.replace(seed=7), suites=["hamiltonian", "dpp"], field=field50)
    b = run_all(params, SMALL.replace(seed=7), suites=["hamiltonian", "dpp"], field=field50)
    assert a.to_text() == b.to_text() and a.to_json() == b.to_json()
    c = run_all(params, SMALL.replace(seed=8), suites=["hamiltonian"], field=field50)
    assert "seed=8" in c.to_text()


def test_parallel_suites_same_report(params, field50):
    a = run_all(params, SMALL, suites=["dynamics", "hamiltonian", "value"], field=field50)
    b = run_all(params, SMALL.replace(workers=3), suites=["dynamics", "hamiltonian", "value"],
                field=field50)
    assert a.to_json() == b.to_json()


def test_report_json_schema(params, field50):
    rep = run_all(params, SMALL, suites=["value"], field=field50)
    doc = json.loads(rep.to_json())
    assert doc["passed"] is True and doc["seed"] == 0
    row = doc["checks"][0]
    for key in ("suite", "name", "samples", "max_violation", "tolerance", "passed", "seed"):
        assert key in row


def test_mutation_scaled_field_fails_value_and_dpp(params, field50):
    bad = field50.with_values(field50.values * 1.1)
    rep = run_all(params, SMALL, suites=["value", "dpp"], field=bad)
    assert not rep.suite_passed("value")
    assert not rep.suite_passed("dpp")
    with pytest.raises(VerificationError):
        rep.raise_for_failure()
    good = run_all(params, SMALL, suites=["value", "dpp"], field=field50)
    assert good.passed


def test_mutation_branch_sign_flip_fails_oracle(params, monkeypatch):
    orig = ham._h_interior_vertex
    monkeypatch.setattr(ham, "_h_interior_vertex", lambda *a: -orig(*a))
    # the oracle does not route through the branch code
    x, c = (0.5, 0.5), (0.0, 20.0)
    assert ham.classify(x, c, params) is ham.Region.A_3
    val, _ = oracle_hamiltonian(x, c, params)
    assert abs(hamiltonian_H(x, c, params) - val) > 1e-3
    rep = run_all(params, SMALL, suites=["hamiltonian"])
    failed = {r.name for r in rep.failed}
    assert "oracle_equivalence" in failed


def test_lipschitz_check_skipped_when_not_applicable(field50):
    slow = ModelParams(nu=0.1)
    from lockdown_hjb import solve_value_function

    field = solve_value_function(slow, n=12, tol=1e-4)
    rep = run_all(slow, SMALL.replace(tol=1e-4), suites=["value"], field=field)
    lip = [r for r in rep.results if r.name == "lipschitz_bound"][0]
    assert lip.passed and "not applicable" in lip.detail
