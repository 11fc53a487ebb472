import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from lockdown_hjb import (
    ControlSignal,
    DomainError,
    ModelParams,
    MortalityCurve,
    constants,
    evaluate_J,
    evaluate_J_tilde,
    integrate_forward,
    running_cost_f,
    truncation_horizon,
)
from lockdown_hjb.cost import tail_bound


def test_running_cost_examples():
    p = ModelParams(w=1.0, r=0.05, chi=5.0, phi=MortalityCurve("constant", 0.01))
    assert running_cost_f((0.0, 0.0), 0.5, p) == 0.0
    assert running_cost_f((0.3, 0.2), 0.0, p) == pytest.approx(25 * 0.2 * 0.01)
    assert running_cost_f((0.5, 0.2), 0.5, p) == pytest.approx(0.40)


def test_running_cost_domain():
    with pytest.raises(DomainError):
        running_cost_f((0.9, 0.2), 0.1, ModelParams())
    with pytest.raises(DomainError):
        running_cost_f((0.5, 0.2), 0.71, ModelParams())


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 0.7))
def test_running_cost_bounded(s, i, l):
    p = ModelParams()
    i = i * (1 - s)
    f = running_cost_f((s, i), l, p)
    assert 0.0 <= f <= constants(p)[2]


def test_truncation_horizon_certifies_tail():
    p = ModelParams()
    t = truncation_horizon(p, 1e-6)
    assert tail_bound(p, t) <= 1e-6 * p.w / p.r * (1 + 1e-9)


def test_J_zero_infected_no_lockdown():
    cost, _ = evaluate_J((0.7, 0.0), ControlSignal.constant(0.0), ModelParams())
    assert cost == 0.0


@pytest.mark.parametrize("s,l", [(0.5, 0.3), (1.0, 0.7), (0.2, 0.1)])
def test_J_constant_trajectory_closed_form(s, l):
    p = ModelParams()
    cost, _ = evaluate_J((s, 0.0), ControlSignal.constant(l), p, rel_tol=1e-8)
    assert cost == pytest.approx(s * l * p.w / p.rho, rel=1e-7)


@settings(max_examples=25, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 0.7), st.floats(0, 0.7))
def test_J_within_bounds(s, i, l1, l2):
    p = ModelParams()
    i = i * (1 - s)
    cost, _ = evaluate_J((s, i), ControlSignal([0.0, 5.0], [l1, l2]), p, rel_tol=1e-4, dt=0.1)
    assert 0.0 <= cost <= constants(p)[2] / p.rho


def test_J_matches_independent_quadrature():
    p = ModelParams(beta=0.4)
    ctrl = ControlSignal([0.0, 10.0], [0.5, 0.1])
    x0 = (0.8, 0.05)
    cost, horizon = evaluate_J(x0, ctrl, p, rel_tol=1e-8, dt=0.02)
    traj = integrate_forward(x0, ctrl, horizon, 0.001, p)
    f = (traj.s + traj.i) * traj.control_values * p.w + (p.w / p.r + p.chi) * traj.i * p.phi(
        traj.i)
    ref = np.trapezoid(np.exp(-p.rho * traj.times) * f, traj.times)
    assert cost == pytest.approx(ref, abs=1e-6)


def test_J_non_decreasing_in_chi():
    ctrl = ControlSignal([0.0, 3.0], [0.4, 0.0])
    costs = [evaluate_J((0.6, 0.3), ctrl, ModelParams(chi=c), rel_tol=1e-5)[0]
             for c in (0.5, 5.0, 50.0)]
    assert costs == sorted(costs)


def test_J_tilde_no_infection_is_full_output():
    p = ModelParams()
    val = evaluate_J_tilde((0.6, 0.0, 0.4, 0.0), ControlSignal.constant(0.0), p, rel_tol=1e-8)
    assert val == pytest.approx(p.w / p.r, rel=1e-9)


def test_J_tilde_identity_single_case():
    p = ModelParams()
    ctrl = ControlSignal([0.0, 4.0, 9.0], [0.6, 0.2, 0.0])
    x0 = (0.7, 0.2, 0.1, 0.0)
    j, _ = evaluate_J(x0[:2], ctrl, p, rel_tol=1e-6)
    jt = evaluate_J_tilde(x0, ctrl, p, rel_tol=1e-6)
    assert abs(jt - (p.w / p.r - j)) <= 5e-6 * p.w / p.r


def test_J_tilde_identity_with_prior_deaths():
    # with an initial dead fraction d0 the identity reads (w/r)(1 - d0) - J
    p = ModelParams()
    ctrl = ControlSignal([0.0, 4.0], [0.5, 0.1])
    x0 = (0.5, 0.2, 0.1, 0.2)
    j, _ = evaluate_J(x0[:2], ctrl, p, rel_tol=1e-6)
    jt = evaluate_J_tilde(x0, ctrl, p, rel_tol=1e-6)
    assert abs(jt - (p.w / p.r * (1 - x0[3]) - j)) <= 5e-6 * p.w / p.r
    assert abs(jt - (p.w / p.r - j)) > 0.1 * p.w / p.r * x0[3]


def test_J_tilde_small_chi_specialization():
    # chi -> 0 with no lockdown: w/r - (w/r) int e^{-rho t} I phi(I) dt
    p = ModelParams(chi=1e-12, beta=0.3)
    ctrl = ControlSignal.constant(0.0)
    x0 = (0.8, 0.2, 0.0, 0.0)
    jt = evaluate_J_tilde(x0, ctrl, p, rel_tol=1e-7)
    traj = integrate_forward(x0[:2], ctrl, 60.0, 0.001, p)
    grid = traj.times
    death = traj.i * p.phi(traj.i)
    ref = p.w / p.r - p.w / p.r * np.trapezoid(np.exp(-p.rho * grid) * death, grid)
    assert jt == pytest.approx(ref, abs=1e-5)


def test_J_tilde_exponential_expectation_quadrature():
    # i0 = 0 with constant lockdown: closed form of the expectation
    p = ModelParams()
    l, s0 = 0.4, 0.5
    x0 = (s0, 0.0, 1.0 - s0, 0.0)
    val = evaluate_J_tilde(x0, ControlSignal.constant(l), p, rel_tol=1e-8)
    # output rate (1 - s0 l) w until tau, then w/r
    def payoff(tau):
        body = (1 - s0 * l) * p.w * (1 - math.exp(-p.r * tau)) / p.r
        return body + math.exp(-p.r * tau) * p.w / p.r

    ref, _ = quad(lambda t: p.nu * math.exp(-p.nu * t) * payoff(t), 0, np.inf)
    assert val == pytest.approx(ref, rel=1e-9)
