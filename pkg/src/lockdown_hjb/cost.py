"""Running cost and the two discounted cost functionals.

``evaluate_J`` is the reduced minimization objective (discount r + nu, no
random arrival). ``evaluate_J_tilde`` is the planner's original expected
output, computed with an explicit expectation over the exponential arrival
time of the vaccine; it is kept deliberately separate so that the identity
``J_tilde = w/r - J`` can be checked between two independent routes.
"""
from __future__ import annotations

import math

import numpy as np

from .dynamics import (
    ControlSignal,
    ModelParams,
    _project_forward,
    _rk4_path,
    check_control,
    check_full_state,
    check_state,
    constants,
    time_grid,
)


def _f(s, i, l, params: ModelParams):
    """Unchecked, broadcasting running cost."""
    return (s + i) * l * params.w + (params.w / params.r + params.chi) * i * params.phi(i)


def running_cost_f(x, l, params: ModelParams) -> float:
    s, i = check_state(x)
    l = check_control(l, params)
    return float(_f(s, i, l, params))


def truncation_horizon(params: ModelParams, rel_tol: float) -> float:
    """Horizon T whose tail bound K_f exp(-rho T) / rho is at most rel_tol * w / r."""
    if not rel_tol > 0:
        raise ValueError(f"rel_tol must be positive, got {rel_tol}")
    k_f = constants(params)[2]
    rho = params.rho
    ratio = k_f / (rho * rel_tol * params.w / params.r)
    return max(math.log(ratio), 0.0) / rho + 1e-12


def tail_bound(params: ModelParams, horizon: float) -> float:
    k_f = constants(params)[2]
    return k_f * math.exp(-params.rho * horizon) / params.rho


def _cost_rhs(params: ModelParams):
    beta, theta, gamma, phi = params.beta, params.theta, params.gamma, params.phi
    rho, w, death_w = params.rho, params.w, params.w / params.r + params.chi

    def rhs(t, y, l):
        s, i = y[0], y[1]
        contact = beta * s * i * (1.0 - theta * l) ** 2
        ph = phi(i)
        run = (s + i) * l * w + death_w * i * ph
        return np.array([-contact, contact - (gamma + ph) * i, math.exp(-rho * t) * run])

    return rhs


def discounted_cost_path(x0, control: ControlSignal, horizon: float, dt: float,
                         params: ModelParams):
    """Times, states and the running integral of exp(-rho t) f along a trajectory."""
    s0, i0 = check_state(x0)
    control.check(params)
    grid = time_grid(horizon, dt, control.breakpoints)
    ys, ls = _rk4_path(_cost_rhs(params), np.array([s0, i0, 0.0]), grid, control,
                       _project_forward)
    return grid, ys[:, :2], ys[:, 2], ls


def evaluate_J(x0, control: ControlSignal, params: ModelParams, rel_tol: float = 1e-6,
               dt: float = 0.05) -> tuple[float, float]:
    """Discounted cost of ``control`` from ``x0`` and the truncation horizon used."""
    horizon = truncation_horizon(params, rel_tol)
    _, _, acc, _ = discounted_cost_path(x0, control, horizon, dt, params)
    return float(acc[-1]), horizon


def _tilde_rhs(params: ModelParams):
    beta, theta, gamma, phi = params.beta, params.theta, params.gamma, params.phi
    r, w, chi = params.r, params.w, params.chi

    def rhs(t, y, l):
        s, i, rec, d = y[0], y[1], y[2], y[3]
        contact = beta * s * i * (1.0 - theta * l) ** 2
        death = i * phi(i)
        output = (s + i + rec - (s + i) * l) * w - chi * death
        return np.array([
            -contact, contact - gamma * i - death, gamma * i, death,
            math.exp(-r * t) * output,
        ])

    return rhs


def _panels(horizon: float, breakpoints, max_width: float) -> np.ndarray:
    knots = np.union1d([0.0, horizon], [b for b in breakpoints if 0 < b < horizon])
    edges = [knots[0]]
    for a, b in zip(knots[:-1], knots[1:]):
        k = max(int(math.ceil((b - a) / max_width)), 1)
        edges.extend(np.linspace(a, b, k + 1)[1:])
    return np.asarray(edges)


def evaluate_J_tilde(x0, control: ControlSignal, params: ModelParams,
                     rel_tol: float = 1e-6, dt: float = 0.05, order: int = 64,
                     panel_width: float = 2.0) -> float:
    """Expected discounted output with the vaccine arriving at an exponential time.

    For an arrival at tau the realized payoff is
    ``G(tau) = int_0^tau e^{-rt}[(N-D-(S+I)L)w - chi I phi(I)] dt + e^{-r tau}(1-D_tau) w / r``
    because S and I jump to zero and deaths freeze. The expectation of G
    under the density nu e^{-nu tau} is computed with composite Gauss-Legendre
    panels split at the control breakpoints; G is read off an RK4 path whose
    grid contains every quadrature node.
    """
    x = check_full_state(x0)
    control.check(params)
    r, nu, w = params.r, params.nu, params.w
    g_bound = (w + params.chi * params.gamma) / r
    horizon = math.log(10.0 * g_bound / (rel_tol * w / r)) / nu

    edges = _panels(horizon, control.breakpoints, panel_width)
    unit_nodes, unit_weights = np.polynomial.legendre.leggauss(order)
    a, b = edges[:-1, None], edges[1:, None]
    nodes = (0.5 * (b - a) * unit_nodes + 0.5 * (a + b)).ravel()
    weights = (0.5 * (b - a) * unit_weights).ravel()

    grid = time_grid(horizon, dt, np.concatenate([control.breakpoints, nodes]))
    y0 = np.append(x, 0.0)
    ys, _ = _rk4_path(_tilde_rhs(params), y0, grid, control, _project_forward)

    def payoff(k):
        t = grid[k]
        return ys[k, 4] + math.exp(-r * t) * (1.0 - ys[k, 3]) * w / r

    idx = np.searchsorted(grid, nodes)
    # nodes were merged into the grid, so nearest grid point is the node itself
    idx = np.where(np.abs(grid[np.minimum(idx, grid.size - 1)] - nodes) <= 1e-12, idx, idx - 1)
    g = np.array([payoff(k) for k in idx])
    body = float(np.sum(weights * nu * np.exp(-nu * nodes) * g))
    # beyond the horizon G stays within its bound; use its terminal value
    tail = math.exp(-nu * horizon) * payoff(grid.size - 1)
    return body + tail
