"""Feedback lockdown synthesized from a solved value field.

The costate is the finite-difference gradient of the interpolated field; the
lockdown is the minimizer of the current-value Hamiltonian at that costate.
Closed-loop runs are sampled-data: the feedback is evaluated at the start of
each step and held while RK4 advances the state.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .cost import _f, discounted_cost_path, tail_bound
from .dynamics import (
    SIMPLEX_TOL,
    ControlSignal,
    ModelParams,
    Trajectory,
    check_state,
    constants,
    triangle_violation,
)
from .exceptions import StepSizeError, UndefinedThresholdError
from .hamiltonian import Region, classify_array, pressure, psi_array
from .hjb_solver import ValueField, _clamp_array, fd_costate_array, interpolate


def feedback_array(field: ValueField, points, params: ModelParams | None = None):
    """Vectorized feedback: (levels, region codes, p, q) at each point."""
    params = field.params if params is None else params
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    p, q = fd_costate_array(field, pts)
    s, i = pts[:, 0], pts[:, 1]
    levels, _ = psi_array(s, i, p, q, params)
    regions = classify_array(s, i, p, q, params)
    return levels, regions, p, q


def feedback_law(field: ValueField, x, params: ModelParams | None = None) -> tuple[float, Region]:
    s, i = check_state(x)
    levels, regions, _, _ = feedback_array(field, [(s, i)], params)
    return float(levels[0]), Region(int(regions[0]))


def thresholds_array(s, i, p, q, params: ModelParams):
    """(K1, K2, pressure); thresholds are NaN where q == p."""
    gap = np.asarray(q, dtype=float) - np.asarray(p, dtype=float)
    safe = np.where(gap == 0, np.nan, gap)
    k1 = params.w / (2.0 * params.theta * safe)
    k2 = k1 / (1.0 - params.theta * params.l_bar)
    return k1, k2, pressure(s, i, params)


def thresholds_k(x, c, params: ModelParams) -> tuple[float, float, float]:
    """Lockdown thresholds on the infection pressure beta s i / (s + i)."""
    s, i = check_state(x)
    p, q = c
    if q == p:
        raise UndefinedThresholdError("thresholds are undefined when q == p")
    k1, k2, pr = thresholds_array(s, i, p, q, params)
    return float(k1), float(k2), float(pr)


@dataclass
class PolicyReport:
    trajectory: Trajectory
    applied_l: np.ndarray
    region_tags: np.ndarray  # Region codes
    costate: np.ndarray  # (N, 2)
    thresholds: np.ndarray  # (N, 3): K1, K2, pressure
    running_cost: np.ndarray
    g: np.ndarray
    cost: float
    tail_bound: float
    deaths: float

    @property
    def times(self):
        return self.trajectory.times

    @property
    def peak_i(self) -> float:
        return float(self.trajectory.i.max())

    @property
    def tags(self) -> list[str]:
        return [Region(int(c)).name for c in self.region_tags]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["t", "s", "i", "l", "region", "K1", "K2", "pressure", "running_cost"])
            traj = self.trajectory
            for k in range(traj.times.size):
                k1, k2, pr = self.thresholds[k]
                writer.writerow([
                    _fmt(traj.times[k]), _fmt(traj.s[k]), _fmt(traj.i[k]),
                    _fmt(self.applied_l[k]), Region(int(self.region_tags[k])).name,
                    _fmt(k1), _fmt(k2), _fmt(pr), _fmt(self.running_cost[k]),
                ])


def _fmt(x) -> str:
    x = float(x)
    return "" if math.isnan(x) else format(x, ".12g")


def default_horizon(params: ModelParams, tail: float = 1e-4) -> float:
    """Horizon at which the certified cost tail drops below ``tail``."""
    k_f = constants(params)[2]
    return max(math.log(k_f / (params.rho * tail)), 1.0) / params.rho


def simulate_closed_loop(field: ValueField, x0, horizon: float | None = None,
                         dt: float | None = None, params: ModelParams | None = None) -> PolicyReport:
    """Sampled-data run of the synthesized feedback from ``x0``.

    ``cost`` integrates the discounted running cost up to ``horizon``;
    ``tail_bound`` bounds whatever accrues afterwards.
    """
    return simulate_closed_loop_batch(field, [x0], horizon, dt, params)[0]


def simulate_closed_loop_batch(field: ValueField, starts, horizon: float | None = None,
                               dt: float | None = None,
                               params: ModelParams | None = None) -> list[PolicyReport]:
    """Closed-loop runs from several starts advanced together in one array."""
    params = field.params if params is None else params
    horizon = default_horizon(params) if horizon is None else float(horizon)
    dt = field.dt if dt is None else float(dt)
    steps = max(int(math.ceil(horizon / dt - 1e-9)), 1)
    times = np.linspace(0.0, horizon, steps + 1)
    rho = params.rho
    beta, theta, gamma, phi = params.beta, params.theta, params.gamma, params.phi

    def rhs(t, y, l):
        s, i = y[:, 0], y[:, 1]
        contact = beta * s * i * (1.0 - theta * l) ** 2
        ph = phi(i)
        run = _f(s, i, l, params)
        return np.column_stack(
            [-contact, contact - (gamma + ph) * i, math.exp(-rho * t) * run, i * ph]
        )

    x0 = np.array([check_state(x) for x in starts], dtype=float).reshape(-1, 2)
    batch = x0.shape[0]
    states = np.empty((steps + 1, batch, 2))
    applied = np.empty((steps + 1, batch))
    regions = np.empty((steps + 1, batch), dtype=np.int8)
    costates = np.empty((steps + 1, batch, 2))
    acc = np.empty((steps + 1, batch))
    y = np.column_stack([x0, np.zeros((batch, 2))])
    for k in range(steps + 1):
        states[k] = y[:, :2]
        acc[k] = y[:, 2]
        lv, rg, p, q = feedback_array(field, y[:, :2], params)
        applied[k], regions[k] = lv, rg
        costates[k, :, 0], costates[k, :, 1] = p, q
        if k == steps:
            break
        t, h, l = times[k], times[k + 1] - times[k], lv
        k1 = rhs(t, y, l)
        k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1, l)
        k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2, l)
        k4 = rhs(t + h, y + h * k3, l)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        viol = triangle_violation(y[:, 0], y[:, 1])
        if np.any(viol > SIMPLEX_TOL):
            raise StepSizeError(f"closed-loop state left the triangle by {viol.max():.3g}")
        if np.any(viol > 0):
            y[:, :2] = _clamp_array(y[:, :2])
    tail = tail_bound(params, horizon)
    reports = []
    for b in range(batch):
        st = states[:, b]
        s, i = st[:, 0], st[:, 1]
        k1, k2, pr = thresholds_array(s, i, costates[:, b, 0], costates[:, b, 1], params)
        reports.append(PolicyReport(
            trajectory=Trajectory(times, st, applied[:, b]),
            applied_l=applied[:, b],
            region_tags=regions[:, b],
            costate=costates[:, b],
            thresholds=np.column_stack([k1, k2, pr]),
            running_cost=_f(s, i, applied[:, b], params),
            g=acc[:, b] + np.exp(-rho * times) * interpolate(field, st),
            cost=float(acc[-1, b]),
            tail_bound=tail,
            deaths=float(y[b, 3]),
        ))
    return reports


def running_value_process(field: ValueField, x0, control: ControlSignal, horizon: float,
                          dt: float | None = None, params: ModelParams | None = None):
    """``t -> int_0^t e^{-rho u} f du + e^{-rho t} V(X_t)`` along an open-loop control.

    Non-decreasing for every admissible control and constant along optimal
    ones; returns ``(times, g)``.
    """
    params = field.params if params is None else params
    dt = field.dt if dt is None else dt
    times, states, acc, _ = discounted_cost_path(x0, control, horizon, dt, params)
    return times, acc + np.exp(-params.rho * times) * interpolate(field, states)


# position of each region along the pressure ordering (K1 < K2 when q > p)
_PRESSURE_RANK = {Region.A_2: 0, Region.A_3: 1, Region.A_4: 2}


def non_adjacent_transitions(regions) -> int:
    """Count consecutive steps that jump straight between A_2 and A_4."""
    codes = [Region(int(c)) for c in regions]
    bad = 0
    for a, b in zip(codes[:-1], codes[1:]):
        if a in _PRESSURE_RANK and b in _PRESSURE_RANK:
            if abs(_PRESSURE_RANK[a] - _PRESSURE_RANK[b]) > 1:
                bad += 1
    return bad
