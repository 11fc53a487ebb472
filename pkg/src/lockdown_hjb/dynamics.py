"""Controlled SIRD dynamics on the state triangle.

The reduced state is ``(s, i)`` living in the triangle ``s, i >= 0, s + i <= 1``.
The full state appends recovered and dead fractions on the 3-simplex.
Integration is classical RK4 with the control frozen on every step; steps are
split at control breakpoints so the right-hand side is smooth within a step.
"""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .exceptions import DomainError, StepSizeError

SIMPLEX_TOL = 1e-10
_MERGE_TOL = 1e-12


@dataclass(frozen=True)
class MortalityCurve:
    """Death rate of infected agents as a function of the infected fraction.

    ``kind="constant"`` gives ``phi(i) = phi0``; ``kind="affine"`` gives the
    saturating line ``min(phi0 + slope * i, cap)``.
    """

    kind: str = "constant"
    phi0: float = 0.01
    slope: float = 0.0
    cap: float | None = None

    def __post_init__(self):
        if self.kind not in ("constant", "affine"):
            raise DomainError(f"unknown mortality curve kind {self.kind!r}")
        if not self.phi0 > 0:
            raise DomainError(f"phi0 must be positive, got {self.phi0}")
        if self.slope < 0:
            raise DomainError(f"slope must be non-negative, got {self.slope}")
        if self.cap is not None and not self.cap > 0:
            raise DomainError(f"cap must be positive, got {self.cap}")

    @property
    def lipschitz(self) -> float:
        return self.slope if self.kind == "affine" else 0.0

    @property
    def upper(self) -> float:
        """Supremum of phi over [0, 1]."""
        if self.kind == "constant":
            return self.phi0
        top = self.phi0 + self.slope
        return top if self.cap is None else min(top, self.cap)

    def __call__(self, i):
        if self.kind == "constant":
            if np.ndim(i) == 0:
                return self.phi0
            return np.full(np.shape(i), self.phi0)
        val = self.phi0 + self.slope * np.asarray(i, dtype=float)
        if self.cap is not None:
            val = np.minimum(val, self.cap)
        return val if np.ndim(val) else float(val)


@dataclass(frozen=True)
class ModelParams:
    beta: float = 0.2
    gamma: float = 1.0 / 14.0
    theta: float = 0.8
    l_bar: float = 0.7
    nu: float = 0.5
    r: float = 0.05
    w: float = 1.0
    chi: float = 5.0
    phi: MortalityCurve = field(default_factory=MortalityCurve)

    def __post_init__(self):
        for name in ("beta", "gamma", "nu", "r", "w", "chi"):
            val = getattr(self, name)
            if not (isinstance(val, (int, float)) and math.isfinite(val) and val > 0):
                raise DomainError(f"{name} must be a positive finite number, got {val!r}")
        if not 0 < self.theta < 1:
            raise DomainError(f"theta must lie in (0, 1), got {self.theta}")
        if not 0 < self.l_bar <= 1:
            raise DomainError(f"l_bar must lie in (0, 1], got {self.l_bar}")
        if self.phi.upper > self.gamma:
            raise DomainError(
                f"mortality curve exceeds gamma: sup phi = {self.phi.upper} > {self.gamma}"
            )

    @property
    def rho(self) -> float:
        """Effective discount rate r + nu."""
        return self.r + self.nu

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelParams":
        data = dict(data)
        phi = data.pop("phi", None)
        if isinstance(phi, dict):
            phi = MortalityCurve(**phi)
        return cls(**data, phi=phi or MortalityCurve())


DEFAULT_PARAMS = ModelParams()


def constants(params: ModelParams) -> tuple[float, float, float, float]:
    """Bounds (K_b, M_b, K_f, M_f) of the vector field and running cost."""
    p = params
    m_phi = p.phi.lipschitz
    k_b = 3.0 * (p.beta + p.gamma)
    m_b = 2.0 * (p.beta + p.gamma + m_phi)
    k_f = p.l_bar * p.w + (p.w / p.r + p.chi) * p.gamma
    m_f = 2.0 * (p.l_bar * p.w + (p.w / p.r + p.chi) * (p.gamma + m_phi))
    return k_b, m_b, k_f, m_f


# --- state checks ---------------------------------------------------------

def triangle_violation(s, i):
    """Largest amount by which (s, i) leaves the triangle (<= 0 inside)."""
    s = np.asarray(s, dtype=float)
    i = np.asarray(i, dtype=float)
    return np.maximum(np.maximum(-s, -i), s + i - 1.0)


def check_state(x, tol: float = SIMPLEX_TOL) -> tuple[float, float]:
    """Validate a single reduced state and clamp rounding-level excursions."""
    s, i = (float(v) for v in x)
    if not (math.isfinite(s) and math.isfinite(i)):
        raise DomainError(f"state must be finite, got {(s, i)}")
    if triangle_violation(s, i) > tol:
        raise DomainError(f"state {(s, i)} lies outside the triangle s, i >= 0, s + i <= 1")
    return _clamp2(s, i)


def check_control(l, params: ModelParams) -> float:
    l = float(l)
    if not (0.0 <= l <= params.l_bar):
        raise DomainError(f"lockdown level {l} outside [0, {params.l_bar}]")
    return l


def _clamp2(s: float, i: float) -> tuple[float, float]:
    s = max(s, 0.0)
    i = max(i, 0.0)
    if s + i > 1.0:
        s = max(1.0 - i, 0.0)
        if s + i > 1.0:
            i = 1.0
    return s, i


# --- vector field ---------------------------------------------------------

def _b(s, i, l, params: ModelParams):
    """Unchecked, broadcasting vector field; returns (ds, di)."""
    contact = params.beta * s * i * (1.0 - params.theta * l) ** 2
    ds = -contact
    di = contact - (params.gamma + params.phi(i)) * i
    return ds, di


def vector_field_b(x, l, params: ModelParams) -> tuple[float, float]:
    s, i = check_state(x)
    l = check_control(l, params)
    ds, di = _b(s, i, l, params)
    return float(ds), float(di)


# --- controls -------------------------------------------------------------

class ControlSignal:
    """Piecewise-constant lockdown path on right-open intervals.

    ``values[k]`` is applied on ``[breakpoints[k], breakpoints[k + 1])``; the last
    value extends to infinity.
    """

    def __init__(self, breakpoints: Sequence[float], values: Sequence[float]):
        bp = np.asarray(breakpoints, dtype=float).ravel()
        vals = np.asarray(values, dtype=float).ravel()
        if bp.size == 0 or bp.size != vals.size:
            raise DomainError("breakpoints and values must be non-empty and of equal length")
        if bp[0] != 0.0:
            raise DomainError("first breakpoint must be 0")
        if np.any(np.diff(bp) <= 0):
            raise DomainError("breakpoints must be strictly increasing")
        if np.any(vals < 0) or not np.all(np.isfinite(vals)):
            raise DomainError("lockdown values must be finite and non-negative")
        self.breakpoints = bp
        self.values = vals
        self.breakpoints.setflags(write=False)
        self.values.setflags(write=False)

    @classmethod
    def constant(cls, level: float) -> "ControlSignal":
        return cls([0.0], [level])

    def __call__(self, t):
        idx = np.searchsorted(self.breakpoints, t, side="right") - 1
        out = self.values[np.clip(idx, 0, None)]
        return float(out) if np.ndim(out) == 0 else out

    def __repr__(self):
        pairs = ", ".join(f"{b:g}:{v:g}" for b, v in zip(self.breakpoints, self.values))
        return f"ControlSignal({pairs})"

    def __eq__(self, other):
        return (
            isinstance(other, ControlSignal)
            and np.array_equal(self.breakpoints, other.breakpoints)
            and np.array_equal(self.values, other.values)
        )

    def check(self, params: ModelParams) -> "ControlSignal":
        if np.any(self.values > params.l_bar):
            raise DomainError(
                f"lockdown level {self.values.max()} exceeds l_bar = {params.l_bar}"
            )
        return self

    def reflect(self, duration: float) -> "ControlSignal":
        """Control ``t -> self(duration - t)`` on [0, duration]."""
        inside = self.breakpoints[self.breakpoints < duration]
        ends = np.append(inside[1:], duration)
        starts = duration - ends[::-1]
        return ControlSignal(starts, self.values[: inside.size][::-1])

    def integral_abs_diff(self, other: "ControlSignal", t: float) -> float:
        """Exact value of the integral of |self - other| over [0, t]."""
        if t <= 0:
            return 0.0
        knots = np.union1d(self.breakpoints, other.breakpoints)
        knots = np.append(knots[knots < t], t)
        left = knots[:-1]
        widths = np.diff(knots)
        return float(np.sum(np.abs(self(left) - other(left)) * widths))


# --- trajectories ---------------------------------------------------------

@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (N, 2) reduced or (N, 4) full
    control_values: np.ndarray

    @property
    def s(self):
        return self.states[:, 0]

    @property
    def i(self):
        return self.states[:, 1]

    @property
    def is_full(self) -> bool:
        return self.states.shape[1] == 4

    def at(self, t: float) -> np.ndarray:
        """State at a grid time (exact match required)."""
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-9:
            raise KeyError(f"time {t} is not a grid time of this trajectory")
        return self.states[k]

    def to_csv(self, path) -> None:
        write_trajectory_csv(self, path)


def _fmt(x) -> str:
    return format(float(x), ".12g")


def write_trajectory_csv(traj: Trajectory, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "s", "i", "r", "d", "l"])
        for t, x, l in zip(traj.times, traj.states, traj.control_values):
            if traj.is_full:
                row = [_fmt(t), _fmt(x[0]), _fmt(x[1]), _fmt(x[2]), _fmt(x[3]), _fmt(l)]
            else:
                row = [_fmt(t), _fmt(x[0]), _fmt(x[1]), "", "", _fmt(l)]
            writer.writerow(row)


def time_grid(horizon: float, dt: float, extra: Iterable[float] = ()) -> np.ndarray:
    """Uniform grid on [0, horizon] merged with extra instants (breakpoints, outputs)."""
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt}")
    if not horizon > 0:
        raise DomainError(f"horizon must be positive, got {horizon}")
    n = int(math.ceil(horizon / dt - 1e-9))
    pts = np.linspace(0.0, horizon, n + 1)
    extra = np.asarray(list(extra), dtype=float)
    extra = extra[(extra > 0) & (extra < horizon)]
    pts = np.union1d(pts, extra)
    keep = np.concatenate(([True], np.diff(pts) > _MERGE_TOL))
    pts = pts[keep]
    pts[-1] = horizon
    return pts


def _rk4_path(rhs: Callable, y0: np.ndarray, grid: np.ndarray, control: ControlSignal,
              project: Callable | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Integrate ``y' = rhs(t, y, l)`` along ``grid`` with l frozen per step."""
    ys = np.empty((grid.size, y0.size))
    ls = control(grid)
    y = np.array(y0, dtype=float)
    ys[0] = y
    for k in range(grid.size - 1):
        t, h, l = grid[k], grid[k + 1] - grid[k], ls[k]
        k1 = rhs(t, y, l)
        k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1, l)
        k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2, l)
        k4 = rhs(t + h, y + h * k3, l)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if project is not None:
            y = project(y, grid[k + 1])
        ys[k + 1] = y
    return ys, ls


def _project_forward(y: np.ndarray, t: float) -> np.ndarray:
    s, i = y[0], y[1]
    viol = max(-s, -i, s + i - 1.0)
    if viol > SIMPLEX_TOL:
        raise StepSizeError(
            f"state ({s:.6g}, {i:.6g}) left the triangle by {viol:.3g} at t={t:.6g}; reduce dt"
        )
    if viol > 0:
        y = y.copy()
        y[0], y[1] = _clamp2(s, i)
    return y


def reduced_rhs(params: ModelParams):
    beta, theta, gamma, phi = params.beta, params.theta, params.gamma, params.phi

    def rhs(t, y, l):
        s, i = y[0], y[1]
        contact = beta * s * i * (1.0 - theta * l) ** 2
        return np.array([-contact, contact - (gamma + phi(i)) * i])

    return rhs


def _full_rhs(params: ModelParams):
    beta, theta, gamma, phi = params.beta, params.theta, params.gamma, params.phi

    def rhs(t, y, l):
        s, i = y[0], y[1]
        contact = beta * s * i * (1.0 - theta * l) ** 2
        death = i * phi(i)
        return np.array([-contact, contact - gamma * i - death, gamma * i, death])

    return rhs


def integrate_forward(x0, control: ControlSignal, horizon: float, dt: float,
                      params: ModelParams, t_eval: Iterable[float] = ()) -> Trajectory:
    """RK4 trajectory of the reduced system; grid includes breakpoints and ``t_eval``."""
    s0, i0 = check_state(x0)
    control.check(params)
    grid = time_grid(horizon, dt, list(control.breakpoints) + list(t_eval))
    ys, ls = _rk4_path(reduced_rhs(params), np.array([s0, i0]), grid, control,
                       _project_forward)
    return Trajectory(grid, ys, ls)


def check_full_state(x0, tol: float = 1e-12) -> np.ndarray:
    x = np.asarray(x0, dtype=float).ravel()
    if x.size != 4 or not np.all(np.isfinite(x)):
        raise DomainError(f"full state needs four finite fractions, got {x0!r}")
    if np.any(x < 0) or abs(x.sum() - 1.0) > tol:
        raise DomainError(f"full state {tuple(x)} is not on the simplex s+i+r+d=1")
    return x


def integrate_full(x0, control: ControlSignal, horizon: float, dt: float,
                   params: ModelParams, t_eval: Iterable[float] = ()) -> Trajectory:
    """RK4 trajectory of the four-compartment system."""
    x = check_full_state(x0)
    control.check(params)
    grid = time_grid(horizon, dt, list(control.breakpoints) + list(t_eval))
    ys, ls = _rk4_path(_full_rhs(params), x, grid, control, _project_forward)
    return Trajectory(grid, ys, ls)


def integrate_backward(y0, control: ControlSignal, duration: float, dt: float,
                       params: ModelParams) -> tuple[Trajectory, bool]:
    """Trajectory ``u -> Y_{-u}`` for u in [0, duration] under ``u -> control(u)``.

    ``control(u)`` is the lockdown applied at time ``-u``. Integration stops at
    the first step whose state leaves the triangle; the returned trajectory
    then ends at the last admissible state and ``admissible`` is False.
    """
    s0, i0 = check_state(y0)
    control.check(params)
    grid = time_grid(duration, dt, control.breakpoints)
    fwd = reduced_rhs(params)
    ys = np.empty((grid.size, 2))
    ls = control(grid)
    ys[0] = (s0, i0)
    y = ys[0].copy()
    for k in range(grid.size - 1):
        h, l = grid[k + 1] - grid[k], ls[k]
        k1 = -fwd(0.0, y, l)
        k2 = -fwd(0.0, y + 0.5 * h * k1, l)
        k3 = -fwd(0.0, y + 0.5 * h * k2, l)
        k4 = -fwd(0.0, y + h * k3, l)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        # exact test: backward flow strictly increases s + i whenever i > 0
        if y[0] < 0 or y[1] < 0 or y[0] + y[1] > 1.0:
            return Trajectory(grid[: k + 1], ys[: k + 1], ls[: k + 1]), False
        ys[k + 1] = y
    return Trajectory(grid, ys, ls), True
