"""Independent oracles and executable property suites.

Each suite draws from its own seeded generator and returns a list of
``CheckResult`` records. A check passes when its measured violation does not
exceed its tolerance. Reports contain no timings so a fixed seed reproduces
them byte for byte.
"""
from __future__ import annotations

import dataclasses
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .cost import _f, evaluate_J, evaluate_J_tilde
from .dynamics import (
    ControlSignal,
    ModelParams,
    _b,
    constants,
    integrate_backward,
    integrate_forward,
    triangle_violation,
)
from .exceptions import ConfigError, LockdownHJBError
from .hamiltonian import (
    Region,
    _h_cv,
    classify_array,
    hamiltonian_array,
    pressure,
    psi_array,
)
from .hjb_solver import (
    BellmanOperator,
    ValueField,
    control_grid,
    hjb_residual,
    interpolate,
    solve_value_function,
)
from .policy import (
    default_horizon,
    non_adjacent_transitions,
    running_value_process,
    simulate_closed_loop_batch,
)

SUITES = ("dynamics", "gronwall", "cost", "hamiltonian", "value", "dpp", "policy",
          "convergence")
# suites that need a solved value field
FIELD_SUITES = ("value", "dpp", "policy")


class VerificationError(LockdownHJBError):
    """Raised by ``SuiteReport.raise_for_failure`` when any check fails."""


@dataclass(frozen=True)
class CheckResult:
    suite: str
    name: str
    samples: int
    max_violation: float
    tolerance: float
    passed: bool
    seed: int
    detail: str = ""

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        text = (f"[{flag}] {self.suite}.{self.name} samples={self.samples} "
                f"max_violation={_g(self.max_violation)} tolerance={_g(self.tolerance)} "
                f"seed={self.seed}")
        return f"{text} ({self.detail})" if self.detail else text


def _g(x: float) -> str:
    return format(float(x), ".12g")


def _check(suite, name, samples, violation, tolerance, seed, detail="") -> CheckResult:
    violation = float(violation) + 0.0  # normalise -0.0
    passed = bool(np.isfinite(violation) and violation <= tolerance)
    return CheckResult(suite, name, int(samples), violation, float(tolerance), passed,
                       int(seed), detail)


@dataclass
class SuiteReport:
    seed: int
    results: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def suite_passed(self, suite: str) -> bool:
        return all(r.passed for r in self.results if r.suite == suite)

    @property
    def failed(self) -> list:
        return [r for r in self.results if not r.passed]

    def to_text(self) -> str:
        lines = [f"verification report seed={self.seed}"]
        lines += [r.line() for r in self.results]
        n_fail = len(self.failed)
        lines.append(f"summary: {len(self.results) - n_fail}/{len(self.results)} checks passed"
                     + ("" if n_fail == 0 else f", {n_fail} failed"))
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        rows = []
        for r in self.results:
            row = asdict(r)
            row["max_violation"] = float(_g(r.max_violation))
            row["tolerance"] = float(_g(r.tolerance))
            rows.append(row)
        doc = {"seed": self.seed, "passed": self.passed, "checks": rows}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def raise_for_failure(self) -> None:
        if not self.passed:
            names = ", ".join(f"{r.suite}.{r.name}" for r in self.failed)
            raise VerificationError(f"failed checks: {names}")


@dataclass(frozen=True)
class VerifyConfig:
    """Sample sizes and solver settings for ``run_all``."""

    seed: int = 0
    n: int = 50
    m: int = 21
    tol: float = 1e-6
    vector_samples: int = 100_000
    hamiltonian_samples: int = 100_000
    oracle_m: int = 10_000
    partition_samples: int = 1_000_000
    concavity_samples: int = 10_000
    boundary_samples: int = 10_000
    trajectory_trials: int = 50
    gronwall_trials: int = 100
    gronwall_times: int = 32
    identity_trials: int = 100
    identity_rel_tol: float = 1e-4
    dpp_trials: int = 50
    policy_starts: int = 20
    policy_controls: int = 10
    convergence_levels: tuple = (25, 50, 100)
    workers: int = 1

    def __post_init__(self):
        for f in fields(self):
            val = getattr(self, f.name)
            if f.name in ("seed",):
                if int(val) < 0:
                    raise ConfigError(f"seed must be non-negative, got {val}")
            elif f.name in ("tol", "identity_rel_tol"):
                if not val > 0:
                    raise ConfigError(f"{f.name} must be positive, got {val}")
            elif f.name == "convergence_levels":
                levels = tuple(int(v) for v in val)
                if len(levels) != 3 or any(b != 2 * a for a, b in zip(levels, levels[1:])):
                    raise ConfigError(
                        f"convergence_levels must be three successive doublings, got {val}")
                if levels[0] < 2:
                    raise ConfigError("convergence_levels must start at n >= 2")
                object.__setattr__(self, f.name, levels)
            elif f.name in ("n", "m", "oracle_m"):
                if int(val) < 2:
                    raise ConfigError(f"{f.name} must be at least 2, got {val}")
            elif int(val) < 1:
                raise ConfigError(f"{f.name} must be at least 1, got {val}")

    def replace(self, **changes) -> "VerifyConfig":
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data.update(changes)
        return VerifyConfig(**data)


# --- sampling ------------------------------------------------------------------

def _suite_rng(seed: int, suite: str) -> np.random.Generator:
    return np.random.default_rng([seed, SUITES.index(suite) if suite in SUITES else 99])


def sample_triangle(rng: np.random.Generator, size: int) -> np.ndarray:
    """Uniform points of the triangle s, i >= 0, s + i <= 1."""
    u = rng.random((size, 2))
    flip = u.sum(axis=1) > 1.0
    u[flip] = 1.0 - u[flip]
    return u


def sample_interior(rng: np.random.Generator, size: int, margin: float = 0.02) -> np.ndarray:
    """Uniform points at distance ``margin`` from every edge (in barycentric terms)."""
    bary = rng.dirichlet(np.ones(3), size)
    return margin + (1.0 - 3.0 * margin) * bary[:, :2]


def sample_costates(rng: np.random.Generator, size: int) -> tuple[np.ndarray, np.ndarray]:
    """Costates spread over many scales so every region gets populated."""
    p = rng.choice([-1.0, 1.0], size) * 10.0 ** rng.uniform(-2, 2, size)
    gap = 10.0 ** rng.uniform(-2, 3, size)
    sign = np.where(rng.random(size) < 0.25, -1.0, 1.0)
    q = p + sign * gap
    ties = rng.random(size) < 0.01
    q[ties] = p[ties]
    return p, q


def random_control(rng: np.random.Generator, params: ModelParams, horizon: float,
                   pieces: int = 4) -> ControlSignal:
    cuts = np.sort(rng.uniform(0.0, horizon, pieces - 1))
    cuts = cuts[np.diff(np.concatenate([[0.0], cuts])) > 1e-9]
    return ControlSignal(np.concatenate([[0.0], cuts]),
                         rng.uniform(0.0, params.l_bar, cuts.size + 1))


# --- oracles -------------------------------------------------------------------

def oracle_hamiltonian_array(s, i, p, q, params: ModelParams, m: int = 10_000,
                             chunk: int = 512):
    """Brute-force minimum of the current-value Hamiltonian over a uniform m-grid.

    Only the control-dependent part is scanned (the remainder is added back),
    which keeps rounding far below the grid error. Returns ``(values, argmins)``.
    """
    if m < 2:
        raise ConfigError(f"oracle grid needs m >= 2, got {m}")
    s, i, p, q = np.broadcast_arrays(*(np.atleast_1d(np.asarray(v, dtype=float))
                                       for v in (s, i, p, q)))
    grid = np.linspace(0.0, params.l_bar, m)
    damp = (1.0 - params.theta * grid) ** 2
    lin = (s + i) * params.w
    quad = params.beta * s * i * (q - p)
    rest = _h_cv(s, i, p, q, 0.0, params) - quad
    vals = np.empty(s.shape)
    args = np.empty(s.shape)
    for a in range(0, s.size, chunk):
        b = min(a + chunk, s.size)
        table = np.outer(lin[a:b], grid) + np.outer(quad[a:b], damp)
        k = np.argmin(table, axis=1)
        vals[a:b] = table[np.arange(b - a), k] + rest[a:b]
        args[a:b] = grid[k]
    return vals, args


def oracle_hamiltonian(x, c, params: ModelParams, m: int = 10_000) -> tuple[float, float]:
    """Grid minimum of the current-value Hamiltonian and its argmin."""
    vals, args = oracle_hamiltonian_array(x[0], x[1], c[0], c[1], params, m)
    return float(vals[0]), float(args[0])


def _region_predicates(s, i, p, q, params: ModelParams) -> np.ndarray:
    """The seven region definitions evaluated separately, shape (7, N)."""
    gap = q - p
    with np.errstate(divide="ignore", invalid="ignore"):
        pr = params.beta * s * i / (s + i)
        k1 = params.w / (2.0 * params.theta * gap)
        k2 = params.w / (2.0 * params.theta * (1.0 - params.theta * params.l_bar) * gap)
    inner = (s != 0) & (i != 0)
    return np.stack([
        i == 0,
        (s == 0) & (i != 0),
        inner & (p == q),
        inner & (q < p),
        inner & (q > p) & (pr <= k1),
        inner & (q > p) & (pr > k1) & (pr < k2),
        inner & (q > p) & (pr >= k2),
    ])


def _batch_cost(x0: np.ndarray, levels: np.ndarray, horizon: float, dt: float,
                params: ModelParams):
    """RK4 of many (state, constant control) pairs with the discounted cost."""
    steps = max(int(math.ceil(horizon / dt - 1e-9)), 1)
    h = horizon / steps
    rho = params.rho

    def rhs(t, y):
        ds, di = _b(y[:, 0], y[:, 1], levels, params)
        run = math.exp(-rho * t) * _f(y[:, 0], y[:, 1], levels, params)
        return np.column_stack([ds, di, run])

    y = np.column_stack([x0, np.zeros(x0.shape[0])])
    for k in range(steps):
        t = k * h
        k1 = rhs(t, y)
        k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = rhs(t + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return y[:, :2], y[:, 2]


# --- suites --------------------------------------------------------------------

def suite_dynamics(params: ModelParams, config: VerifyConfig) -> list:
    name, seed = "dynamics", config.seed
    rng = _suite_rng(seed, name)
    k_b, m_b, _, _ = constants(params)
    out = []

    n = config.vector_samples
    x = sample_triangle(rng, n)
    l = rng.uniform(0.0, params.l_bar, n)
    ds, di = _b(x[:, 0], x[:, 1], l, params)
    out.append(_check(name, "vector_field_bound", n, np.max(np.hypot(ds, di) - k_b), 0.0, seed))

    y = sample_triangle(rng, n)
    ds2, di2 = _b(y[:, 0], y[:, 1], l, params)
    lhs = np.hypot(ds - ds2, di - di2)
    rhs = m_b * np.hypot(x[:, 0] - y[:, 0], x[:, 1] - y[:, 1])
    out.append(_check(name, "vector_field_lipschitz", n, np.max(lhs - rhs), 1e-15, seed))

    inv = pop = roundtrip = 0.0
    exits = 0
    for _ in range(config.trajectory_trials):
        x0 = sample_triangle(rng, 1)[0]
        horizon = rng.uniform(1.0, 30.0)
        traj = integrate_forward(x0, random_control(rng, params, horizon), horizon, 0.05, params)
        inv = max(inv, float(np.max(triangle_violation(traj.s, traj.i))))
        pop = max(pop, float(np.max(np.diff(traj.s + traj.i), initial=0.0)))

        y0 = sample_interior(rng, 1)[0]
        duration = rng.uniform(0.5, 5.0)
        ctrl = random_control(rng, params, duration)
        back, ok = integrate_backward(y0, ctrl, duration, 0.01, params)
        if not ok:
            exits += 1
            continue
        fwd = integrate_forward(back.states[-1], ctrl.reflect(duration), duration, 0.01, params)
        roundtrip = max(roundtrip, float(np.max(np.abs(fwd.states[-1] - y0))))
    trials = config.trajectory_trials
    out.append(_check(name, "forward_invariance", trials, inv, 1e-10, seed))
    out.append(_check(name, "population_non_increasing", trials, pop, 1e-15, seed))
    out.append(_check(name, "backward_forward_roundtrip", trials - exits, roundtrip, 1e-6, seed,
                      f"{exits} backward runs left the triangle"))
    return out


def check_gronwall(params: ModelParams, trials: int = 100, seed: int = 0,
                   n_times: int = 32, dt: float = 0.05) -> CheckResult:
    """Lipschitz dependence of trajectories on initial data and control."""
    if trials < 1:
        raise ConfigError(f"trials must be at least 1, got {trials}")
    rng = _suite_rng(seed, "gronwall")
    m_b = constants(params)[1]
    factor = 4.0 * params.theta * (params.l_bar + 1.0)
    worst = -np.inf
    for _ in range(trials):
        x0, x1 = sample_triangle(rng, 2)
        horizon = rng.uniform(1.0, 20.0)
        c0 = random_control(rng, params, horizon)
        c1 = c0 if rng.random() < 0.2 else random_control(rng, params, horizon)
        times = np.linspace(horizon / n_times, horizon, n_times)
        a = integrate_forward(x0, c0, horizon, dt, params, t_eval=times)
        b = integrate_forward(x1, c1, horizon, dt, params, t_eval=times)
        gap0 = float(np.hypot(*(x0 - x1)))
        for t in times:
            lhs = float(np.hypot(*(a.at(t) - b.at(t))))
            rhs = (gap0 + factor * c0.integral_abs_diff(c1, t)) * math.exp(m_b * t)
            worst = max(worst, lhs - rhs)
    return _check("gronwall", "trajectory_estimate", trials * n_times, max(worst, 0.0), 0.0,
                  seed)


def check_output_identity(params: ModelParams, trials: int = 100, rel_tol: float = 1e-4,
                  seed: int = 0, prior_deaths: bool = False) -> CheckResult:
    """Expected output under random vaccine arrival versus ``w/r - J``.

    With ``prior_deaths`` the initial dead fraction is positive and the
    identity is checked in its general form ``(w/r)(1 - d0) - J``.
    """
    if trials < 1:
        raise ConfigError(f"trials must be at least 1, got {trials}")
    rng = _suite_rng(seed, "cost")
    if prior_deaths:
        rng = np.random.default_rng([seed, 1000])
    scale = params.w / params.r
    worst = 0.0
    for _ in range(trials):
        bary = rng.dirichlet(np.ones(4 if prior_deaths else 3))
        full = bary if prior_deaths else np.append(bary, 0.0)
        ctrl = random_control(rng, params, 20.0)
        j, _ = evaluate_J(full[:2], ctrl, params, rel_tol=rel_tol)
        jt = evaluate_J_tilde(full, ctrl, params, rel_tol=rel_tol)
        worst = max(worst, abs(jt - (scale * (1.0 - full[3]) - j)))
    name = "output_identity_prior_deaths" if prior_deaths else "output_identity"
    return _check("cost", name, trials, worst, 5.0 * rel_tol * scale, seed)


def suite_cost(params: ModelParams, config: VerifyConfig) -> list:
    name, seed = "cost", config.seed
    rng = _suite_rng(seed, name)
    _, _, k_f, m_f = constants(params)
    out = []
    n = config.vector_samples
    x = sample_triangle(rng, n)
    y = sample_triangle(rng, n)
    l = rng.uniform(0.0, params.l_bar, n)
    fx = _f(x[:, 0], x[:, 1], l, params)
    fy = _f(y[:, 0], y[:, 1], l, params)
    bound = max(float(np.max(fx - k_f)), float(np.max(-fx)))
    out.append(_check(name, "running_cost_bound", n, bound, 0.0, seed))
    slope = np.abs(fx - fy) - m_f * np.hypot(x[:, 0] - y[:, 0], x[:, 1] - y[:, 1])
    out.append(_check(name, "running_cost_lipschitz", n, np.max(slope), 1e-14, seed))

    worst_bound = worst_chi = 0.0
    trials = config.trajectory_trials
    for _ in range(trials):
        x0 = sample_triangle(rng, 1)[0]
        ctrl = random_control(rng, params, 15.0)
        j, _ = evaluate_J(x0, ctrl, params, rel_tol=1e-4, dt=0.1)
        worst_bound = max(worst_bound, -j, j - k_f / params.rho)
        richer = dataclasses.replace(params, chi=params.chi * rng.uniform(1.0, 3.0))
        j2, _ = evaluate_J(x0, ctrl, richer, rel_tol=1e-4, dt=0.1)
        worst_chi = max(worst_chi, j - j2)
    out.append(_check(name, "cost_bounds", trials, worst_bound, 0.0, seed))
    out.append(_check(name, "monotone_in_chi", trials, worst_chi, 0.0, seed))
    out.append(check_output_identity(params, config.identity_trials, config.identity_rel_tol, seed))
    out.append(check_output_identity(params, max(config.identity_trials // 5, 1), config.identity_rel_tol,
                             seed, prior_deaths=True))
    return out


def suite_hamiltonian(params: ModelParams, config: VerifyConfig) -> list:
    name, seed = "hamiltonian", config.seed
    rng = _suite_rng(seed, name)
    out = []

    n = config.hamiltonian_samples
    x = sample_triangle(rng, n)
    p, q = sample_costates(rng, n)
    s, i = x[:, 0], x[:, 1]
    closed = hamiltonian_array(s, i, p, q, params)
    oracle, arg = oracle_hamiltonian_array(s, i, p, q, params, config.oracle_m)
    out.append(_check(name, "oracle_equivalence", n, np.max(np.abs(closed - oracle)), 1e-6,
                      seed))
    levels, full = psi_array(s, i, p, q, params)
    cell = params.l_bar / (config.oracle_m - 1)
    arg_gap = np.where(full, 0.0, np.abs(levels - arg))
    out.append(_check(name, "minimizer_near_oracle_argmin", n, np.max(arg_gap),
                      cell * (1 + 1e-9), seed))
    at_psi = _h_cv(s, i, p, q, levels, params)
    scale = 1.0 + np.abs(p) + np.abs(q)
    out.append(_check(name, "minimizer_attains_H", n,
                      np.max(np.abs(at_psi - closed) / scale), 1e-10, seed,
                      "scaled by 1+|p|+|q|"))
    grid = control_grid(params, config.m)
    worst = -np.inf
    for l in grid:
        worst = max(worst, float(np.max((at_psi - _h_cv(s, i, p, q, l, params)) / scale)))
    out.append(_check(name, "minimizer_beats_control_grid", n, max(worst, 0.0), 1e-10, seed,
                      "scaled by 1+|p|+|q|"))

    n = config.partition_samples
    x = sample_triangle(rng, n)
    # put a share of the samples on the edges and the p == q set
    edge = rng.random(n)
    x[edge < 0.02, 1] = 0.0
    x[(edge >= 0.02) & (edge < 0.04), 0] = 0.0
    p, q = sample_costates(rng, n)
    ties = rng.random(n) < 0.02
    q[ties] = p[ties]
    preds = _region_predicates(x[:, 0], x[:, 1], p, q, params)
    count_bad = np.sum(preds.sum(axis=0) != 1)
    codes = classify_array(x[:, 0], x[:, 1], p, q, params)
    mismatch = np.sum(np.argmax(preds, axis=0) != codes)
    out.append(_check(name, "partition_exactly_one", n, count_bad + mismatch, 0.0, seed))

    n = config.concavity_samples
    x = sample_triangle(rng, n)
    p1, q1 = sample_costates(rng, n)
    p2, q2 = sample_costates(rng, n)
    lam = rng.random(n)
    s, i = x[:, 0], x[:, 1]
    mid = hamiltonian_array(s, i, lam * p1 + (1 - lam) * p2, lam * q1 + (1 - lam) * q2, params)
    chord = (lam * hamiltonian_array(s, i, p1, q1, params)
             + (1 - lam) * hamiltonian_array(s, i, p2, q2, params))
    out.append(_check(name, "concave_in_costate", n, max(float(np.max(chord - mid)), 0.0),
                      1e-10, seed))

    n = config.boundary_samples
    x = sample_interior(rng, n, margin=1e-3)
    s, i = x[:, 0], x[:, 1]
    p = rng.uniform(-5.0, 5.0, n)
    pr = pressure(s, i, params)
    worst = 0.0
    for shrink in (1.0, 1.0 - params.theta * params.l_bar):
        qb = p + params.w / (2.0 * params.theta * shrink * pr)
        lo = hamiltonian_array(s, i, p, qb - 1e-8, params)
        hi = hamiltonian_array(s, i, p, qb + 1e-8, params)
        worst = max(worst, float(np.max(np.abs(hi - lo))))
    out.append(_check(name, "continuous_across_boundaries", 2 * n, worst, 1e-6, seed))
    return out


def _field_tol(field: ValueField, config: VerifyConfig) -> float:
    if np.isfinite(field.residual):
        return 2.0 * field.residual + 1e-14
    disc = math.exp(-field.params.rho * field.dt)
    return 2.0 * config.tol * (1.0 - disc) + 1e-14


def _operator(field: ValueField, config: VerifyConfig) -> BellmanOperator:
    return BellmanOperator(field.grid, field.params, field.dt, field.m or config.m)


def suite_value(params: ModelParams, config: VerifyConfig, field: ValueField) -> list:
    name, seed = "value", config.seed
    _, m_b, k_f, m_f = constants(params)
    grid, vals = field.grid, field.values
    out = []
    upper = k_f / params.rho
    bound = max(float(np.max(vals - upper)), float(np.max(-vals)))
    out.append(_check(name, "value_bounds", grid.size, bound, 1e-9, seed))
    edge = np.abs(vals[grid.k == 0])
    out.append(_check(name, "zero_on_i_edge", int(edge.size), np.max(edge), config.tol, seed))

    op = _operator(field, config)
    change = float(np.max(np.abs(op(vals) - vals)))
    out.append(_check(name, "fixed_point", grid.size, change, _field_tol(field, config), seed))

    on_s0 = np.flatnonzero(grid.j == 0)
    order = on_s0[np.argsort(grid.k[on_s0])]
    drops = -np.diff(vals[order])
    out.append(_check(name, "monotone_on_s_edge", int(order.size), max(float(np.max(drops)), 0.0),
                      config.tol, seed))

    slope = _max_adjacent_slope(field)
    if params.rho > m_b:
        tol = m_f / (params.rho - m_b) + 10.0 * grid.h * m_f
        out.append(_check(name, "lipschitz_bound", grid.size, slope, tol, seed))
    else:
        out.append(_check(name, "lipschitz_bound", grid.size, 0.0, 0.0, seed,
                          f"not applicable: r+nu <= M_b; observed slope {_g(slope)}"))
    return out


def _max_adjacent_slope(field: ValueField) -> float:
    grid, vals = field.grid, field.values
    j, k, n = grid.j, grid.k, grid.n
    here = grid.index(j, k)
    best = 0.0
    for dj, dk, length in ((1, 0, 1.0), (0, 1, 1.0), (-1, 1, math.sqrt(2.0))):
        ok = (j + dj >= 0) & (j + dj + k + dk <= n)
        nb = grid.index(j[ok] + dj, k[ok] + dk)
        diff = np.abs(vals[nb] - vals[here[ok]]) / (length * grid.h)
        best = max(best, float(np.max(diff, initial=0.0)))
    return best


def check_dpp(field: ValueField, params: ModelParams, trials: int = 50, seed: int = 0,
              m: int = 21) -> list:
    """Forward and backward dynamic-programming checks at random interior states."""
    if trials < 1:
        raise ConfigError(f"trials must be at least 1, got {trials}")
    name = "dpp"
    rng = _suite_rng(seed, name)
    k_f = constants(params)[2]
    h, dt, rho = field.h, field.dt, params.rho
    tol = 10.0 * (h + dt) * k_f
    horizon = 10.0 * dt
    x = sample_interior(rng, trials)
    out = []

    levels = control_grid(params, m)
    starts = np.repeat(x, levels.size, axis=0)
    ls = np.tile(levels, trials)
    ends, acc = _batch_cost(starts, ls, horizon, dt / 4.0, params)
    cand = (acc + math.exp(-rho * horizon) * interpolate(field, ends)).reshape(trials, -1)
    mismatch = np.abs(cand.min(axis=1) - interpolate(field, x))
    out.append(_check(name, "forward_dpp", trials, np.max(mismatch), tol, seed))

    worst = 0.0
    used = skipped = 0
    starts = np.vstack([x, _hypotenuse_points(rng, max(trials // 10, 1))])
    for y0 in starts:
        duration = rng.uniform(0.0, horizon)
        ctrl = random_control(rng, params, max(duration, 1e-6), pieces=2)
        if duration <= 0:
            continue
        back, ok = integrate_backward(y0, ctrl, duration, dt / 4.0, params)
        if not ok:
            skipped += 1
            continue
        used += 1
        u = back.times
        weight = np.exp(rho * u) * _f(back.s, back.i, back.control_values, params)
        integral = float(np.sum(0.5 * (weight[1:] + weight[:-1]) * np.diff(u)))
        rhs = interpolate(field, back.states[-1]) * math.exp(rho * duration) - integral
        worst = max(worst, rhs - interpolate(field, y0))
    out.append(_check(name, "backward_dpp_inequality", used, worst, tol, seed,
                      f"{skipped} starts with no admissible backward control skipped"))

    op = BellmanOperator(field.grid, params, dt, field.m or m)
    nodes = np.flatnonzero(field.grid.interior)
    pick = rng.choice(nodes, size=min(trials, nodes.size), replace=False)
    step = np.abs(op(field.values)[pick] - field.values[pick])
    out.append(_check(name, "one_step_dpp", int(pick.size), np.max(step),
                      _field_tol(field, VerifyConfig(m=field.m or m)), seed))
    return out


def _hypotenuse_points(rng, size: int) -> np.ndarray:
    s = rng.uniform(0.05, 0.95, size)
    return np.column_stack([s, 1.0 - s])


def suite_dpp(params: ModelParams, config: VerifyConfig, field: ValueField) -> list:
    return check_dpp(field, params, config.dpp_trials, config.seed, config.m)


def suite_policy(params: ModelParams, config: VerifyConfig, field: ValueField) -> list:
    name, seed = "policy", config.seed
    rng = _suite_rng(seed, name)
    k_f = constants(params)[2]
    h, dt = field.h, field.dt
    cost_tol = 20.0 * (h + dt) * k_f / params.rho
    g_tol = min(cost_tol, 10.0 * (h + dt) * k_f)
    out = []

    x = sample_interior(rng, config.policy_starts)
    horizon = default_horizon(params)
    reports = simulate_closed_loop_batch(field, x, horizon, dt, params)
    gap = max(abs(r.cost - interpolate(field, x0)) for r, x0 in zip(reports, x))
    out.append(_check(name, "closed_loop_cost_matches_value", len(reports), gap, cost_tol, seed))
    g_spread = max(float(np.max(np.abs(r.g - r.g[0]))) for r in reports)
    out.append(_check(name, "closed_loop_g_constant", len(reports), g_spread, cost_tol, seed))

    grid = control_grid(params, config.m)
    worst_min = worst_lf = 0.0
    bad_regions = transitions = 0
    instants = 0
    for r in reports:
        s, i = r.trajectory.s, r.trajectory.i
        p, q = r.costate[:, 0], r.costate[:, 1]
        applied = _h_cv(s, i, p, q, r.applied_l, params)
        best = np.min([_h_cv(s, i, p, q, l, params) for l in grid], axis=0)
        worst_min = max(worst_min, float(np.max(applied - best)))
        lf = q <= p
        worst_lf = max(worst_lf, float(np.max(r.applied_l[lf], initial=0.0)))
        bad_regions += int(np.sum(classify_array(s, i, p, q, params) != r.region_tags))
        transitions += non_adjacent_transitions(r.region_tags)
        instants += s.size
    active = sum(int(np.sum(r.applied_l > 0)) for r in reports)
    out.append(_check(name, "pointwise_minimization", instants, worst_min, 1e-8, seed))
    out.append(_check(name, "laissez_faire_when_q_le_p", instants, worst_lf, 0.0, seed,
                      f"{active} instants with active lockdown"))
    out.append(_check(name, "regions_match_classification", instants, bad_regions, 0.0, seed))
    out.append(_check(name, "adjacent_region_transitions", instants, transitions, 0.0, seed))

    worst_g = 0.0
    for _ in range(config.policy_controls):
        x0 = sample_interior(rng, 1)[0]
        ctrl = random_control(rng, params, horizon)
        _, g = running_value_process(field, x0, ctrl, horizon, dt, params)
        worst_g = max(worst_g, float(np.max(np.maximum.accumulate(g) - g)))
    out.append(_check(name, "g_non_decreasing_any_control", config.policy_controls, worst_g,
                      g_tol, seed))
    return out


def suite_convergence(params: ModelParams, config: VerifyConfig,
                      field: ValueField | None = None) -> list:
    name, seed = "convergence", config.seed
    out = []
    fields_ = []
    for n in config.convergence_levels:
        if field is not None and field.grid.n == n and field.params == params:
            fields_.append(field)
        else:
            fields_.append(solve_value_function(params, n=n, m=config.m, tol=config.tol))
    coarse, mid, fine = fields_
    d1 = _grid_gap(coarse, mid)
    d2 = _grid_gap(mid, fine)
    out.append(_check(name, "self_convergence", 2, d2 - 3.0 * d1, 0.0, seed,
                      f"coarse gap {_g(d1)}, fine gap {_g(d2)}"))

    medians = [hjb_residual(f, params).quantiles["median"] for f in fields_]
    rise = max(medians[1] - medians[0], medians[2] - medians[1])
    out.append(_check(name, "residual_median_decreases", 3, max(rise, 0.0), 0.0, seed,
                      "medians " + ", ".join(_g(v) for v in medians)))

    worst = 0.0
    for f in fields_:
        hist = f.history
        disc = math.exp(-params.rho * f.dt)
        start = hist.size // 10
        ratios = hist[start + 1:] / hist[start:-1]
        worst = max(worst, float(np.max(ratios - disc - 0.05, initial=0.0)))
    out.append(_check(name, "contraction_after_burn_in", 3, worst, 0.0, seed))
    return out


def _grid_gap(a: ValueField, b: ValueField) -> float:
    """Sup-norm difference on the nodes of the coarser field."""
    coarse, fine = (a, b) if a.grid.n <= b.grid.n else (b, a)
    return float(np.max(np.abs(interpolate(fine, coarse.grid.nodes) - coarse.values)))


# --- orchestration -------------------------------------------------------------

def _run_suite(suite: str, params: ModelParams, config: VerifyConfig,
               field: ValueField | None) -> list:
    if suite == "dynamics":
        return suite_dynamics(params, config)
    if suite == "gronwall":
        return [check_gronwall(params, config.gronwall_trials, config.seed,
                               config.gronwall_times)]
    if suite == "cost":
        return suite_cost(params, config)
    if suite == "hamiltonian":
        return suite_hamiltonian(params, config)
    if suite == "value":
        return suite_value(params, config, field)
    if suite == "dpp":
        return suite_dpp(params, config, field)
    if suite == "policy":
        return suite_policy(params, config, field)
    if suite == "convergence":
        return suite_convergence(params, config, field)
    raise ConfigError(f"unknown suite {suite!r}; choose from {', '.join(SUITES)}")


def run_all(params: ModelParams, config: VerifyConfig | None = None,
            suites=None, field: ValueField | None = None) -> SuiteReport:
    """Run the selected suites (all by default) and collect their checks.

    Suites needing a value field solve one at ``config.n`` unless ``field`` is
    given. With ``config.workers > 1`` suites run concurrently; results keep the
    canonical suite order either way.
    """
    config = VerifyConfig() if config is None else config
    chosen = list(SUITES) if suites is None else list(suites)
    for s in chosen:
        if s not in SUITES:
            raise ConfigError(f"unknown suite {s!r}; choose from {', '.join(SUITES)}")
    chosen = [s for s in SUITES if s in chosen]
    if field is None and any(s in FIELD_SUITES for s in chosen):
        field = solve_value_function(params, n=config.n, m=config.m, tol=config.tol)
    if config.workers > 1:
        with ThreadPoolExecutor(config.workers) as pool:
            parts = list(pool.map(lambda s: _run_suite(s, params, config, field), chosen))
    else:
        parts = [_run_suite(s, params, config, field) for s in chosen]
    return SuiteReport(config.seed, [r for part in parts for r in part])
