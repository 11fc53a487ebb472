"""Semi-Lagrangian value iteration on a uniform triangulation of the state triangle.

Each sweep replaces the value at a node x by

    min_l  dt * f(x, l) + exp(-(r + nu) dt) * V(x + dt * b(x, l))

with V evaluated by piecewise-linear interpolation. The feet of the
characteristics do not depend on V, so for the fixed control grid they are
assembled once into a sparse interpolation operator; the analytic minimizer
built from the current finite-difference costate is added per sweep.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .cost import _f
from .dynamics import SIMPLEX_TOL, ModelParams, _b, constants, triangle_violation
from .exceptions import ConvergenceError, DomainError, StepSizeError
from .hamiltonian import hamiltonian_array, psi_array

logger = logging.getLogger(__name__)


class TriangularGrid:
    """Nodes ``(j/n, k/n)`` with ``j + k <= n`` and the right-triangle cells between them.

    Nodes are ordered by ``j`` then ``k``. Lower cells are
    ``(j,k), (j+1,k), (j,k+1)``; upper cells ``(j+1,k), (j,k+1), (j+1,k+1)``.
    """

    def __init__(self, n: int):
        if int(n) != n or n < 2:
            raise DomainError(f"grid needs n >= 2 subdivisions, got {n}")
        self.n = int(n)
        self.h = 1.0 / self.n
        jj, kk = np.meshgrid(np.arange(self.n + 1), np.arange(self.n + 1), indexing="ij")
        keep = (jj + kk) <= self.n
        self.j = jj[keep]
        self.k = kk[keep]
        self.nodes = np.column_stack([self.j / self.n, self.k / self.n])

    def __len__(self):
        return self.j.size

    def __repr__(self):
        return f"TriangularGrid(n={self.n})"

    @property
    def size(self) -> int:
        return self.j.size

    def index(self, j, k):
        j = np.asarray(j)
        return j * (self.n + 1) - j * (j - 1) // 2 + np.asarray(k)

    @cached_property
    def cells(self) -> np.ndarray:
        n = self.n
        lower = [(j, k) for j in range(n) for k in range(n - j)]
        upper = [(j, k) for j in range(n - 1) for k in range(n - 1 - j)]
        lo = np.array(lower)
        up = np.array(upper).reshape(-1, 2)
        lower_cells = np.column_stack([
            self.index(lo[:, 0], lo[:, 1]),
            self.index(lo[:, 0] + 1, lo[:, 1]),
            self.index(lo[:, 0], lo[:, 1] + 1),
        ])
        upper_cells = np.column_stack([
            self.index(up[:, 0] + 1, up[:, 1]),
            self.index(up[:, 0], up[:, 1] + 1),
            self.index(up[:, 0] + 1, up[:, 1] + 1),
        ])
        return np.vstack([lower_cells, upper_cells])

    @cached_property
    def interior(self) -> np.ndarray:
        """Mask of nodes off the three edges."""
        return (self.j > 0) & (self.k > 0) & (self.j + self.k < self.n)

    def locate(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Vertex indices and barycentric weights of the cell holding each point.

        Points must already be inside the triangle (clamped). Ties on shared
        edges go to the lower cell of the lower index pair.
        """
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        n = self.n
        u = pts[:, 0] * n
        v = pts[:, 1] * n
        j = np.clip(np.floor(u).astype(np.int64), 0, n - 1)
        k = np.clip(np.floor(v).astype(np.int64), 0, n - 1)
        fu = u - j
        fv = v - k
        # points on the hypotenuse can floor onto a node with j + k = n
        over = (j + k) >= n
        shift_j = over & (j > 0)
        shift_k = over & ~shift_j
        j = j - shift_j
        fu = fu + shift_j
        k = k - shift_k
        fv = fv + shift_k
        top = (j + k) == n - 1
        tot = fu + fv
        squash = top & (tot > 1.0)
        fu = np.where(squash, fu / np.where(squash, tot, 1.0), fu)
        fv = np.where(squash, fv / np.where(squash, tot, 1.0), fv)
        upper = (fu + fv) > 1.0
        idx = np.empty((pts.shape[0], 3), dtype=np.int64)
        wts = np.empty((pts.shape[0], 3))
        lo = ~upper
        idx[lo, 0] = self.index(j[lo], k[lo])
        idx[lo, 1] = self.index(j[lo] + 1, k[lo])
        idx[lo, 2] = self.index(j[lo], k[lo] + 1)
        wts[lo, 0] = 1.0 - fu[lo] - fv[lo]
        wts[lo, 1] = fu[lo]
        wts[lo, 2] = fv[lo]
        up = upper
        idx[up, 0] = self.index(j[up] + 1, k[up])
        idx[up, 1] = self.index(j[up], k[up] + 1)
        idx[up, 2] = self.index(j[up] + 1, k[up] + 1)
        wts[up, 0] = 1.0 - fv[up]
        wts[up, 1] = 1.0 - fu[up]
        wts[up, 2] = fu[up] + fv[up] - 1.0
        return idx, wts

    def interpolation_matrix(self, points) -> sp.csr_matrix:
        idx, wts = self.locate(points)
        rows = idx.shape[0]
        return sp.csr_matrix(
            (wts.ravel(), idx.ravel(), np.arange(0, 3 * rows + 1, 3)),
            shape=(rows, self.size),
        )


def build_grid(n: int) -> TriangularGrid:
    return TriangularGrid(n)


def clamp_points(points, tol: float = SIMPLEX_TOL) -> np.ndarray:
    """Validate points against the triangle and clamp rounding-level excursions."""
    pts = np.array(points, dtype=float).reshape(-1, 2)
    if not np.all(np.isfinite(pts)):
        raise DomainError("points must be finite")
    viol = triangle_violation(pts[:, 0], pts[:, 1])
    if np.any(viol > tol):
        bad = pts[np.argmax(viol)]
        raise DomainError(f"point {tuple(bad)} lies outside the triangle")
    return _clamp_array(pts)


def _clamp_array(pts: np.ndarray) -> np.ndarray:
    pts = np.maximum(pts, 0.0)
    excess = pts.sum(axis=1) - 1.0
    over = excess > 0
    pts[over, 0] = np.maximum(pts[over, 0] - excess[over], 0.0)
    pts[over, 1] = np.minimum(pts[over, 1], 1.0 - pts[over, 0])
    return pts


@dataclass
class ValueField:
    grid: TriangularGrid
    values: np.ndarray
    params: ModelParams
    dt: float
    m: int = 0
    n_iter: int = 0
    residual: float = float("nan")
    history: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def h(self) -> float:
        return self.grid.h

    def __call__(self, points):
        return interpolate(self, points)

    def with_values(self, values) -> "ValueField":
        return ValueField(self.grid, np.asarray(values, dtype=float), self.params, self.dt,
                          self.m, self.n_iter, self.residual, self.history)

    def node_costate(self) -> tuple[np.ndarray, np.ndarray]:
        return _node_costate(self.grid, self.values)

    def save(self, path) -> None:
        np.savez(
            path,
            values=self.values,
            n=self.grid.n,
            dt=self.dt,
            m=self.m,
            n_iter=self.n_iter,
            residual=self.residual,
            history=self.history,
            params=json.dumps(self.params.to_dict(), sort_keys=True),
        )

    @classmethod
    def load(cls, path) -> "ValueField":
        with np.load(path, allow_pickle=False) as data:
            params = ModelParams.from_dict(json.loads(str(data["params"])))
            return cls(
                grid=TriangularGrid(int(data["n"])),
                values=np.array(data["values"]),
                params=params,
                dt=float(data["dt"]),
                m=int(data["m"]),
                n_iter=int(data["n_iter"]),
                residual=float(data["residual"]),
                history=np.array(data["history"]),
            )

    def to_csv(self, path) -> None:
        p, q = self.node_costate()
        res = hjb_residual(self, self.params).residual
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["s", "i", "value", "ds_value", "di_value", "residual"])
            for row in zip(self.grid.nodes[:, 0], self.grid.nodes[:, 1], self.values, p, q, res):
                writer.writerow([format(float(v), ".12g") for v in row])


def interpolate(field: ValueField, points):
    """Piecewise-linear value at one point ``(s, i)`` or an array of points."""
    scalar = np.ndim(points) == 1
    pts = clamp_points(points)
    idx, wts = field.grid.locate(pts)
    out = np.einsum("pk,pk->p", field.values[idx], wts)
    return float(out[0]) if scalar else out


# --- finite-difference costate ----------------------------------------------

def _axis_steps(pts: np.ndarray, axis: int, h: float):
    """Forward/backward step lengths along one axis: h where it fits, else one-sided."""
    room_fwd = 1.0 - pts[:, 0] - pts[:, 1]
    room_bwd = pts[:, axis]
    slack = 1e-12
    fwd_ok = room_fwd >= h - slack
    bwd_ok = room_bwd >= h - slack
    step_f = np.where(fwd_ok, h, np.where(bwd_ok, 0.0, np.maximum(room_fwd, 0.0)))
    step_b = np.where(bwd_ok, h, np.where(fwd_ok, 0.0, np.maximum(room_bwd, 0.0)))
    return step_f, step_b


def _interp_raw(field: ValueField, pts: np.ndarray) -> np.ndarray:
    idx, wts = field.grid.locate(pts)
    return np.einsum("pk,pk->p", field.values[idx], wts)


def _fd_costate_clamped(field: ValueField, pts: np.ndarray):
    h = field.grid.h
    sf, sb = _axis_steps(pts, 0, h)
    if_, ib = _axis_steps(pts, 1, h)
    zeros = np.zeros_like(sf)
    shifted = np.vstack([
        pts + np.column_stack([sf, zeros]),
        pts - np.column_stack([sb, zeros]),
        pts + np.column_stack([zeros, if_]),
        pts - np.column_stack([zeros, ib]),
    ])
    vals = _interp_raw(field, _clamp_array(shifted)).reshape(4, -1)
    out = []
    for span, plus, minus in ((sf + sb, vals[0], vals[1]), (if_ + ib, vals[2], vals[3])):
        with np.errstate(invalid="ignore", divide="ignore"):
            out.append(np.where(span > 0, (plus - minus) / np.where(span > 0, span, 1.0), 0.0))
    return out[0], out[1]


def fd_costate_array(field: ValueField, points) -> tuple[np.ndarray, np.ndarray]:
    return _fd_costate_clamped(field, clamp_points(points))


def fd_costate(field: ValueField, x):
    """Finite-difference gradient (dV/ds, dV/di) at a point.

    Central differences with step h where both neighbours lie in the
    triangle, one-sided otherwise.
    """
    from .hamiltonian import Costate

    p, q = fd_costate_array(field, [x])
    return Costate(float(p[0]), float(q[0]))


def _node_costate(grid: TriangularGrid, values: np.ndarray):
    nbr = _neighbours(grid)
    p = (values[nbr["sp"]] - values[nbr["sm"]]) * nbr["s_scale"]
    q = (values[nbr["ip"]] - values[nbr["im"]]) * nbr["i_scale"]
    return p, q


_NBR_CACHE: dict[int, dict] = {}


def _neighbours(grid: TriangularGrid) -> dict:
    cached = _NBR_CACHE.get(grid.n)
    if cached is not None:
        return cached
    n, j, k = grid.n, grid.j, grid.k
    here = grid.index(j, k)
    out = {}
    for name, a, b in (("s", j, k), ("i", k, j)):
        fwd = (j + k + 1) <= n
        bwd = a >= 1
        if name == "s":
            plus = np.where(fwd, grid.index(np.minimum(j + 1, n), k), here)
            minus = np.where(bwd, grid.index(np.maximum(j - 1, 0), k), here)
        else:
            plus = np.where(fwd, grid.index(j, np.minimum(k + 1, n)), here)
            minus = np.where(bwd, grid.index(j, np.maximum(k - 1, 0)), here)
        span = (fwd.astype(float) + bwd.astype(float)) * grid.h
        with np.errstate(divide="ignore"):
            scale = np.where(span > 0, 1.0 / np.where(span > 0, span, 1.0), 0.0)
        out[name + "p"] = plus
        out[name + "m"] = minus
        out[name + "_scale"] = scale
    _NBR_CACHE[grid.n] = out
    return out


# --- Bellman operator ----------------------------------------------------------

def default_dt(params: ModelParams, n: int) -> float:
    """Half a cell width of travel at the maximal speed K_b."""
    return 0.5 / n / constants(params)[0]


def control_grid(params: ModelParams, m: int) -> np.ndarray:
    if m < 2:
        raise DomainError(f"control grid needs m >= 2 points, got {m}")
    return np.linspace(0.0, params.l_bar, m)


def _feet(s, i, l, dt, params: ModelParams) -> np.ndarray:
    ds, di = _b(s, i, l, params)
    feet = np.column_stack([s + dt * ds, i + dt * di])
    viol = triangle_violation(feet[:, 0], feet[:, 1])
    if np.any(viol > SIMPLEX_TOL):
        raise StepSizeError(
            f"characteristic foot leaves the triangle by {viol.max():.3g}; dt={dt} too large"
        )
    return _clamp_array(feet)


class BellmanOperator:
    """Jacobi sweep of the semi-Lagrangian scheme on a fixed grid and step."""

    def __init__(self, grid: TriangularGrid, params: ModelParams, dt: float, m: int = 21,
                 analytic_candidate: bool = True, workers: int = 1):
        if not dt > 0:
            raise DomainError(f"dt must be positive, got {dt}")
        self.grid = grid
        self.params = params
        self.dt = float(dt)
        self.m = int(m)
        self.analytic_candidate = analytic_candidate
        self.discount = math.exp(-params.rho * self.dt)
        self.controls = control_grid(params, self.m)
        s, i = grid.nodes[:, 0], grid.nodes[:, 1]
        self._s, self._i = s, i
        self.running = np.stack([self.dt * _f(s, i, l, params) for l in self.controls])
        blocks = [grid.interpolation_matrix(_feet(s, i, l, self.dt, params))
                  for l in self.controls]
        self.workers = max(int(workers), 1)
        if self.workers == 1:
            self._chunks = [(slice(0, grid.size), sp.vstack(blocks, format="csr"))]
        else:
            bounds = np.linspace(0, grid.size, self.workers + 1).astype(int)
            self._chunks = [
                (slice(a, b), sp.vstack([blk[a:b] for blk in blocks], format="csr"))
                for a, b in zip(bounds[:-1], bounds[1:])
            ]
            self._pool = ThreadPoolExecutor(self.workers)

    def _sweep_chunk(self, chunk, values):
        rows, mat = chunk
        width = rows.stop - rows.start
        cont = (mat @ values).reshape(self.m, width)
        q = self.running[:, rows] + self.discount * cont
        arg = np.argmin(q, axis=0)
        return q[arg, np.arange(width)], self.controls[arg]

    def __call__(self, values: np.ndarray, return_policy: bool = False):
        values = np.asarray(values, dtype=float)
        if self.workers == 1:
            new, pol = self._sweep_chunk(self._chunks[0], values)
        else:
            parts = list(self._pool.map(lambda c: self._sweep_chunk(c, values), self._chunks))
            new = np.concatenate([a for a, _ in parts])
            pol = np.concatenate([b for _, b in parts])
        if self.analytic_candidate:
            new, pol = self._analytic(values, new, pol)
        return (new, pol) if return_policy else new

    def _analytic(self, values, new, pol):
        p, q = _node_costate(self.grid, values)
        levels, _ = psi_array(self._s, self._i, p, q, self.params)
        cand = (levels > 0) & (levels < self.params.l_bar)
        if not np.any(cand):
            return new, pol
        s, i, l = self._s[cand], self._i[cand], levels[cand]
        feet = _feet(s, i, l, self.dt, self.params)
        idx, wts = self.grid.locate(feet)
        cont = np.einsum("pk,pk->p", values[idx], wts)
        val = self.dt * _f(s, i, l, self.params) + self.discount * cont
        better = val < new[cand]
        where = np.flatnonzero(cand)[better]
        new = new.copy()
        new[where] = val[better]
        pol = pol.copy()
        pol[where] = l[better]
        return new, pol


def bellman_update(field: ValueField, params: ModelParams, dt: float, m: int = 21,
                   analytic_candidate: bool = True) -> tuple[ValueField, float]:
    """One sweep of the scheme; returns the new field and the sup-norm change."""
    op = BellmanOperator(field.grid, params, dt, m, analytic_candidate)
    new = op(field.values)
    residual = float(np.max(np.abs(new - field.values)))
    out = ValueField(field.grid, new, params, dt, m, field.n_iter + 1, residual)
    return out, residual


def solve_value_function(params: ModelParams, n: int = 100, dt: float | None = None,
                         m: int = 21, tol: float = 1e-6, max_iter: int = 200_000,
                         analytic_candidate: bool = True, workers: int = 1,
                         initial: np.ndarray | None = None) -> ValueField:
    """Fixed-point iteration from the zero field.

    Stops once the sweep change is at most ``tol * (1 - exp(-(r + nu) dt))``,
    which bounds the distance to the discrete fixed point by ``tol``.
    """
    if not tol > 0:
        raise DomainError(f"tol must be positive, got {tol}")
    grid = build_grid(n)
    dt = default_dt(params, n) if dt is None else float(dt)
    op = BellmanOperator(grid, params, dt, m, analytic_candidate, workers)
    stop = tol * (1.0 - op.discount)
    values = np.zeros(grid.size) if initial is None else np.array(initial, dtype=float)
    history = []
    residual = float("inf")
    for it in range(1, max_iter + 1):
        new = op(values)
        residual = float(np.max(np.abs(new - values)))
        history.append(residual)
        values = new
        if residual <= stop:
            logger.info("value iteration converged: n=%d iterations=%d residual=%.3g",
                        n, it, residual)
            return ValueField(grid, values, params, dt, m, it, residual, np.asarray(history))
    field = ValueField(grid, values, params, dt, m, max_iter, residual, np.asarray(history))
    raise ConvergenceError(
        f"no convergence after {max_iter} sweeps (residual {residual:.3g} > {stop:.3g})", field
    )


# --- HJB residual ---------------------------------------------------------------

@dataclass
class ResidualReport:
    residual: np.ndarray
    interior: np.ndarray
    quantiles: dict

    def summary(self) -> str:
        return ", ".join(f"{k}={v:.3g}" for k, v in self.quantiles.items())


def hjb_residual(field: ValueField, params: ModelParams) -> ResidualReport:
    """Nodewise (r + nu) V - H(x, grad V) with finite-difference gradients."""
    s, i = field.grid.nodes[:, 0], field.grid.nodes[:, 1]
    p, q = field.node_costate()
    res = params.rho * field.values - hamiltonian_array(s, i, p, q, params)
    interior = field.grid.interior
    mag = np.abs(res[interior]) if np.any(interior) else np.zeros(1)
    quant = {
        "median": float(np.median(mag)),
        "q90": float(np.quantile(mag, 0.9)),
        "max": float(np.max(mag)),
    }
    return ResidualReport(res, interior, quant)
