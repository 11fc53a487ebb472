"""Closed-form Hamiltonian, region partition and minimizer map.

All array functions broadcast over ``s, i, p, q`` so the same code serves
single points and million-sample property sweeps.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .dynamics import ModelParams, check_control, check_state


class Region(enum.IntEnum):
    C_I = 0
    C_S = 1
    A_0 = 2
    A_1 = 3
    A_2 = 4
    A_3 = 5
    A_4 = 6

    @property
    def tag(self) -> str:
        return self.name


REGION_TAGS = tuple(r.name for r in Region)


@dataclass(frozen=True)
class Costate:
    p: float
    q: float

    def __iter__(self):
        yield self.p
        yield self.q


@dataclass(frozen=True)
class MinimizerSet:
    kind: str  # "singleton" or "full-interval"
    value: float | None = None
    upper: float | None = None

    @property
    def is_singleton(self) -> bool:
        return self.kind == "singleton"

    def select(self) -> float:
        """Canonical lockdown level: the singleton, or 0 on the full interval."""
        return self.value if self.is_singleton else 0.0


def _rest(s, i, q, params: ModelParams):
    """Control-free part of the current-value Hamiltonian."""
    ph = params.phi(i)
    return i * ph * (params.w / params.r + params.chi) - (params.gamma + ph) * i * q


def _h_cv(s, i, p, q, l, params: ModelParams):
    return ((s + i) * l * params.w
            + params.beta * (1.0 - params.theta * l) ** 2 * s * i * (q - p)
            + _rest(s, i, q, params))


def h_cv(x, c, l, params: ModelParams) -> float:
    """Current-value Hamiltonian at lockdown level ``l``."""
    s, i = check_state(x)
    l = check_control(l, params)
    p, q = c
    return float(_h_cv(s, i, p, q, l, params))


def _as_arrays(s, i, p, q):
    return np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (s, i, p, q)))


def pressure(s, i, params: ModelParams):
    """Infection pressure beta s i / (s + i); zero where s + i = 0."""
    s = np.asarray(s, dtype=float)
    i = np.asarray(i, dtype=float)
    tot = s + i
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(tot > 0, params.beta * s * i / np.where(tot > 0, tot, 1.0), 0.0)


def classify_array(s, i, p, q, params: ModelParams) -> np.ndarray:
    """Region codes (``Region`` integer values) for broadcast inputs."""
    s, i, p, q = _as_arrays(s, i, p, q)
    out = np.empty(s.shape, dtype=np.int8)
    gap = q - p
    interior = (s != 0) & (i != 0)
    out[i == 0] = Region.C_I
    out[(s == 0) & (i != 0)] = Region.C_S
    out[interior & (gap == 0)] = Region.A_0
    out[interior & (gap < 0)] = Region.A_1
    pos = interior & (gap > 0)
    if np.any(pos):
        pr = pressure(s[pos], i[pos], params)
        # a subnormal gap gives infinite thresholds, which still order correctly
        with np.errstate(over="ignore"):
            k1 = params.w / (2.0 * params.theta * gap[pos])
            k2 = params.w / (2.0 * params.theta * (1.0 - params.theta * params.l_bar) * gap[pos])
        codes = np.full(pr.shape, Region.A_3, dtype=np.int8)
        codes[pr <= k1] = Region.A_2
        codes[pr >= k2] = Region.A_4
        out[pos] = codes
    # non-finite costates fall through to no region; flag them explicitly
    bad = ~(np.isfinite(p) & np.isfinite(q))
    out[bad & interior] = -1
    return out


def classify(x, c, params: ModelParams) -> Region:
    s, i = check_state(x)
    p, q = c
    return Region(int(classify_array(s, i, p, q, params)))


def _vertex(s, i, p, q, params: ModelParams):
    """Abscissa of the parabola vertex in l (valid where s, i != 0, q != p)."""
    th = params.theta
    return 1.0 / th - params.w * (s + i) / (2.0 * th**2 * (q - p) * params.beta * s * i)


def _h_interior_vertex(s, i, p, q, params: ModelParams):
    th, w = params.theta, params.w
    return (w**2 / (4.0 * th**2 * (p - q)) * (s + i) ** 2 / (params.beta * s * i)
            + w / th * (s + i) + _rest(s, i, q, params))


def _h_full_lockdown(s, i, p, q, params: ModelParams):
    th, lb = params.theta, params.l_bar
    return (params.beta * s * i * (th * lb - 1.0) ** 2 * (q - p)
            + params.w * lb * (s + i) + _rest(s, i, q, params))


def _h_laissez_faire(s, i, p, q, params: ModelParams):
    return params.beta * s * i * (q - p) + _rest(s, i, q, params)


def hamiltonian_array(s, i, p, q, params: ModelParams) -> np.ndarray:
    """Closed-form minimum of the current-value Hamiltonian over [0, l_bar]."""
    s, i, p, q = _as_arrays(s, i, p, q)
    region = classify_array(s, i, p, q, params)
    out = np.zeros(s.shape)
    m = (region == Region.C_S) | (region == Region.A_0)
    out[m] = _rest(s[m], i[m], q[m], params)
    m = (region == Region.A_1) | (region == Region.A_2)
    out[m] = _h_laissez_faire(s[m], i[m], p[m], q[m], params)
    m = region == Region.A_3
    out[m] = _h_interior_vertex(s[m], i[m], p[m], q[m], params)
    m = region == Region.A_4
    out[m] = _h_full_lockdown(s[m], i[m], p[m], q[m], params)
    out[region < 0] = np.nan
    return out


def hamiltonian_H(x, c, params: ModelParams) -> float:
    s, i = check_state(x)
    p, q = c
    return float(hamiltonian_array(s, i, p, q, params))


def psi_array(s, i, p, q, params: ModelParams):
    """Minimizer selection and full-interval mask.

    Returns ``(levels, full)``; ``levels`` holds the singleton value and 0
    where the minimizer set is the whole interval (only at the origin).
    """
    s, i, p, q = _as_arrays(s, i, p, q)
    region = classify_array(s, i, p, q, params)
    levels = np.zeros(s.shape)
    m = region == Region.A_3
    levels[m] = _vertex(s[m], i[m], p[m], q[m], params)
    levels[region == Region.A_4] = params.l_bar
    full = (s == 0) & (i == 0)
    return levels, full


def psi(x, c, params: ModelParams) -> MinimizerSet:
    s, i = check_state(x)
    p, q = c
    levels, full = psi_array(s, i, p, q, params)
    if bool(full):
        return MinimizerSet("full-interval", None, params.l_bar)
    return MinimizerSet("singleton", float(levels))
