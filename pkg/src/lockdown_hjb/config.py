"""INI run configuration with per-line diagnostics and environment overrides.

One file fully determines a run. Sections and keys::

    [params]    beta gamma theta l_bar nu r w chi phi_kind phi0 phi_slope phi_cap
    [grid]      n dt m tol max_iter analytic_candidate
    [simulate]  s0 i0 horizon dt control rel_tol
    [suites]    seed select and any VerifyConfig sample size
    [run]       workers seed out
    [sweep]     beta theta chi s0 i0 n horizon dt

Every key may be overridden by ``LOCKDOWN_HJB_<SECTION>_<KEY>`` in the
environment. Parameter defaults are placeholders, not calibrated values.
"""
from __future__ import annotations

import configparser
import dataclasses
import os
import re
from dataclasses import dataclass, field

from .dynamics import ControlSignal, ModelParams, MortalityCurve
from .exceptions import ConfigError, DomainError
from .verify import SUITES, VerifyConfig

ENV_PREFIX = "LOCKDOWN_HJB_"


@dataclass(frozen=True)
class GridConfig:
    n: int = 100
    dt: float | None = None
    m: int = 21
    tol: float = 1e-6
    max_iter: int = 200_000
    analytic_candidate: bool = True


@dataclass(frozen=True)
class SimulateConfig:
    s0: float = 0.99
    i0: float = 0.01
    horizon: float = 100.0
    dt: float = 0.05
    control: str = "0"
    rel_tol: float = 1e-6

    @property
    def x0(self) -> tuple[float, float]:
        return (self.s0, self.i0)


@dataclass(frozen=True)
class SweepConfig:
    beta: tuple = (0.2,)
    theta: tuple = (0.8,)
    chi: tuple = (5.0,)
    s0: float = 0.99
    i0: float = 0.01
    n: int = 50
    horizon: float = 365.0
    dt: float = 0.05


@dataclass(frozen=True)
class RunConfig:
    params: ModelParams = field(default_factory=ModelParams)
    grid: GridConfig = field(default_factory=GridConfig)
    simulate: SimulateConfig = field(default_factory=SimulateConfig)
    suites: VerifyConfig = field(default_factory=VerifyConfig)
    select: tuple = SUITES
    sweep: SweepConfig = field(default_factory=SweepConfig)
    workers: int = 1
    out: str = "."


_PARAM_KEYS = ("beta", "gamma", "theta", "l_bar", "nu", "r", "w", "chi")
_PHI_KEYS = ("phi_kind", "phi0", "phi_slope", "phi_cap")
_SECTIONS = {
    "params": set(_PARAM_KEYS + _PHI_KEYS),
    "grid": {f.name for f in dataclasses.fields(GridConfig)},
    "simulate": {f.name for f in dataclasses.fields(SimulateConfig)},
    "suites": {f.name for f in dataclasses.fields(VerifyConfig)} - {"workers"} | {"select"},
    "run": {"workers", "seed", "out"},
    "sweep": {f.name for f in dataclasses.fields(SweepConfig)},
}


def parse_control(spec: str) -> ControlSignal:
    """``"0.3"`` for a constant level or ``"0:0.5, 10:0.2"`` for time:level pairs."""
    text = spec.strip()
    try:
        if ":" not in text:
            return ControlSignal.constant(float(text))
        pairs = [item.split(":") for item in text.split(",") if item.strip()]
        times = [float(t) for t, _ in pairs]
        levels = [float(v) for _, v in pairs]
    except ValueError as exc:
        raise ConfigError(f"cannot parse control spec {spec!r}: {exc}") from None
    return ControlSignal(times, levels)


def _key_lines(text: str) -> dict:
    """Map (section, key) to the 1-based line where the key is set."""
    where, section = {}, None
    for num, line in enumerate(text.splitlines(), start=1):
        head = re.match(r"\s*\[([^\]]+)\]", line)
        if head:
            section = head.group(1).strip().lower()
            continue
        item = re.match(r"\s*([^#;=:\s][^=:]*?)\s*[=:]", line)
        if item and section is not None:
            where[(section, item.group(1).strip().lower())] = num
    return where


def _convert(raw: str, kind, where: str):
    raw = raw.strip()
    try:
        if kind is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if kind == "optional_float":
            return None if raw.lower() in ("", "none") else float(raw)
        if kind == "float_list":
            return tuple(float(v) for v in raw.replace(",", " ").split())
        if kind == "int_list":
            return tuple(int(v) for v in raw.replace(",", " ").split())
        if kind == "str_list":
            return tuple(v for v in raw.replace(",", " ").split())
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"{where}: invalid value {raw!r} ({exc})") from None


_KINDS = {
    ("params", "phi_kind"): str,
    ("params", "phi_cap"): "optional_float",
    ("grid", "n"): int, ("grid", "m"): int, ("grid", "max_iter"): int,
    ("grid", "dt"): "optional_float", ("grid", "analytic_candidate"): bool,
    ("simulate", "control"): str,
    ("suites", "select"): "str_list", ("suites", "convergence_levels"): "int_list",
    ("run", "workers"): int, ("run", "seed"): int, ("run", "out"): str,
    ("sweep", "beta"): "float_list", ("sweep", "theta"): "float_list",
    ("sweep", "chi"): "float_list", ("sweep", "n"): int,
}
_INT_SUITE_KEYS = {f.name for f in dataclasses.fields(VerifyConfig)
                   if f.type in ("int", int)}


def _kind(section: str, key: str):
    if (section, key) in _KINDS:
        return _KINDS[(section, key)]
    if section == "suites" and key in _INT_SUITE_KEYS:
        return int
    return float


def read_config_text(text: str, source: str = "<config>", env=None) -> RunConfig:
    """Build a ``RunConfig`` from INI text plus environment overrides."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        prefix = f"{source}:{line}" if line else source
        raise ConfigError(f"{prefix}: {exc.message.splitlines()[0]}") from None
    lines = _key_lines(text)
    values: dict = {}
    for section in parser.sections():
        sec = section.lower()
        if sec not in _SECTIONS:
            raise ConfigError(f"{source}: unknown section [{section}]")
        for key, raw in parser.items(section):
            where = f"{source}:{lines.get((sec, key), '?')}"
            if key not in _SECTIONS[sec]:
                raise ConfigError(f"{where}: unknown key {key!r} in [{section}]")
            values[(sec, key)] = _convert(raw, _kind(sec, key), f"{where} [{sec}] {key}")
    env = os.environ if env is None else env
    for name, raw in env.items():
        if not name.startswith(ENV_PREFIX):
            continue
        rest = name[len(ENV_PREFIX):].lower()
        sec, _, key = rest.partition("_")
        if sec not in _SECTIONS or key not in _SECTIONS[sec]:
            raise ConfigError(f"environment variable {name} names no config key")
        values[(sec, key)] = _convert(raw, _kind(sec, key), f"environment {name}")
    return _build(values, source)


def load_config(path=None, env=None) -> RunConfig:
    """Read ``path`` (or only the environment when None)."""
    if path is None:
        return read_config_text("", "<defaults>", env)
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return read_config_text(text, str(path), env)


def _pick(values: dict, section: str) -> dict:
    return {k: v for (s, k), v in values.items() if s == section}


def _build(values: dict, source: str) -> RunConfig:
    try:
        raw = _pick(values, "params")
        phi_kw = {
            "kind": raw.pop("phi_kind", "constant"),
            "phi0": raw.pop("phi0", 0.01),
            "slope": raw.pop("phi_slope", 0.0),
            "cap": raw.pop("phi_cap", None),
        }
        params = ModelParams(phi=MortalityCurve(**phi_kw), **raw)
        grid = GridConfig(**_pick(values, "grid"))
        simulate = SimulateConfig(**_pick(values, "simulate"))
        parse_control(simulate.control).check(params)
        run = _pick(values, "run")
        suites_kw = _pick(values, "suites")
        select = tuple(suites_kw.pop("select", SUITES))
        for name in select:
            if name not in SUITES:
                raise ConfigError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
        if "seed" in run:
            suites_kw["seed"] = run["seed"]
        workers = run.get("workers", 1)
        if workers < 1:
            raise ConfigError(f"workers must be at least 1, got {workers}")
        suites = VerifyConfig(workers=workers, **suites_kw)
        sweep = SweepConfig(**_pick(values, "sweep"))
        if grid.n < 2 or sweep.n < 2:
            raise ConfigError("grid size n must be at least 2")
        if not (sweep.horizon > 0 and sweep.dt > 0 and simulate.horizon > 0 and simulate.dt > 0):
            raise ConfigError("horizons and step sizes must be positive")
    except DomainError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    return RunConfig(params, grid, simulate, suites, select, sweep, workers,
                     run.get("out", "."))


def dump_config(cfg: RunConfig) -> str:
    """INI text that reproduces ``cfg`` when read back."""
    p = cfg.params
    lines = ["[params]"]
    lines += [f"{k} = {getattr(p, k)!r}" for k in _PARAM_KEYS]
    lines += [f"phi_kind = {p.phi.kind}", f"phi0 = {p.phi.phi0!r}",
              f"phi_slope = {p.phi.slope!r}",
              f"phi_cap = {'none' if p.phi.cap is None else repr(p.phi.cap)}"]
    g = cfg.grid
    lines += ["", "[grid]", f"n = {g.n}", f"dt = {'none' if g.dt is None else repr(g.dt)}",
              f"m = {g.m}", f"tol = {g.tol!r}", f"max_iter = {g.max_iter}",
              f"analytic_candidate = {str(g.analytic_candidate).lower()}"]
    s = cfg.simulate
    lines += ["", "[simulate]", f"s0 = {s.s0!r}", f"i0 = {s.i0!r}", f"horizon = {s.horizon!r}",
              f"dt = {s.dt!r}", f"control = {s.control}", f"rel_tol = {s.rel_tol!r}"]
    v = cfg.suites
    lines += ["", "[suites]", f"select = {', '.join(cfg.select)}"]
    for f in dataclasses.fields(VerifyConfig):
        if f.name in ("workers", "seed"):
            continue
        val = getattr(v, f.name)
        text = ", ".join(map(str, val)) if isinstance(val, tuple) else repr(val)
        lines.append(f"{f.name} = {text}")
    w = cfg.sweep
    lines += ["", "[sweep]",
              f"beta = {', '.join(map(repr, w.beta))}", f"theta = {', '.join(map(repr, w.theta))}",
              f"chi = {', '.join(map(repr, w.chi))}", f"s0 = {w.s0!r}", f"i0 = {w.i0!r}",
              f"n = {w.n}", f"horizon = {w.horizon!r}", f"dt = {w.dt!r}"]
    lines += ["", "[run]", f"workers = {cfg.workers}", f"seed = {v.seed}", f"out = {cfg.out}"]
    return "\n".join(lines) + "\n"
