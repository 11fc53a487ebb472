"""Command-line entry point: ``lockdown-hjb <subcommand>``.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure
(non-convergence or a failed verification suite).
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import itertools
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config, parse_control
from .cost import evaluate_J, tail_bound
from .dynamics import constants, integrate_forward
from .exceptions import (
    ConfigError,
    ConvergenceError,
    DomainError,
    StepSizeError,
)
from .hjb_solver import ValueField, interpolate, solve_value_function
from .policy import default_horizon, simulate_closed_loop
from .verify import SUITES, run_all

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fmt(x) -> str:
    return format(float(x), ".12g")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI run configuration")
    common.add_argument("--seed", type=int, help="seed for randomized suites")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--workers", type=int, help="parallel workers")
    common.add_argument("-v", "--verbose", action="store_true", help="log solver progress")

    parser = _Parser(prog="lockdown-hjb", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", parents=[common], help="integrate the dynamics under a control")
    p.add_argument("--x0", nargs=2, type=float, metavar=("S", "I"))
    p.add_argument("--control", help='constant level "0.3" or "t0:l0, t1:l1, ..."')
    p.add_argument("--horizon", type=float)
    p.add_argument("--dt", type=float)

    p = sub.add_parser("solve", parents=[common], help="compute the value function")
    p.add_argument("--n", type=int)
    p.add_argument("--dt", type=float)
    p.add_argument("--m", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--refine", action="store_true",
                   help="also solve at 2n and report the sup-norm change")

    p = sub.add_parser("policy", parents=[common], help="closed-loop run of the feedback")
    p.add_argument("--field", metavar="NPZ", help="value field file (default OUT/value_field.npz)")
    p.add_argument("--x0", nargs=2, type=float, metavar=("S", "I"))
    p.add_argument("--horizon", type=float)

    p = sub.add_parser("verify", parents=[common], help="run the property suites")
    p.add_argument("--suite", action="append", metavar="NAME",
                   help=f"suite to run (repeatable): {', '.join(SUITES)}")
    p.add_argument("--field", metavar="NPZ", help="verify this field instead of solving one")

    p = sub.add_parser("sweep", parents=[common], help="solve and simulate over a parameter grid")
    p.add_argument("--x0", nargs=2, type=float, metavar=("S", "I"))
    return parser


def _setup(args) -> tuple[RunConfig, Path]:
    cfg = load_config(args.config)
    if args.workers is not None:
        if args.workers < 1:
            raise ConfigError(f"--workers must be at least 1, got {args.workers}")
        cfg = dataclasses.replace(cfg, workers=args.workers,
                                  suites=cfg.suites.replace(workers=args.workers))
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, suites=cfg.suites.replace(seed=args.seed))
    out = Path(args.out if args.out is not None else cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return cfg, out


def cmd_simulate(args, cfg: RunConfig, out: Path) -> int:
    sim = cfg.simulate
    x0 = tuple(args.x0) if args.x0 else sim.x0
    control = parse_control(args.control if args.control is not None else sim.control)
    horizon = args.horizon if args.horizon is not None else sim.horizon
    dt = args.dt if args.dt is not None else sim.dt
    traj = integrate_forward(x0, control, horizon, dt, cfg.params)
    path = out / "trajectory.csv"
    traj.to_csv(path)
    cost, trunc = evaluate_J(x0, control, cfg.params, rel_tol=sim.rel_tol, dt=dt)
    print(f"wrote {path} ({traj.times.size} rows)")
    print(f"J = {_fmt(cost)} (truncated at T = {_fmt(trunc)}, "
          f"tail bound {_fmt(tail_bound(cfg.params, trunc))})")
    return EXIT_OK


def cmd_solve(args, cfg: RunConfig, out: Path) -> int:
    g = cfg.grid
    n = args.n if args.n is not None else g.n
    kw = dict(
        dt=args.dt if args.dt is not None else g.dt,
        m=args.m if args.m is not None else g.m,
        tol=args.tol if args.tol is not None else g.tol,
        max_iter=args.max_iter if args.max_iter is not None else g.max_iter,
        analytic_candidate=g.analytic_candidate,
        workers=cfg.workers,
    )
    field = solve_value_function(cfg.params, n=n, **kw)
    field.to_csv(out / "value_field.csv")
    field.save(out / "value_field.npz")
    k_f = constants(cfg.params)[2]
    upper = k_f / cfg.params.rho
    vmin, vmax = float(field.values.min()), float(field.values.max())
    ok = vmin >= 0 and vmax <= upper + 1e-9
    print(f"n = {n}, dt = {_fmt(field.dt)}, iterations = {field.n_iter}, "
          f"residual = {_fmt(field.residual)}")
    print(f"values in [{_fmt(vmin)}, {_fmt(vmax)}], bound [0, {_fmt(upper)}]: "
          f"{'ok' if ok else 'VIOLATED'}")
    print(f"wrote {out / 'value_field.csv'} and {out / 'value_field.npz'}")
    if args.refine:
        kw["dt"] = None if args.dt is None and g.dt is None else kw["dt"] / 2.0
        fine = solve_value_function(cfg.params, n=2 * n, **kw)
        gap = float(np.max(np.abs(interpolate(fine, field.grid.nodes) - field.values)))
        print(f"refinement n = {n} -> {2 * n}: sup-norm change {_fmt(gap)} "
              f"(h + dt = {_fmt(field.h + field.dt)})")
    return EXIT_OK if ok else EXIT_NUMERICAL


def _load_field(path: Path, cfg: RunConfig) -> ValueField:
    try:
        field = ValueField.load(path)
    except OSError as exc:
        raise ConfigError(f"cannot read value field {path}: {exc}") from None
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{path} is not a value field file: {exc}") from None
    if field.params != cfg.params:
        diffs = [k for k, v in cfg.params.to_dict().items() if field.params.to_dict()[k] != v]
        raise ConfigError(f"value field {path} was solved with different parameters "
                          f"({', '.join(diffs)}); re-run solve with this config")
    return field


def cmd_policy(args, cfg: RunConfig, out: Path) -> int:
    field = _load_field(Path(args.field) if args.field else out / "value_field.npz", cfg)
    x0 = tuple(args.x0) if args.x0 else cfg.simulate.x0
    horizon = args.horizon if args.horizon is not None else default_horizon(cfg.params)
    report = simulate_closed_loop(field, x0, horizon)
    path = out / "policy.csv"
    report.to_csv(path)
    value = interpolate(field, x0)
    k_f = constants(cfg.params)[2]
    tol = 20.0 * (field.h + field.dt) * k_f / cfg.params.rho
    print(f"wrote {path} ({report.times.size} rows)")
    print(f"closed-loop cost = {_fmt(report.cost)} (+ tail <= {_fmt(report.tail_bound)}), "
          f"V(x0) = {_fmt(value)}, gap = {_fmt(abs(report.cost - value))}, "
          f"tolerance = {_fmt(tol)}")
    print(f"peak infected = {_fmt(report.peak_i)}, deaths = {_fmt(report.deaths)}")
    return EXIT_OK


def cmd_verify(args, cfg: RunConfig, out: Path) -> int:
    suites = args.suite if args.suite else list(cfg.select)
    for name in suites:
        if name not in SUITES:
            raise ConfigError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    field = _load_field(Path(args.field), cfg) if args.field else None
    report = run_all(cfg.params, cfg.suites, suites, field)
    text = report.to_text()
    (out / "verify_report.txt").write_text(text)
    (out / "verify_report.json").write_text(report.to_json())
    sys.stdout.write(text)
    return EXIT_OK if report.passed else EXIT_NUMERICAL


def _sweep_point(cfg: RunConfig, x0, beta, theta, chi):
    params = dataclasses.replace(cfg.params, beta=beta, theta=theta, chi=chi)
    g = cfg.grid
    field = solve_value_function(params, n=cfg.sweep.n, m=g.m, tol=g.tol, max_iter=g.max_iter,
                                 analytic_candidate=g.analytic_candidate)
    # one common horizon so peak and death totals compare across the grid
    report = simulate_closed_loop(field, x0, cfg.sweep.horizon, cfg.sweep.dt)
    return [beta, theta, chi, interpolate(field, x0), report.peak_i, report.deaths]


def cmd_sweep(args, cfg: RunConfig, out: Path) -> int:
    sw = cfg.sweep
    x0 = tuple(args.x0) if args.x0 else (sw.s0, sw.i0)
    points = list(itertools.product(sw.beta, sw.theta, sw.chi))
    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            rows = list(pool.map(lambda pt: _sweep_point(cfg, x0, *pt), points))
    else:
        rows = [_sweep_point(cfg, x0, *pt) for pt in points]
    path = out / "sweep.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["beta", "theta", "chi", "V_at_x0", "peak_i", "total_deaths"])
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    print(f"wrote {path} ({len(rows)} parameter points)")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "solve": cmd_solve,
    "policy": cmd_policy,
    "verify": cmd_verify,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg, out = _setup(args)
        return COMMANDS[args.command](args, cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DomainError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConvergenceError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except StepSizeError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
