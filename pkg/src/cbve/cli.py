"""Command-line interface.

Subcommands: ``validate`` (admissibility report), ``solve`` (backward
solution CSV), ``moments`` (mean-system CSV), ``simulate`` (path event
CSV), ``approx`` (finite-activity approximation gap table) and ``verify``
(a per-config verification battery with PASS/FAIL lines).

Exit codes: 0 success, 2 configuration error, 3 admissibility failure,
4 numerical failure, 5 verification failure.  Set ``CBVE_LOG=debug`` or
``info`` for diagnostics.
"""
from __future__ import annotations

import argparse
import logging
import math
import os
import sys

import numpy as np

from .config import RunConfig, emit_config, load_config
from .environment import (
    finite_activity_approximation,
    special_to_general,
)
from .errors import AdmissibilityError, CBVEError, ConfigError, NumericalError
from .measures import StieltjesMeasure
from .moments import finite_diff_check, solve_moment
from .simulator import SeedSpec, mc_laplace, mc_mean, simulate_path
from .solver import (
    check_flow,
    cumulant_upper_bound,
    h_transform_coefficients,
    h_transform_solution,
    solve_general,
    solve_special_picard,
)

log = logging.getLogger("cbve")

_APPROX_LEVELS = (1, 2, 4, 8, 16, 32)


def _setup_logging() -> None:
    level = os.environ.get("CBVE_LOG", "").strip().lower()
    if level in ("debug", "info"):
        logging.basicConfig(
            level=logging.DEBUG if level == "debug" else logging.INFO,
            format="%(levelname)s %(name)s: %(message)s",
        )


def _pair(text: str):
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected 'a,b', got {text!r}")
    try:
        return float(parts[0]), float(parts[1])
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _write(args, lines) -> None:
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _load(args) -> RunConfig:
    cfg = load_config(args.config)
    refine = getattr(args, "refine", 1) or 1
    if refine > 1:
        if cfg.kind == "environment":
            cfg = RunConfig("environment", environment=cfg.environment.refined(refine))
        else:
            cfg = RunConfig("special_form", special_form=cfg.special_form.refined(refine))
    return cfg


def _as_environment(cfg: RunConfig):
    if cfg.kind == "environment":
        return cfg.environment
    return special_to_general(cfg.special_form)


def _terminal(cfg: RunConfig, args) -> float:
    t = args.t if args.t is not None else cfg.horizon
    idx = cfg.grid.index_of(t)
    return float(cfg.grid.nodes[idx])


def cmd_validate(args) -> int:
    cfg = _load(args)
    env = _as_environment(cfg)
    report = env.validation
    lines = [
        f"ok: {report.ok}",
        f"moment_values: {report.moment_values[0]:.17g},"
        f" {report.moment_values[1]:.17g}",
        f"delta_max: {report.delta_max[0]:.17g}, {report.delta_max[1]:.17g}",
        f"bottlenecks: {', '.join(f'{t:.17g}' for t in report.bottleneck_times) or '-'}",
    ]
    lines.extend(f"message: {m}" for m in report.messages)
    _write(args, lines)
    return 0 if report.ok else 3


def cmd_solve(args) -> int:
    cfg = _load(args)
    t = _terminal(cfg, args)
    lam = args.lam or (1.0, 1.0)
    if cfg.kind == "environment":
        sol = solve_general(cfg.environment, t, lam)
    else:
        sol = solve_special_picard(cfg.special_form, t, lam)
    lines = ["r,v1,v2"]
    nodes = cfg.grid.nodes
    for k in range(sol.v.shape[0]):
        lines.append(f"{nodes[k]:.17g},{sol.v[k, 0]:.17g},{sol.v[k, 1]:.17g}")
    _write(args, lines)
    return 0


def cmd_moments(args) -> int:
    cfg = _load(args)
    env = _as_environment(cfg)
    t = _terminal(cfg, args)
    lam = args.lam or (1.0, 1.0)
    sol = solve_moment(env, t, lam)
    lines = ["r,pi1,pi2"]
    nodes = cfg.grid.nodes
    for k in range(sol.pi.shape[0]):
        lines.append(f"{nodes[k]:.17g},{sol.pi[k, 0]:.17g},{sol.pi[k, 1]:.17g}")
    _write(args, lines)
    return 0


def cmd_simulate(args) -> int:
    cfg = _load(args)
    if cfg.kind != "special_form":
        raise ConfigError(
            "simulate requires a special_form configuration "
            "(finite-activity coefficients)"
        )
    t = _terminal(cfg, args)
    x0 = args.x0 or (1.0, 0.0)
    n_paths = args.paths or 1
    lines = ["path_id,time,kind,type_source,dx1,dx2,x1,x2"]
    for pid in range(n_paths):
        rng = SeedSpec(args.seed).generator(pid)
        _, events = simulate_path(cfg.special_form, x0, t, rng)
        for ev in events:
            lines.append(
                f"{pid},{ev.time:.17g},{ev.kind},{ev.type_source},"
                f"{ev.delta[0]:.17g},{ev.delta[1]:.17g},"
                f"{ev.x_after[0]:.17g},{ev.x_after[1]:.17g}"
            )
    _write(args, lines)
    return 0


def cmd_approx(args) -> int:
    cfg = _load(args)
    env = _as_environment(cfg)
    t = _terminal(cfg, args)
    lam = args.lam or (1.0, 1.0)
    reference = solve_general(env, t, lam)
    lines = ["n,sup_gap"]
    for n in _APPROX_LEVELS:
        sf = finite_activity_approximation(env, n)
        sol = solve_special_picard(sf, t, lam)
        gap = float(np.max(np.abs(sol.v - reference.v)))
        lines.append(f"{n},{gap:.17g}")
    _write(args, lines)
    return 0


class _Battery:
    def __init__(self):
        self.lines = []
        self.ok = True

    def check(self, name: str, passed: bool, detail: str) -> None:
        self.ok &= passed
        self.lines.append(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")


def _verify_environment(cfg: RunConfig, args, battery: _Battery) -> None:
    env = cfg.environment
    report = env.validation
    battery.check("admissibility", report.ok,
                  f"delta_max={max(report.delta_max):.3g}")
    if not report.ok:
        return
    t = _terminal(cfg, args)
    lam = args.lam or (1.0, 1.0)
    it = env.grid.index_of(t)
    ir, isx = it // 4, it // 2
    r = float(env.grid.nodes[ir])
    s = float(env.grid.nodes[isx])
    residual = check_flow(env, r, s, t, lam)
    fine = env.refined(4)
    residual4 = check_flow(fine, r, s, t, lam)
    battery.check("flow_residual", residual <= 1e-5,
                  f"residual={residual:.3e} (tol 1e-05)")
    battery.check(
        "flow_refinement",
        residual4 <= max(residual / 3.0, 1e-12),
        f"refine4 residual={residual4:.3e} vs base {residual:.3e}",
    )
    sol = solve_general(env, t, lam)
    worst = 0.0
    for i in (1, 2):
        bound = cumulant_upper_bound(env, i, 0.0, t, lam)
        worst = max(worst, float(np.max(sol.v[:, i - 1])) - bound)
    battery.check("upper_bound", worst <= 1e-9,
                  f"max excess over bound={worst:.3e}")
    res = finite_diff_check(env, t, lam, 1e-3)
    scale = max(1.0, float(np.max(np.abs(solve_moment(env, t, lam).pi))))
    scaled = max(res) / scale
    battery.check("moment_finite_diff", scaled <= 5e-3,
                  f"scaled residual={scaled:.3e} (tol 5e-03)")
    lam_big = (1.3 * lam[0], 1.3 * lam[1])
    sol_big = solve_general(env, t, lam_big)
    mono = float(np.min(sol_big.v - sol.v))
    battery.check("lambda_monotonicity", mono >= -1e-12,
                  f"min increment={mono:.3e}")


def _verify_special(cfg: RunConfig, args, battery: _Battery) -> None:
    sf = cfg.special_form
    t = _terminal(cfg, args)
    lam = args.lam or (1.0, 1.0)
    sol = solve_special_picard(sf, t, lam)
    min_inc = min(sol.picard_min_increments) if sol.picard_min_increments else 0.0
    battery.check("picard_monotonicity", min_inc >= -1e-12,
                  f"min iterate increment={min_inc:.3e}")
    max_val = max(sol.picard_iterate_maxima) if sol.picard_iterate_maxima else 0.0
    battery.check(
        "picard_bound",
        max_val <= sol.picard_bound + 1e-9,
        f"max iterate={max_val:.6g} vs bound {sol.picard_bound:.6g}",
    )
    env = special_to_general(sf)
    general = solve_general(env, t, lam)
    gap = float(np.max(np.abs(general.v - sol.v)))
    battery.check("special_general_agreement", gap <= 1e-6,
                  f"sup gap={gap:.3e} (tol 1e-06)")
    # pure-jump scale change at two interior nodes: exact round trip
    grid = sf.grid
    n = grid.nodes.size
    zeta1 = StieltjesMeasure(grid, np.zeros(grid.n_cells),
                             ((float(grid.nodes[n // 3]), 0.4),))
    zeta2 = StieltjesMeasure(grid, np.zeros(grid.n_cells),
                             ((float(grid.nodes[(2 * n) // 3]), -0.3),))
    transformed = h_transform_coefficients(sf, zeta1, zeta2)
    direct = solve_special_picard(transformed, t, lam)
    z1t = zeta1.node_cumulatives[grid.index_of(t)]
    z2t = zeta2.node_cumulatives[grid.index_of(t)]
    base = solve_special_picard(
        sf, t, (lam[0] * math.exp(-z1t), lam[1] * math.exp(-z2t)))
    mapped = h_transform_solution(base, zeta1, zeta2, lam)
    rt_gap = float(np.max(np.abs(direct.v - mapped.v)))
    battery.check("h_transform_round_trip", rt_gap <= 1e-8,
                  f"sup gap={rt_gap:.3e} (tol 1e-08)")
    if args.paths and args.paths >= 100:
        x0 = args.x0 or (1.0, 1.0)
        lap = mc_laplace(sf, x0, t, lam, args.paths, args.seed)
        battery.check("mc_laplace", abs(lap.z_score) <= 3.0,
                      f"z={lap.z_score:.2f} est={lap.estimate:.6g}"
                      f" target={lap.target:.6g}")
        mean = mc_mean(sf, x0, t, lam, args.paths, args.seed + 1)
        battery.check("mc_mean", abs(mean.z_score) <= 3.0,
                      f"z={mean.z_score:.2f} est={mean.estimate:.6g}"
                      f" target={mean.target:.6g}")


def cmd_verify(args) -> int:
    cfg = _load(args)
    battery = _Battery()
    if cfg.kind == "environment":
        _verify_environment(cfg, args, battery)
    else:
        _verify_special(cfg, args, battery)
    _write(args, battery.lines)
    return 0 if battery.ok else 5


def cmd_emit(args) -> int:
    import json

    cfg = _load(args)
    _write(args, [json.dumps(emit_config(cfg.model), indent=2, sort_keys=True)])
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cbve",
        description="Two-type continuous-state branching processes in varying "
                    "environments: solve, verify and simulate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    specs = (
        ("validate", cmd_validate, "admissibility report"),
        ("solve", cmd_solve, "backward solution CSV (r, v1, v2)"),
        ("moments", cmd_moments, "mean-system CSV (r, pi1, pi2)"),
        ("simulate", cmd_simulate, "path event CSV"),
        ("approx", cmd_approx, "finite-activity approximation gap table"),
        ("verify", cmd_verify, "verification battery with PASS/FAIL lines"),
        ("emit", cmd_emit, "canonical JSON for the parsed configuration"),
    )
    for name, func, help_text in specs:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="path to a JSON config")
        p.add_argument("--t", type=float, default=None, help="terminal time")
        p.add_argument("--lambda", dest="lam", type=_pair, default=None,
                       metavar="A,B", help="terminal pair")
        p.add_argument("--x0", type=_pair, default=None, metavar="A,B",
                       help="initial state for simulation")
        p.add_argument("--paths", type=int, default=None, help="number of paths")
        p.add_argument("--seed", type=int, default=0, help="master seed")
        p.add_argument("--refine", type=int, default=1,
                       help="grid refinement factor")
        p.add_argument("--out", default=None, help="output file (default stdout)")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except AdmissibilityError as exc:
        print(f"admissibility failure: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4
    except CBVEError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
