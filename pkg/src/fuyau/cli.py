"""Command line entry point: ``fuyau-lab <command> --config run.yaml``.

Exit codes: 0 success, 2 config or geometry error, 3 cone failure,
4 Newton failure, 5 continuation step underflow, 6 failed property check.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, build_problem, load_config
from .continuation import (ContinuationOptions, NewtonOptions, initial_solution, newton_solve_at_t, renormalize,
                           run_continuation)
from .errors import ConfigError, ContinuationError, FuYauError
from .fieldio import dump_field
from .monitors import full_report, lemma21_check

log = logging.getLogger("fuyau")

PROPERTY_FAILURE = 6
UNIQUENESS_TOL = 1e-7


def _options(cfg: RunConfig, direction: str = "forward") -> ContinuationOptions:
    newton = NewtonOptions(tol=cfg.tol_newton, krylov_rtol=cfg.tol_krylov, maxiter=cfg.newton_maxiter)
    return ContinuationOptions(dt0=cfg.dt0, dt_min=cfg.dt_min, dt_max=cfg.dt_max, direction=direction,
                               newton=newton)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=float) + "\n")


def _state_report(state, data) -> dict:
    from .residual import residual_hessian

    rep = full_report(state, data).as_dict()
    rep.update(state.summary())
    rep["hessian_residual_sup"] = residual_hessian(state.phi, data, state.t).sup
    if state.t == 1.0:
        for f in ("exp", "identity"):
            l21 = lemma21_check(state.phi, data, f)
            rep[f"lemma21_{f}"] = {"lhs": l21.lhs, "rhs": l21.rhs, "gap": l21.gap,
                                   "relative_gap": l21.relative_gap, "passed": l21.passed}
    return rep


def _solve_to_one(cfg: RunConfig, data, out: Path, tag: str = ""):
    """Forward continuation with trace CSV and phi dump; partial artifacts are kept on failure."""
    suffix = f"_{tag}" if tag else ""
    try:
        trace = run_continuation(data, _options(cfg))
    except ContinuationError as exc:
        if exc.trace is not None and exc.trace.states:
            exc.trace.to_csv(out / f"trace{suffix}.csv")
            dump_field(out / f"phi_last_good{suffix}.fyfd", data.grid, exc.trace.final.phi, name="phi")
        raise
    trace.to_csv(out / f"trace{suffix}.csv")
    dump_field(out / f"phi{suffix}.fyfd", data.grid, trace.final.phi, name="phi")
    return trace


def cmd_solve(cfg: RunConfig, out: Path) -> int:
    data = build_problem(cfg)
    trace = _solve_to_one(cfg, data, out)
    report = {"command": "solve", "scenario": cfg.scenario, "status": "ok",
              "steps": len(trace.states), "failures": [list(f) for f in trace.failures],
              "final": _state_report(trace.final, data)}
    _write_json(out / "report.json", report)
    fin = trace.final
    print(f"solve: reached t=1 in {len(trace.states) - 1} steps; residual {fin.residual_sup:.3e}; "
          f"margins ({fin.cone_margins[0]:.3e}, {fin.cone_margins[1]:.3e})")
    return 0


def _require_negative_alpha(cfg: RunConfig, what: str) -> None:
    if cfg.alpha >= 0:
        raise ConfigError(f"{what} is only meaningful for alpha < 0 (got alpha = {cfg.alpha:g})")


def cmd_uniqueness(cfg: RunConfig, out: Path) -> int:
    _require_negative_alpha(cfg, "uniqueness")
    data = build_problem(cfg)
    trace = _solve_to_one(cfg, data, out, "a")
    phi_a = trace.final.phi
    phi0 = initial_solution(data)
    x = data.grid.coords()
    start = renormalize(phi0 + cfg.perturbation * np.sin(x[1]), data)
    st_b = newton_solve_at_t(start, 1.0, data, _options(cfg).newton)
    dump_field(out / "phi_b.fyfd", data.grid, st_b.phi, name="phi")
    diff = float(np.max(np.abs(phi_a - st_b.phi)))
    report = {"command": "uniqueness", "scenario": cfg.scenario,
              "init_a": "continuation from the t=0 solution",
              "init_b": f"Newton at t=1 from phi_0 + {cfg.perturbation:g} sin x2",
              "sup_difference": diff, "tolerance": UNIQUENESS_TOL,
              "newton_iters_b": st_b.newton_iters, "residual_a": trace.final.residual_sup,
              "residual_b": st_b.residual_sup}
    ok = diff <= UNIQUENESS_TOL
    if cfg.backward:
        back = run_continuation(data, _options(cfg, "backward"), phi_start=st_b.phi)
        d0 = float(np.max(np.abs(back.final.phi - phi0)))
        report["backward_t0_difference"] = d0
        report["backward_steps"] = len(back.states)
        ok = ok and d0 <= UNIQUENESS_TOL
    report["passed"] = ok
    _write_json(out / "report.json", report)
    print(f"uniqueness: sup|phi_a - phi_b| = {diff:.3e} -> {'PASS' if ok else 'FAIL'}")
    return 0 if ok else PROPERTY_FAILURE


def cmd_monotonicity(cfg: RunConfig, out: Path) -> int:
    _require_negative_alpha(cfg, "monotonicity")
    As = cfg.A_list or [cfg.A, 2 * cfg.A]
    if len(As) < 2 or any(b <= a for a, b in zip(As, As[1:])):
        raise ConfigError(f"A_list must be strictly increasing with at least two entries, got {As}")
    data0 = build_problem(cfg)
    phis = []
    for A in As:
        tr = _solve_to_one(cfg, data0.with_(A=A), out, f"A{A:g}")
        phis.append(tr.final.phi)
    pairs = []
    for (A, phi), (At, phit) in zip(zip(As, phis), zip(As[1:], phis[1:])):
        gap = phi - phit
        pairs.append({"A": A, "A_tilde": At, "min_gap": float(gap.min()), "max_gap": float(gap.max()),
                      "log_ratio": math.log(At / A)})
    ok = all(p["min_gap"] > 0 for p in pairs)
    _write_json(out / "report.json", {"command": "monotonicity", "scenario": cfg.scenario, "A_list": As,
                                      "pairs": pairs, "passed": ok})
    for p in pairs:
        print(f"monotonicity: A={p['A']:g} vs {p['A_tilde']:g}: min gap {p['min_gap']:.6e} "
              f"(log ratio {p['log_ratio']:.6e})")
    return 0 if ok else PROPERTY_FAILURE


def cmd_check(cfg: RunConfig, out: Path) -> int:
    from .checks import run_suite

    data = build_problem(cfg)
    results = run_suite(data, cfg.seed)
    for r in results:
        print(r.line())
    ok = all(r.passed for r in results)
    _write_json(out / "report.json", {"command": "check", "scenario": cfg.scenario, "passed": ok,
                                      "N": cfg.N, "n": cfg.n, "results": [r.as_dict() for r in results]})
    print(f"check: {sum(r.passed for r in results)}/{len(results)} passed")
    return 0 if ok else PROPERTY_FAILURE


def cmd_validate_geometry(cfg: RunConfig, out: Path) -> int:
    from .forms import make_grid
    from .geometry import build_metric
    from .linearized import solve_h_full

    grid = make_grid(cfg.n, cfg.N)
    omega = build_metric(grid, cfg.metric)
    info = omega.summary()
    hs = solve_h_full(omega, seed=cfg.seed)
    info.update({"h_defect": hs.defect, "h_min": float(hs.h.min()), "v0_min": float(hs.v0.min()),
                 "v0_positive": bool(hs.v0.min() > 0)})
    dump_field(out / "h.fyfd", grid, hs.h, name="h")
    _write_json(out / "geometry.json", info)
    for k in sorted(info):
        print(f"{k}: {info[k]}")
    return 0


COMMANDS = {
    "solve": cmd_solve,
    "uniqueness": cmd_uniqueness,
    "monotonicity": cmd_monotonicity,
    "check": cmd_check,
    "validate-geometry": cmd_validate_geometry,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fuyau-lab", description="Fu-Yau equation solver on flat tori")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--out", help="output directory (default: config 'out' or runs/<scenario>)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    out = None
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("seed must be non-negative")
            cfg.seed = args.seed
        out = Path(args.out or cfg.out or f"runs/{cfg.scenario}")
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out)
    except FuYauError as exc:
        print(f"fuyau-lab {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        if out is None and args.out:
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
        if out is not None:
            fail = {"command": args.command, "status": "failed", "error": type(exc).__name__,
                    "message": str(exc), "exit_code": exc.exit_code}
            for attr in ("kind", "margins", "max_eps", "last_t"):
                if hasattr(exc, attr):
                    fail[attr] = getattr(exc, attr)
            _write_json(out / "report.json", fail)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
