"""Command-line front end: solve, verify, spectrum, sweep and profile.

Exit codes: 0 ok, 2 solver diverged, 3 collapse to the trivial solution,
4 bad flags or inputs, 5 a selected check failed.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .geometry import b_range
from .grid import DEFAULT_H, DEFAULT_S, make_grid
from .linearized import (LinearizedOperator, certify_supersolution, inner, min_eigenvalue,
                         quadratic_form, refine)
from .nonlinearity import by_name
from .profile1d import build_profile
from .solver import (CollapsedToTrivial, Diverged, SaddleSolution, SolverConfig, load_solution,
                     solve)
from .verify import (check_asymptotics, check_signs, check_U_supersolution, check_uniqueness)

EXIT_OK, EXIT_DIVERGED, EXIT_TRIVIAL, EXIT_USAGE, EXIT_CHECK = 0, 2, 3, 4, 5
CHECKS = ("signs", "asymptotics", "uniqueness", "supersolutionU", "certificate")
SWEEP_HEADER = ["dim", "residual", "lambda_min", "b_lo", "b_hi", "signs_pass", "cert_pass"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o).__name__}")


def dumps(obj) -> str:
    """Sorted keys and repr floats, so identical runs give identical bytes."""
    return json.dumps(obj, sort_keys=True, indent=2, default=_json_default) + "\n"


def _write(path, obj):
    Path(path).write_text(dumps(obj))


def _positive_float(x):
    v = float(x)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {x}")
    return v


def _even_dim(x):
    v = int(x)
    if v < 2 or v % 2:
        raise argparse.ArgumentTypeError(f"dimension must be an even integer >= 2, got {x}")
    return v


def _dims(x):
    return [_even_dim(p) for p in x.split(",") if p]


def _add_grid_flags(p):
    p.add_argument("--S", type=_positive_float, default=DEFAULT_S,
                   help="outer radius; rounded to a multiple of h")
    p.add_argument("--h", type=_positive_float, default=DEFAULT_H)
    p.add_argument("--nonlinearity", default="allen-cahn",
                   help="allen-cahn, sine, or poly:a1,a3,... (odd coefficients)")


def _add_solver_flags(p):
    p.add_argument("--mode", choices=("newton", "monotone", "hybrid"), default="newton")
    p.add_argument("--tol", type=_positive_float, default=1e-8)
    p.add_argument("--max-iters", type=int, default=50)
    p.add_argument("--linear-solver", choices=("direct", "minres"), default="direct")
    p.add_argument("--start", choices=("from-U", "from-zero-plus-bump", "random"), default="from-U")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="saddlelab", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON file whose keys override flag defaults")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="compute a saddle solution and archive it")
    p.add_argument("--dim", type=_even_dim, required=True)
    _add_grid_flags(p)
    _add_solver_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--plot-data", help="whitespace file with columns s t u")

    p = sub.add_parser("verify", help="run named checks on an archived solution")
    p.add_argument("--sol", required=True)
    p.add_argument("--checks", default="signs,asymptotics,supersolutionU")
    p.add_argument("--b", default="auto", help="'auto' (midpoint of the admissible range) or a number")
    p.add_argument("--seed", type=int, default=0, help="seed of the random start (uniqueness)")
    p.add_argument("--out", help="JSON verdict bundle")

    p = sub.add_parser("spectrum", help="lowest eigenvalue of the linearized operator")
    p.add_argument("--sol", required=True)
    p.add_argument("--symmetry", choices=("st", "odd"), default="st")
    p.add_argument("--method", choices=("shift-invert", "inverse"), default="shift-invert")
    p.add_argument("--out", help="JSON spectrum report")
    p.add_argument("--xi-out", help="JSON archive of the eigenfield and its Q value")
    p.add_argument("--plot-data", help="whitespace file with columns s t xi")

    p = sub.add_parser("sweep", help="solve, verify and compute spectra over dimensions")
    p.add_argument("--dims", type=_dims, default=_dims("2,4,6,8,10,12,14,16"))
    _add_grid_flags(p)
    p.add_argument("--tol", type=_positive_float, default=1e-8)
    p.add_argument("--out", required=True, help="CSV file")

    p = sub.add_parser("profile", help="tabulate the one-dimensional profile")
    p.add_argument("--nonlinearity", default="allen-cahn")
    p.add_argument("--T-max", type=float, default=12.0)
    p.add_argument("--step", type=float, default=0.01)
    p.add_argument("--tabulated", action="store_true", help="force numerical tabulation")
    p.add_argument("--out", required=True)
    return parser


def _apply_config(parser, argv):
    """Parse argv with defaults taken from --config; unknown keys are usage errors."""
    argv = list(sys.argv[1:] if argv is None else argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    command = next((a for a in argv if a in COMMANDS), None)
    if known.config and command:
        try:
            cfg = json.loads(Path(known.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"cannot read config {known.config}: {exc}")
        if not isinstance(cfg, dict):
            parser.error("config must be a JSON object")
        sub = parser._subparsers._group_actions[0].choices[command]
        cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
        actions = {a.dest: a for a in sub._actions}
        unknown = sorted(set(cfg) - set(actions) - {"help"})
        if unknown:
            parser.error(f"unknown config keys for {command}: {', '.join(unknown)}")
        for k, v in cfg.items():
            act = actions[k]
            if act.type is not None and isinstance(v, (str, int, float)):
                try:
                    v = act.type(str(v) if act.type is _dims else v)
                except (TypeError, ValueError, argparse.ArgumentTypeError) as exc:
                    parser.error(f"config key {k}: {exc}")
            act.required = False
            sub.set_defaults(**{k: v})
    return parser.parse_args(argv)


# ---------------------------------------------------------------------------
# commands


def _solver_config(args) -> SolverConfig:
    return SolverConfig(mode=args.mode, tol=args.tol, max_iters=args.max_iters,
                        linear_solver=args.linear_solver)


def _plot_rows(path, sol: SaddleSolution, values):
    g = sol.grid
    s, t = g.triangle_coords()
    np.savetxt(path, np.column_stack([s, t, values]), fmt="%.10g")


def cmd_solve(args) -> int:
    n = by_name(args.nonlinearity)
    grid = make_grid(args.S, args.h, args.dim)
    prof = build_profile(n)
    sol = solve(grid, n, _solver_config(args), prof, start=args.start, seed=args.seed)
    sol.save(args.out)
    if args.plot_data:
        _plot_rows(args.plot_data, sol, sol.field.values)
    print(f"dim={grid.d.dim} S={grid.S:g} h={grid.h:g} mode={args.mode} start={args.start} "
          f"seed={args.seed} iterations={sol.iterations} residual={sol.residual:.3e} "
          f"time={sol.wall_time:.2f}s -> {args.out}")
    return EXIT_OK


def _resolve_b(arg: str, m_dim) -> float | None:
    if arg == "auto":
        rng = b_range(m_dim)
        return None if rng is None else 0.5 * (rng[0] + rng[1])
    return float(arg)


def cmd_verify(args) -> int:
    checks = [c for c in args.checks.split(",") if c]
    bad = sorted(set(checks) - set(CHECKS))
    if bad:
        raise UsageError(f"unknown checks: {', '.join(bad)}; choose from {', '.join(CHECKS)}")
    sol = load_solution(args.sol)
    g = sol.grid
    prof = build_profile(sol.nonlinearity)
    reports = []
    for c in checks:
        if c == "signs":
            rep = check_signs(sol, prof).to_json()
        elif c == "asymptotics":
            rep = check_asymptotics(sol, prof).to_json()
        elif c == "uniqueness":
            cfg = SolverConfig(mode="hybrid", tol=sol.config.tol)
            rep = check_uniqueness(g, sol.nonlinearity, cfg, seed=args.seed, prof=prof).to_json()
        elif c == "supersolutionU":
            rep = check_U_supersolution(g, prof).to_json()
        else:
            b = _resolve_b(args.b, g.d)
            if b is None:
                rep = {"check": "certificate", "m": g.m, "pass": False,
                       "params": {"S": g.S, "h": g.h, "b": args.b},
                       "message": f"no admissible b (2m<14): dimension {g.d.dim}"}
            else:
                cert = certify_supersolution(sol, b, fine=refine(sol, prof), prof=prof)
                rep = {"check": "certificate", "m": g.m, "pass": cert.passed,
                       "params": {"S": g.S, "h": g.h, "b": b}} | cert.to_json()
        reports.append(rep)
        line = f"{c}: {'pass' if rep['pass'] else 'FAIL'}"
        if "message" in rep:
            line += f" ({rep['message']})"
        print(line)
    bundle = {"solution": str(args.sol), "dim": g.d.dim, "reports": reports,
              "pass": all(r["pass"] for r in reports)}
    if args.out:
        _write(args.out, bundle)
    return EXIT_OK if bundle["pass"] else EXIT_CHECK


def spectrum_verdict(dim: int, lam: float, residual: float, h: float) -> str:
    """Reading of lambda_min in the (s, t) class; dimensions 8-12 are only reported."""
    if dim <= 6:
        return "unstable" if lam < -residual else "not detected at this truncation"
    if dim <= 12:
        return "open question (value reported, no verdict)"
    return "stable" if lam >= -h * h else "negative beyond allowance"


def cmd_spectrum(args) -> int:
    sol = load_solution(args.sol)
    g = sol.grid
    op = LinearizedOperator.at(sol)
    est = min_eigenvalue(op, symmetry=args.symmetry, method=args.method)
    verdict = spectrum_verdict(g.d.dim, est.lambda_min, est.residual, g.h)
    report = est.to_json(g) | {"dim": g.d.dim, "verdict": verdict, "allowance": g.h**2}
    print(f"dim={g.d.dim} lambda_min={est.lambda_min:.6g} residual={est.residual:.2e} "
          f"verdict: {verdict} ({est.note})")
    if args.out:
        _write(args.out, report)
    xi = est.eigenfield
    if args.xi_out:
        Q = quadratic_form(op, xi)
        _write(args.xi_out, {"m": g.m, "S": g.S, "h": g.h, "ordering": "square-row-major",
                             "Q": Q, "norm2": inner(op, xi, xi), "values": xi.ravel()})
    if args.plot_data:
        S_, T_ = g.meshgrid()
        np.savetxt(args.plot_data, np.column_stack([S_.ravel(), T_.ravel(), xi.ravel()]),
                   fmt="%.10g")
    return EXIT_OK


def sweep_row(dim: int, S: float, h: float, tol: float, nonlinearity: str = "allen-cahn") -> dict:
    n = by_name(nonlinearity)
    prof = build_profile(n)
    grid = make_grid(S, h, dim)
    sol = solve(grid, n, SolverConfig(tol=tol), prof)
    est = min_eigenvalue(LinearizedOperator.at(sol))
    rng = b_range(grid.d)
    cert_pass = False
    if rng is not None:
        cert = certify_supersolution(sol, 0.5 * (rng[0] + rng[1]), prof=prof)
        cert_pass = cert.passed
    return {"dim": dim, "residual": sol.residual, "lambda_min": est.lambda_min,
            "b_lo": "" if rng is None else rng[0], "b_hi": "" if rng is None else rng[1],
            "signs_pass": check_signs(sol, prof).passed, "cert_pass": cert_pass}


def cmd_sweep(args) -> int:
    rows = []
    for dim in args.dims:
        row = sweep_row(dim, args.S, args.h, args.tol, args.nonlinearity)
        rows.append(row)
        print(", ".join(f"{k}={row[k]}" for k in SWEEP_HEADER))
    with open(args.out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SWEEP_HEADER, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (str(v).lower() if isinstance(v, bool) else v) for k, v in r.items()})
    return EXIT_OK


def cmd_profile(args) -> int:
    prof = build_profile(by_name(args.nonlinearity), T_max=args.T_max, step=args.step,
                         mode="tabulated" if args.tabulated else None)
    prof.to_csv(args.out, step=args.step)
    print(f"{prof.nonlinearity.name} profile ({prof.mode}) -> {args.out}")
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "verify": cmd_verify, "spectrum": cmd_spectrum,
            "sweep": cmd_sweep, "profile": cmd_profile}


def main(argv=None) -> int:
    parser = build_parser()
    args = _apply_config(parser, argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except Diverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except CollapsedToTrivial as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TRIVIAL
    except (UsageError, ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
