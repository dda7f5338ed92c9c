"""Command line entry point: ``fictdim <subcommand> ...``."""
from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from . import giant as gi
from .closed_forms import BarenblattSpec, barenblatt_eval
from .io import fmt, write_table
from .params import EquationParams, derive, range_condition, regime
from .scenario import EXIT_CONFIG, EXIT_OK, RunResult, run_scenario

OUT_ENV = "FICTDIM_OUT"


def _out_root(arg):
    return Path(arg or os.environ.get(OUT_ENV) or "out")


def _params(args) -> EquationParams:
    return EquationParams(args.n, args.p, args.q)


def cmd_params(args) -> int:
    P = _params(args)
    ex = derive(P)
    rows = [("n", P.n), ("p", P.p), ("q", P.q), ("d", ex.d), ("lambda", ex.lam),
            ("alpha", ex.alpha), ("spread", ex.spread), ("sigma", ex.sigma), ("mu", ex.mu),
            ("regime", regime(P).value), ("range", "true" if range_condition(P) else "false")]
    for k, v in rows:
        print(f"{k:<8} {v if isinstance(v, str) else f'{v:.12g}'}")
    return EXIT_OK


def cmd_barenblatt(args) -> int:
    P = _params(args)
    spec = BarenblattSpec(P, C=args.C, t_delay=args.t_delay)
    r = np.linspace(0.0, args.R, args.points)
    u = barenblatt_eval(spec, r, args.t)
    path = write_table(args.out, {"r": r, "u": u}, P,
                       {"kind": "barenblatt", "C": args.C, "t_delay": args.t_delay, "t": args.t})
    print(f"wrote {path}")
    return EXIT_OK


def cmd_giant(args) -> int:
    P = _params(args)
    prof = gi.fixed_point(P, tol=args.tol, nodes=args.nodes)
    path = gi.write_csv(prof, args.out)
    rep = prof.report
    print(f"integral_residual={fmt(rep['integral_residual'])} ode_residual={fmt(rep['ode_residual'])} "
          f"iterations={rep['iterations']} sup={fmt(prof.V.max())} csv={path}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    res = run_scenario(args.config, _out_root(args.out), seed=args.seed, strict=args.strict)
    print(res.line)
    return res.status


def _run_one(job):
    path, out, seed, strict = job
    return run_scenario(path, out, seed=seed, strict=strict)


def cmd_sweep(args) -> int:
    folder = Path(args.directory)
    files = sorted(folder.glob("*.ini"))
    if not files:
        print(f"status=config_error reason=no scenario files in {folder}")
        return EXIT_CONFIG
    jobs = [(f, _out_root(args.out), args.seed, args.strict) for f in files]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{r.name:<{width}}  {'PASS' if r.status == EXIT_OK else 'FAIL'}  code={r.status}  {r.reason}")
    root = _out_root(args.out)
    root.mkdir(parents=True, exist_ok=True)
    with (root / "sweep_summary.csv").open("w") as fh:
        fh.write("scenario,code,reason\n")
        for r in results:
            fh.write(f"{r.name},{r.status},\"{r.reason}\"\n")
    return max(r.status for r in results)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fictdim", description=__doc__)
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def eq_args(p):
        p.add_argument("--n", type=int, required=True)
        p.add_argument("--p", type=float, required=True)
        p.add_argument("--q", type=float, required=True)

    p = sub.add_parser("params", help="print derived exponents and the range condition")
    eq_args(p)
    p.set_defaults(func=cmd_params)

    p = sub.add_parser("barenblatt", help="sample the source-type solution to CSV")
    eq_args(p)
    p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--t-delay", type=float, default=0.0)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--R", type=float, default=4.0)
    p.add_argument("--points", type=int, default=401)
    p.add_argument("--out", default="barenblatt.csv")
    p.set_defaults(func=cmd_barenblatt)

    p = sub.add_parser("giant", help="compute the separable profile on the unit ball")
    eq_args(p)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--nodes", type=int, default=gi.DEFAULT_NODES)
    p.add_argument("--out", default="giant.csv")
    p.set_defaults(func=cmd_giant)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=None, help=f"output root (default ${OUT_ENV} or ./out)")
    common.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    common.add_argument("--strict", action="store_true", help="treat warnings as failures")

    p = sub.add_parser("simulate", parents=[common], help="run one scenario file")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", parents=[common], help="run every *.ini in a directory")
    p.add_argument("directory")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"status=config_error reason={exc}")
        return EXIT_CONFIG
    except gi.GiantError as exc:
        print(f"status=solver_error reason={exc}")
        return 3


if __name__ == "__main__":
    sys.exit(main())
