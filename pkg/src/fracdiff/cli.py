"""Command-line interface.

Subcommands::

    fracdiff run <scenario.ini>         full property-driven run
    fracdiff bundle [dir]               run every *.ini (default: shipped set)
    fracdiff converge <scenario.ini> --levels k
    fracdiff ml-eval --alpha A --beta B --z Z
    fracdiff solve <scenario.ini>       solve only, skip property checks
    fracdiff compare <scenario.ini>     comparison properties only
    fracdiff envelope <scenario.ini>    envelope properties only
    fracdiff monotone <scenario.ini>    monotone bracket iteration ([monotone])
    fracdiff steady <scenario.ini>      steady-state solve, CSV output
    fracdiff system <scenario.ini>      multi-order system run + verdicts

Exit status is 0 iff every verdict is PASS or NOT-APPLICABLE.  Output files
go to --outdir, else $FRACDIFF_OUTPUT_DIR, else the working directory.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .harness import (
    OUTPUT_DIR_ENV,
    Scenario,
    ScenarioError,
    convergence_study,
    run_bundle,
    run_scenario,
)


def _bundled_dir() -> str:
    return os.path.join(os.path.dirname(__file__), "scenarios")


def _add_outdir(p):
    p.add_argument(
        "--outdir",
        default=None,
        help=f"output directory (default: ${OUTPUT_DIR_ENV} or cwd)",
    )


def _report_exit(report) -> int:
    sys.stdout.write(report.render())
    return 0 if report.ok else 1


def _cmd_run(args) -> int:
    return _report_exit(run_scenario(args.scenario, outdir=args.outdir))


def _cmd_bundle(args) -> int:
    directory = args.directory or _bundled_dir()
    reports = run_bundle(directory, outdir=args.outdir)
    code = 0
    for report in reports:
        sys.stdout.write(report.render() + "\n")
        if not report.ok:
            code = 1
    return code


def _cmd_converge(args) -> int:
    rows = convergence_study(args.scenario, args.levels)
    sys.stdout.write(f"{'N':>8} {'error':>14} {'order':>8}\n")
    for N, err, order in rows:
        o = f"{order:8.3f}" if order is not None else " " * 8
        sys.stdout.write(f"{N:8d} {err:14.6e} {o}\n")
    return 0


def _cmd_ml_eval(args) -> int:
    from .mlf import MLParams, ml

    value = ml(MLParams(args.alpha, args.beta), args.z)
    sys.stdout.write(f"{float(value)!r}\n")
    return 0


def _cmd_solve(args) -> int:
    return _report_exit(
        run_scenario(args.scenario, outdir=args.outdir, property_types=())
    )


def _cmd_compare(args) -> int:
    return _report_exit(
        run_scenario(
            args.scenario, outdir=args.outdir, property_types=("comparison",)
        )
    )


def _cmd_envelope(args) -> int:
    return _report_exit(
        run_scenario(
            args.scenario, outdir=args.outdir, property_types=("envelope",)
        )
    )


def _cmd_monotone(args) -> int:
    from .expressions import expression_parse
    from .semilinear import BracketPair, monotone_iterate

    scn = Scenario.load(args.scenario)
    if scn.kind != "semilinear":
        raise ScenarioError(f"{scn.path}: monotone needs kind = semilinear")
    if not scn._cp.has_section("monotone"):
        raise ScenarioError(f"{scn.path}: missing [monotone] section")
    mono = scn._cp["monotone"]
    basis = scn.basis()
    grid = scn.grid()
    prob = scn.build_problem(basis)
    lower_ev = expression_parse(mono.get("lower", "0"))
    upper_ev = expression_parse(mono["upper"])
    pair = BracketPair(
        lambda x, t: lower_ev(x=x, t=t), lambda x, t: upper_ev(x=x, t=t)
    )
    out = monotone_iterate(
        pair, prob, grid,
        k_max=int(mono.get("k_max", 200)),
        gap_tol=float(mono.get("gap_tol", 1e-6)),
    )
    outdir = args.outdir or os.environ.get(OUTPUT_DIR_ENV) or os.getcwd()
    os.makedirs(outdir, exist_ok=True)
    out["u_star"].to_csv(os.path.join(outdir, f"{scn.name}.traj.csv"))
    sys.stdout.write(
        f"scenario: {scn.name}\n"
        f"monotone: converged={out['converged']} sweeps={out['sweeps']} "
        f"final_gap={out['gap_history'][-1]:.6e} M={out['M']:.6e}\n"
    )
    return 0 if out["converged"] else 1


def _cmd_steady(args) -> int:
    from .semilinear import steady_state_solve

    scn = Scenario.load(args.scenario)
    if scn.kind != "semilinear":
        raise ScenarioError(f"{scn.path}: steady needs kind = semilinear")
    basis = scn.basis()
    prob = scn.build_problem(basis)
    u = steady_state_solve(basis, prob.term, prob.a)
    outdir = args.outdir or os.environ.get(OUTPUT_DIR_ENV) or os.getcwd()
    os.makedirs(outdir, exist_ok=True)
    path = os.path.join(outdir, f"{scn.name}.steady.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("x,u\n")
        for xi, ui in zip(basis.grid, u):
            fh.write(f"{float(xi)!r},{float(ui)!r}\n")
    sys.stdout.write(
        f"scenario: {scn.name}\nsteady: sup={np.max(np.abs(u)):.6e} "
        f"written={path}\n"
    )
    return 0


def _cmd_system(args) -> int:
    scn = Scenario.load(args.scenario)
    if scn.kind != "system":
        raise ScenarioError(f"{scn.path}: system needs kind = system")
    return _report_exit(run_scenario(args.scenario, outdir=args.outdir))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fracdiff",
        description="Time-fractional diffusion solvers and property checks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, fn, needs_scenario in (
        ("run", _cmd_run, True),
        ("solve", _cmd_solve, True),
        ("compare", _cmd_compare, True),
        ("envelope", _cmd_envelope, True),
        ("monotone", _cmd_monotone, True),
        ("steady", _cmd_steady, True),
        ("system", _cmd_system, True),
    ):
        p = sub.add_parser(name)
        if needs_scenario:
            p.add_argument("scenario", help="scenario .ini file")
        _add_outdir(p)
        p.set_defaults(fn=fn)

    p = sub.add_parser("bundle")
    p.add_argument(
        "directory", nargs="?", default=None,
        help="directory of scenarios (default: shipped bundle)",
    )
    _add_outdir(p)
    p.set_defaults(fn=_cmd_bundle)

    p = sub.add_parser("converge")
    p.add_argument("scenario", help="scenario .ini file")
    p.add_argument("--levels", type=int, default=3)
    p.set_defaults(fn=_cmd_converge)

    p = sub.add_parser("ml-eval")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--z", type=float, required=True)
    p.set_defaults(fn=_cmd_ml_eval)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ScenarioError, ValueError, ArithmeticError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
