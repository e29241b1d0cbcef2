"""Command-line interface: ``marketeq solve|generate|verify|experiment``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import instances
from .experiment import load_spec, run_experiment
from .market import Point, verify_equilibrium
from .network import EQUILIBRIUM_FORMS, NetworkProblem, check_equilibrium
from .solvers import SolverConfig, solve_cpl, solve_penalized, solve_pl
from .wireless import PenaltyConfig, WirelessProblem, to_market as wireless_market

EXIT_OK, EXIT_BUDGET, EXIT_NOT_EQUILIBRIUM, EXIT_INPUT = 0, 1, 2, 3

TRACE_HELP = (
    "Trace files are JSON lines, one object per row with keys kind (iterate | step | "
    "restart | stage), block_iters, block, gap, step, objective, accuracy, level, "
    "tolerance (null where not applicable), followed by a status line "
    "{kind: status, method, status, message, block_iters}.")
TABLE_HELP = (
    "Tables are CSV with header accuracy,<run label>...,unreached: one row per threshold, "
    "each cell the cumulative block iterations at the first iterate whose total gap is "
    "within the threshold (empty if never reached; such runs are listed under unreached).")


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # usage errors share the input-error exit code instead of argparse's 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _parser() -> argparse.ArgumentParser:
    ap = _Parser(
        prog="marketeq",
        description="Partial-linearization solvers for two-sided market equilibria.",
        epilog="Exit codes: 0 success or equilibrium verified, 1 budget exhausted, "
               "2 verification failed, 3 input error.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve an instance file", epilog=TRACE_HELP)
    p.add_argument("--instance", required=True, type=Path)
    p.add_argument("--method", choices=("pl", "cpl"), default="pl",
                   help="wireless instances with finite provider caps run the penalty "
                        "loop around pl")
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--theta", type=float, default=0.5)
    p.add_argument("--delta0", type=float, default=10.0)
    p.add_argument("--delta-rule", choices=("halve", "harmonic"), default="harmonic")
    p.add_argument("--accuracy", type=float, default=1e-6)
    p.add_argument("--max-block-iters", type=int, default=1_000_000)
    p.add_argument("--engine", choices=("auto", "python", "compiled"), default="auto")
    p.add_argument("--trace", type=Path, help="write the trace as JSON lines")
    p.add_argument("--out", type=Path, help="write the solution point as JSON")

    g = sub.add_parser("generate", help="write a random instance file")
    g.add_argument("--kind", choices=("network", "wireless"), default="network")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--nodes", type=int, default=20)
    g.add_argument("--arcs", type=int, default=114)
    g.add_argument("--od-pairs", type=int, default=10)
    g.add_argument("--paths-per-pair", type=int, default=50)
    g.add_argument("--buyers-per-pair", type=int, default=2)
    g.add_argument("--benchmark-buyers", action="store_true",
                   help="give every pair the buyers 30 - 0.5y and 28 - 0.3y")
    g.add_argument("--unit-arcs", action="store_true", help="use arc costs 1 + f")
    g.add_argument("--providers", type=int, default=3)
    g.add_argument("--users", type=int, default=4)
    g.add_argument("--capped", action="store_true", help="finite provider caps")
    g.add_argument("--out", type=Path, required=True)

    v = sub.add_parser("verify", help="check a point for equilibrium")
    v.add_argument("--instance", required=True, type=Path)
    v.add_argument("--point", required=True, type=Path,
                   help='JSON {"x": [...], "y": [...]} as written by solve --out')
    v.add_argument("--form", choices=EQUILIBRIUM_FORMS, default="kkt",
                   help="complementarity and implication apply to network instances")
    v.add_argument("--tol", type=float, default=1e-8)

    e = sub.add_parser("experiment", help="block iterations per accuracy threshold",
                       epilog=TABLE_HELP + " " + TRACE_HELP)
    e.add_argument("--spec", required=True, type=Path)
    e.add_argument("--out-table", required=True, type=Path)
    e.add_argument("--trace-dir", type=Path, help="write one trace per run here")
    return ap


def _load_instance(path: Path):
    try:
        return instances.load(path)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise InputError(f"cannot read instance {path}: {exc}") from exc


def _report_dict(report) -> dict:
    out = {"equilibrium": bool(report), "form": report.form,
           "prices": [None if not np.isfinite(p) else float(p) for p in report.prices]}
    if report.violation is not None:
        v = report.violation
        out["violation"] = {"commodity": v.commodity, "kind": v.kind, "margin": v.margin,
                            "lo": v.lo_label, "hi": v.hi_label, "message": v.message}
    return out


def _solve(args) -> int:
    problem = _load_instance(args.instance)
    try:
        cfg = SolverConfig(beta=args.beta, theta=args.theta, delta0=args.delta0,
                           delta_rule=args.delta_rule, accuracy=args.accuracy,
                           max_block_iters=args.max_block_iters, engine=args.engine)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    try:
        if isinstance(problem, WirelessProblem) and np.isfinite(problem.provider_caps).any():
            if args.method != "pl":
                raise InputError("finite provider caps are handled by the penalty loop; "
                                 "use --method pl")
            result = solve_penalized(problem, cfg, PenaltyConfig())
        elif isinstance(problem, (NetworkProblem, WirelessProblem)):
            result = (solve_pl if args.method == "pl" else solve_cpl)(problem, cfg)
        else:
            raise InputError("market instances can be verified but not solved")
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    if args.trace:
        with open(args.trace, "w") as fp:
            result.trace.write_jsonl(fp)
    if args.out:
        args.out.write_text(json.dumps(result.point.to_dict()) + "\n")
    summary = {"status": result.status, "block_iters": result.block_iterations,
               "accuracy": result.accuracy, **_report_dict(result.report)}
    print(json.dumps(summary))
    if not result.converged:
        return EXIT_BUDGET
    return EXIT_OK if result.report else EXIT_NOT_EQUILIBRIUM


def _generate(args) -> int:
    try:
        if args.kind == "network":
            params = {"seed": args.seed, "nodes": args.nodes, "arcs": args.arcs,
                      "od_pairs": args.od_pairs, "paths_per_pair": args.paths_per_pair,
                      "buyers_per_pair": args.buyers_per_pair,
                      "benchmark_buyers": args.benchmark_buyers, "unit_arcs": args.unit_arcs}
            problem = instances.generate_network(**params)
        else:
            params = {"seed": args.seed, "providers": args.providers, "users": args.users,
                      "capped": args.capped}
            problem = instances.generate_wireless(**params)
    except (ValueError, instances.GenerationError) as exc:
        raise InputError(str(exc)) from exc
    instances.save(problem, args.out, {"kind": args.kind, **params})
    return EXIT_OK


def _verify(args) -> int:
    problem = _load_instance(args.instance)
    try:
        w = Point.from_dict(json.loads(args.point.read_text()))
    except (OSError, ValueError, KeyError) as exc:
        raise InputError(f"cannot read point {args.point}: {exc}") from exc
    try:
        if isinstance(problem, NetworkProblem):
            report = check_equilibrium(problem, w, args.tol, args.form)
        else:
            if args.form != "kkt":
                raise InputError(f"form {args.form!r} applies to network instances only")
            market = wireless_market(problem) if isinstance(problem, WirelessProblem) else problem
            market.check_dims(w)
            report = verify_equilibrium(market, w, args.tol, active_tol=args.tol)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    print(json.dumps(_report_dict(report)))
    return EXIT_OK if report else EXIT_NOT_EQUILIBRIUM


def _experiment(args) -> int:
    try:
        spec = load_spec(args.spec)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise InputError(f"cannot read experiment spec {args.spec}: {exc}") from exc
    result = run_experiment(spec, args.trace_dir)
    args.out_table.write_text(result.to_csv())
    print(result.format())
    return EXIT_OK if result.complete else EXIT_BUDGET


COMMANDS = {"solve": _solve, "generate": _generate, "verify": _verify,
            "experiment": _experiment}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except InputError as exc:
        print(f"marketeq: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
