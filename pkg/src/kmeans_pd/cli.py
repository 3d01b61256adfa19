"""Command-line entry point: ``kmeans-pd <subcommand> [options]``.

Exit codes: 0 success, 1 input error (including bad flags), 2 a checked
mathematical property failed (LMP audit violation, gap below the bound,
constants out of range).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from kmeans_pd import __version__
from kmeans_pd.constants import constants_table, delta_old_star, delta_star, fixed_point_residual, rho_new, rho_old
from kmeans_pd.errors import InputError, VerificationError
from kmeans_pd.gap import GAP_RATIO, gap_candidates, make_pentagons, verify_gap
from kmeans_pd.geometry import (
    DEFAULT_MULTISET_BOUND,
    Instance,
    candidate_set_from_points,
    format_instance,
    gen_candidates,
    random_instance,
    read_instance,
    read_points,
)
from kmeans_pd.oracles import brute_fl, brute_kmeans, cluster_lp, simplex_solve
from kmeans_pd.primal_dual import jv_delta
from kmeans_pd.search import SearchConfig, compare, solve_kmeans_pd

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_VERIFY = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _delta_arg(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid delta {text!r}")
    if math.isnan(value) or value < 2:
        raise argparse.ArgumentTypeError("delta must be >= 2 (use 'inf' for classical JV)")
    return value


def _positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid number {text!r}")
    if not value > 0 or not math.isfinite(value):
        raise argparse.ArgumentTypeError("must be a positive finite number")
    return value


def _common(p: argparse.ArgumentParser, formats=("json", "text")) -> None:
    p.add_argument("--format", choices=formats, default="text", help="output format (default: text)")
    p.add_argument("--json", dest="format", action="store_const", const="json", help="shorthand for --format json")
    p.add_argument("--seed", type=int, default=0, help="seed for all randomness (default: 0)")
    p.add_argument("--no-meta", action="store_true", help="omit version/timing metadata so output is bit-identical")
    p.add_argument("-o", "--output", help="write the report to this file instead of stdout")


def _candidate_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--t", type=int, default=DEFAULT_MULTISET_BOUND,
                   help="candidate centers are centroids of multisets of up to t demands (default: 3)")
    p.add_argument("--candidates", help="explicit candidate-center file (instance format, k optional)")
    p.add_argument("--dedupe-tol", type=float, default=1e-9, help="candidate dedupe distance (default: 1e-9)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kmeans-pd", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("constants", help="delta/rho constants of both analyses")
    _common(p)

    p = sub.add_parser("gap", help="verify the two-pentagon integrality-gap instance")
    _common(p)
    p.add_argument("--h", type=int, default=1, help="number of pentagon pairs (default: 1)")
    p.add_argument("--M", type=float, default=100.0, help="minimum cross-pentagon distance (default: 100)")
    p.add_argument("--with-lp", action="store_true", help="also solve the cluster LP by simplex")
    p.add_argument("--write-instance", help="write the pentagon instance to this path")

    p = sub.add_parser("fl", help="run JV(delta) at a fixed lambda and audit the LMP inequality")
    _common(p)
    p.add_argument("instance", help="instance file")
    p.add_argument("--lambda", dest="lam", type=_positive_float, required=True, help="facility opening price")
    p.add_argument("--delta", type=_delta_arg, default=None, help="pruning parameter (default: refined optimum)")
    p.add_argument("--rho", type=float, default=None, help="ratio to audit against (default: refined rho(delta))")
    _candidate_args(p)

    p = sub.add_parser("solve", help="k-Means by Lagrangian search over JV(delta)")
    _common(p)
    p.add_argument("instance")
    p.add_argument("--k", type=int, default=None, help="override k from the file")
    p.add_argument("--delta", type=_delta_arg, default=None)
    p.add_argument("--max-iters", type=int, default=60)
    p.add_argument("--lambda-lo", type=_positive_float, default=None)
    p.add_argument("--lambda-hi", type=_positive_float, default=None)
    _candidate_args(p)

    p = sub.add_parser("bruteforce", help="exact k-Means (n <= 12) or, with --lambda, exact facility location")
    _common(p)
    p.add_argument("instance")
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="solve uniform facility location at this price instead")
    _candidate_args(p)

    p = sub.add_parser("lp", help="cluster LP value by dense simplex")
    _common(p)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("instance", nargs="?", help="instance file")
    src.add_argument("--pentagons", type=int, metavar="H", help="use the 2H-pentagon gap instance")
    p.add_argument("--M", type=float, default=100.0)
    p.add_argument("--group-radius", type=float, default=None,
                   help="only enumerate clusters inside groups of demands linked at this distance")
    p.add_argument("--dump", action="store_true", help="print the LP in textual standard form")

    p = sub.add_parser("compare", help="primal-dual vs Lloyd+D^2 vs brute force")
    _common(p, formats=("json", "csv", "text"))
    p.add_argument("instance")
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--delta", type=_delta_arg, default=None)
    p.add_argument("--seeds", type=int, default=5, help="number of Lloyd restarts, seeds seed..seed+N-1")
    _candidate_args(p)

    p = sub.add_parser("gen", help="write a random or pentagon instance file")
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--style", choices=("uniform", "blobs", "grid"), default="uniform")
    p.add_argument("--pentagons", type=int, metavar="H", default=None, help="write the 2H-pentagon instance instead")
    p.add_argument("--M", type=float, default=100.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", help="output path (default: stdout)")
    return parser


# --------------------------------------------------------------------------


def _candidates(args, demands):
    if args.candidates:
        pts, _ = read_points(args.candidates)
        return candidate_set_from_points(pts)
    return gen_candidates(demands, args.t, args.dedupe_tol)


def _instance(args) -> Instance:
    inst = read_instance(args.instance)
    k = getattr(args, "k", None)
    return Instance(inst.demands, k) if k is not None else inst


def _emit(args, payload: dict, text: str, started: float) -> None:
    if args.format == "json":
        if not args.no_meta:
            payload = {"meta": {"version": __version__, "command": args.command,
                                "seconds": round(time.perf_counter() - started, 6)}, **payload}
        out = json.dumps(payload, indent=2) + "\n"
    elif args.format == "csv":
        out = payload["_csv"]
    else:
        out = text
    if args.output:
        Path(args.output).write_text(out)
    else:
        sys.stdout.write(out)


def _cmd_constants(args) -> int:
    rows = constants_table()
    values = {r["name"]: r["value"] for r in rows}
    res_new = fixed_point_residual(values["delta_new"], "new")
    res_old = fixed_point_residual(values["delta_old"], "old")
    checks = {
        "delta_new_range": 2.1776 <= values["delta_new"] <= 2.1778,
        "rho_new_range": 6.128 < values["rho_new"] < 6.12903,
        "delta_old_range": 2.3145 <= values["delta_old"] <= 2.3147,
        "rho_old_range": 6.357 <= values["rho_old"] <= 6.358,
        "residuals": res_new <= 1e-10 and res_old <= 1e-10,
    }
    lines = [f"{'name':<22}{'value':>18}  {'residual':>10}  closed form"]
    for r in rows:
        res = "" if r["residual"] is None else f"{r['residual']:.2e}"
        lines.append(f"{r['name']:<22}{r['value']:>18.12f}  {res:>10}  {r['closed_form']}")
    lines.append("checks: " + ", ".join(f"{k}={'pass' if v else 'FAIL'}" for k, v in checks.items()))
    _emit(args, {"constants": rows, "checks": checks}, "\n".join(lines) + "\n", args._started)
    return EXIT_OK if all(checks.values()) else EXIT_VERIFY


def _cmd_gap(args) -> int:
    try:
        report = verify_gap(args.h, args.M, args.with_lp)
    except VerificationError as exc:
        print(f"gap verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    if args.write_instance:
        inst = make_pentagons(args.h, args.M)
        Path(args.write_instance).write_text(
            format_instance(inst.points, inst.k, f"{2 * args.h} unit pentagons, M={args.M}"))
    d = report.to_dict()
    lines = [f"pentagon gap instance: h={report.h}, M={report.M:g}, k={5 * report.h}"]
    for x in (1, 2, 3, 4):
        lines.append(f"  w({x}) brute={report.w_table[x]:.12f} closed={report.w_closed_form[x]:.12f}")
    lines.append(f"  fractional cost   {report.fractional_cost:.12f} (feasible={report.fractional_feasible})")
    lines.append(f"  integral optimum  {report.integral_opt:.12f} ({report.integral_mode})")
    lines.append(f"  ratio             {report.ratio:.12f} (bound {GAP_RATIO:.12f})")
    if report.lp_value is not None:
        lines.append(f"  cluster LP value  {report.lp_value:.12f}  ratio vs LP {report.lp_ratio:.12f}")
    lines.append("checks: " + ", ".join(f"{k}={'pass' if v else 'FAIL'}" for k, v in report.checks.items()))
    _emit(args, d, "\n".join(lines) + "\n", args._started)
    return EXIT_OK if report.ok else EXIT_VERIFY


def _cmd_fl(args) -> int:
    inst = read_points(args.instance)[0]
    cands = _candidates(args, inst)
    res = jv_delta(inst, cands, args.lam, args.delta, rho=args.rho)
    payload = res.to_dict()
    payload["candidates"] = [[float(v) for v in c] for c in cands.centers]
    a = res.audit
    lines = [
        f"lambda={res.lam:g} delta={res.delta:.6f} rho={a.rho:.6f}",
        f"tentatively open: {res.state.tentatively_open}",
        f"open: {res.open_set}",
        f"primal cost    {res.primal_cost:.12g}",
        f"dual objective {res.dual_objective:.12g}",
        f"audit: {'pass' if a.global_ok else 'FAIL'} "
        f"(global slack {a.global_slack:.6g}, {len(a.violations())} client violations)",
    ]
    _emit(args, payload, "\n".join(lines) + "\n", args._started)
    return EXIT_OK if a.global_ok else EXIT_VERIFY


def _cmd_solve(args) -> int:
    inst = _instance(args)
    cands = _candidates(args, inst.demands)
    cfg = SearchConfig(lam_lo=args.lambda_lo, lam_hi=args.lambda_hi, max_iters=args.max_iters)
    sol = solve_kmeans_pd(inst, cands, args.delta, cfg)
    payload = {"n": inst.n, "k": inst.k, "n_candidates": len(cands), **sol.to_dict()}
    lines = [
        f"n={inst.n} k={inst.k} candidates={len(cands)}",
        f"opened {sol.opened} centers at lambda={sol.lambda_used:.6g} (probes: {len(sol.trace)})",
        f"cost {sol.cost:.12g}   dual lower bound {sol.lower_bound():.12g}",
    ]
    if sol.infeasible_k:
        lines.append("warning: no probe opened <= k facilities")
    _emit(args, payload, "\n".join(lines) + "\n", args._started)
    return EXIT_OK


def _cmd_bruteforce(args) -> int:
    inst = _instance(args)
    if args.lam is not None:
        cands = _candidates(args, inst.demands)
        value, subset = brute_fl(inst.demands, cands, args.lam, return_set=True)
        payload = {"problem": "facility-location", "lambda": args.lam, "cost": value, "open": subset}
        text = f"facility location at lambda={args.lam:g}: cost {value:.12g}, open {subset}\n"
    else:
        cost, blocks = brute_kmeans(inst)
        payload = {"problem": "k-means", "k": inst.k, "cost": cost, "partition": blocks}
        text = f"k-means optimum (k={inst.k}): {cost:.12g}\npartition: {blocks}\n"
    _emit(args, payload, text, args._started)
    return EXIT_OK


def _cmd_lp(args) -> int:
    if args.pentagons is not None:
        p = make_pentagons(args.pentagons, args.M)
        demands, k = p.points, p.k
        radius = args.group_radius if args.group_radius is not None else args.M / 2
    else:
        inst = read_instance(args.instance)
        demands, k, radius = inst.demands, inst.k, args.group_radius
    clp = cluster_lp(demands, k, radius)
    lp = clp.to_lp()
    res = simplex_solve(lp)
    support = {}
    if res.x is not None:
        support = {lp.names[i]: float(v) for i, v in enumerate(res.x) if v > 1e-9}
    payload = {"status": res.status, "value": res.value, "n_columns": len(clp.columns),
               "n_rows": len(lp.b), "iterations": res.iterations, "support": support}
    text = f"cluster LP: {len(clp.columns)} columns, {len(lp.b)} rows\nstatus {res.status}, value {res.value:.12g}\n"
    if args.dump:
        text += lp.dump()
        payload["dump"] = lp.dump()
    _emit(args, payload, text, args._started)
    return EXIT_OK


def _cmd_compare(args) -> int:
    inst = _instance(args)
    cands = _candidates(args, inst.demands)
    rows = compare(inst, cands, inst.k, args.delta, seeds=range(args.seed, args.seed + args.seeds))
    if args.no_meta:
        for r in rows:
            r.pop("time_s")
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    lines = [f"{'method':<14}{'cost':>18}{'opened':>8}{'ratio':>10}"]
    for r in rows:
        ratio = "" if r["ratio_to_opt"] is None else f"{r['ratio_to_opt']:.4f}"
        lines.append(f"{r['method']:<14}{r['cost']:>18.10g}{r['opened']:>8}{ratio:>10}")
    _emit(args, {"rows": rows, "_csv": buf.getvalue()} if args.format == "csv" else {"rows": rows},
          "\n".join(lines) + "\n", args._started)
    return EXIT_OK


def _cmd_gen(args) -> int:
    if args.pentagons is not None:
        p = make_pentagons(args.pentagons, args.M)
        text = format_instance(p.points, p.k, f"{2 * args.pentagons} unit pentagons, M={args.M:g}")
    else:
        rng = np.random.default_rng(args.seed)
        inst = random_instance(rng, args.n, args.dim, args.k, style=args.style)
        text = format_instance(inst.demands, inst.k, f"{args.style} n={args.n} dim={args.dim} seed={args.seed}")
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {
    "constants": _cmd_constants,
    "gap": _cmd_gap,
    "fl": _cmd_fl,
    "solve": _cmd_solve,
    "bruteforce": _cmd_bruteforce,
    "lp": _cmd_lp,
    "compare": _cmd_compare,
    "gen": _cmd_gen,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args._started = time.perf_counter()
    try:
        return COMMANDS[args.command](args)
    except InputError as exc:
        print(f"kmeans-pd {args.command}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except VerificationError as exc:
        print(f"kmeans-pd {args.command}: verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except OSError as exc:
        print(f"kmeans-pd {args.command}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
