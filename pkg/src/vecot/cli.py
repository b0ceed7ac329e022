"""Command-line interface: ``vecot {solve,check,witness,order,render}``.

Reports are JSON documents written to ``--out`` (atomically) or stdout, with
sorted keys so that identical inputs and flags give byte-identical output.
Wall-clock timings are included only with ``--timings``.

Exit codes: 0 success or converged, 1 input error, 2 diverged, 3 iteration cap.
"""

import argparse
import contextlib
import json
import os
import sys
import time
import warnings

import numpy as np

from . import __version__
from .counterexample import build_witness, check_witness, verify_no_equilibrium, verify_uniqueness
from .dual_solver import SolverConfig, SolverStatus, lp_dual_value, solve_dual
from .exceptions import NonSimplexRow, TooLarge, VecotError
from .io import (
    SchemaError,
    digest,
    dumps_report,
    instance_to_dict,
    load_instance,
    load_labels,
    load_matrix,
    load_pair,
    to_jsonable,
    write_atomic,
)
from .measure import total_mass
from .order import compare, kantorovich_q
from .partition import ENUMERATION_GUARD, achievable_exact, achievable_relaxed
from .render import render_svg

EXIT_OK, EXIT_INPUT, EXIT_DIVERGED, EXIT_CAP = 0, 1, 2, 3
_STATUS_EXIT = {
    SolverStatus.CONVERGED: EXIT_OK,
    SolverStatus.DIVERGED: EXIT_DIVERGED,
    SolverStatus.ITERATION_CAP: EXIT_CAP,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage, which would read as "diverged"
    def error(self, message):
        raise UsageError(message)


def _common(p):
    p.add_argument("--seed", type=int, default=None, help="random seed")
    p.add_argument("--tol", type=float, default=1e-6, help="residual tolerance")
    p.add_argument("--max-iter", type=int, default=50_000, help="iteration cap")
    p.add_argument("--out", default=None, help="report path (default: stdout)")
    p.add_argument("--timings", action="store_true", help="add wall-clock timings to the report")


def build_parser():
    parser = _Parser(prog="vecot", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"vecot {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="dual ascent for equilibrium prices")
    p.add_argument("instance", nargs="?", help="instance JSON")
    p.add_argument("target", nargs="?", help="demand matrix JSON (bare or under 'demand')")
    p.add_argument("--witness", action="store_true",
                   help="solve the default witness instance instead of files")
    p.add_argument("--step", choices=("diminishing", "polyak"), default="diminishing")
    p.add_argument("--step-scale", type=float, default=1.0)
    p.add_argument("--divergence-threshold", type=float, default=1e4)
    p.add_argument("--init-prices", default=None, help="starting price matrix JSON")
    p.add_argument("--history", default=None,
                   help="iteration CSV path (default: next to --out when given)")
    _common(p)

    p = sub.add_parser("check", help="is a demand achievable?")
    p.add_argument("instance")
    p.add_argument("target")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--exact", dest="mode", action="store_const", const="exact")
    mode.add_argument("--relaxed", dest="mode", action="store_const", const="relaxed")
    p.set_defaults(mode="exact")
    p.add_argument("--guard", type=int, default=ENUMERATION_GUARD)
    _common(p)

    p = sub.add_parser("witness", help="build and verify a no-equilibrium witness")
    p.add_argument("q", nargs="?", type=int, default=2)
    p.add_argument("n", nargs="?", type=int, default=2)
    p.add_argument("--points-per-agent", type=int, default=3)
    p.add_argument("--scale", type=float, default=0.1, help="boundary atom weight scale")
    p.add_argument("--grid-num", type=int, default=41, help="grid points per price entry")
    p.add_argument("--no-grid", action="store_true")
    p.add_argument("--no-solver", action="store_true")
    p.add_argument("--instance-out", default=None, help="write the instance JSON here")
    p.add_argument("--target-out", default=None, help="write the target JSON here")
    _common(p)

    p = sub.add_parser("order", help="kernel, convex and sampling order criteria")
    p.add_argument("pair", help="pair JSON with 'x', 'y' and optional 'pair_cost'")
    p.add_argument("--n", type=int, default=2, help="agents for the sampling criterion")
    p.add_argument("--trials", type=int, default=100)
    _common(p)

    p = sub.add_parser("render", help="SVG of a labelled 2D instance")
    p.add_argument("instance")
    p.add_argument("labels", help="labels JSON (bare or under 'labels')")
    p.add_argument("out_svg")
    return parser


def _header(command, **extra):
    doc = {"command": command, "version": __version__}
    doc.update(extra)
    return doc


def _emit(args, doc):
    text = dumps_report(to_jsonable(doc))
    if getattr(args, "out", None):
        write_atomic(args.out, text)
    else:
        sys.stdout.write(text)


def _report_dict(rep):
    return {
        "status": rep.status.value,
        "iterations": rep.iterations,
        "objective": rep.objective,
        "best_objective": rep.best_objective,
        "prices": rep.prices,
        "residual": rep.residual,
        "residual_norm": rep.residual_norm,
        "price_norm": rep.price_norm,
        "residual_floor": rep.residual_floor(),
    }


def _history_csv(rep):
    lines = ["iter,objective,residual_inf,price_frobenius"]
    lines += [f"{k},{f!r},{r!r},{n!r}" for k, f, r, n in rep.history_rows()]
    return "\n".join(lines) + "\n"


def cmd_solve(args):
    t0 = time.perf_counter()
    init = None
    if args.witness:
        wit = build_witness(seed=0 if args.seed is None else args.seed)
        measure, costs, target = wit.measure, wit.costs, wit.target
        doc = instance_to_dict(measure, costs)
        doc["witness"] = wit.witness_block()
        init = wit.prices
        tdoc = target.tolist()
    else:
        if not (args.instance and args.target):
            raise UsageError("solve needs INSTANCE and TARGET (or --witness)")
        measure, costs, doc = load_instance(args.instance)
        target, tdoc = load_matrix(args.target, "demand")
        if "witness" in doc and "base_prices" in doc["witness"]:
            init = np.asarray(doc["witness"]["base_prices"], dtype=np.float64)
    if args.init_prices:
        init, _ = load_matrix(args.init_prices, "prices")
    if costs is None:
        costs = np.zeros((target.shape[0], measure.n_points))
    target_value = None
    if args.step == "polyak":
        target_value = lp_dual_value(measure, costs, target)[0]
    cfg = SolverConfig(max_iter=args.max_iter, tol=args.tol,
                       divergence_threshold=args.divergence_threshold, step=args.step,
                       step_scale=args.step_scale, target_value=target_value,
                       seed=None if args.witness else args.seed)
    rep = solve_dual(measure, costs, target, cfg, initial_prices=init)
    out = _header("solve", instance_digest=digest(doc), target_digest=digest(tdoc),
                  seed=args.seed, step=args.step)
    if target_value is not None:
        out["target_value"] = target_value
    out.update(_report_dict(rep))
    if args.timings:
        out["timings"] = {"total_s": time.perf_counter() - t0}
    history = args.history or (os.path.splitext(args.out)[0] + ".history.csv" if args.out else None)
    if history:
        write_atomic(history, _history_csv(rep))
        out["history"] = os.path.basename(history)
    _emit(args, out)
    return _STATUS_EXIT[rep.status]


def cmd_check(args):
    t0 = time.perf_counter()
    measure, _, doc = load_instance(args.instance)
    target, tdoc = load_matrix(args.target, "demand")
    out = _header("check", instance_digest=digest(doc), target_digest=digest(tdoc))
    warn = []
    mass = total_mass(measure)
    excess = target.sum(axis=0) - mass
    if np.any(excess > 1e-9):
        out.update(verdict=False, mode=args.mode, reason="layer mass exceeded",
                   violations=[{"layer": int(j), "demand": float(target[:, j].sum()),
                                "available": float(mass[j])}
                               for j in np.flatnonzero(excess > 1e-9)])
        _emit(args, out)
        return EXIT_OK
    mode = args.mode
    if mode == "exact":
        try:
            res = achievable_exact(target, measure, guard=args.guard)
        except TooLarge as exc:
            warn.append(f"TooLarge: {exc}; falling back to --relaxed")
            mode = "relaxed"
        else:
            out.update(verdict=res.achievable, count=res.count,
                       unique=res.count == 1,
                       labels=None if res.witness is None else res.witness)
    if mode == "relaxed":
        ok, plan = achievable_relaxed(target, measure)
        out.update(verdict=ok, plan=None if plan is None else np.round(plan, 12))
    out["mode"] = mode
    if warn:
        out["warnings"] = warn
        for w in warn:
            print(f"warning: {w}", file=sys.stderr)
    if args.timings:
        out["timings"] = {"total_s": time.perf_counter() - t0}
    _emit(args, out)
    return EXIT_OK


def cmd_witness(args):
    t0 = time.perf_counter()
    wit = build_witness(q=args.q, n=args.n, interior_points_per_agent=args.points_per_agent,
                        boundary_weight_scale=args.scale, seed=0 if args.seed is None else args.seed)
    inst = instance_to_dict(wit.measure, wit.costs)
    inst["witness"] = wit.witness_block()
    cfg = SolverConfig(max_iter=args.max_iter, tol=args.tol)
    grid = None if args.no_grid else (-10.0, 10.0, args.grid_num)
    ev = verify_no_equilibrium(wit, grid=grid, solver_config=cfg, run_solver=not args.no_solver)
    out = _header("witness", instance_digest=digest(inst), instance=inst, target=wit.target,
                  checks=check_witness(wit), evidence=ev.to_dict())
    try:
        unique, count = verify_uniqueness(wit)
        out["uniqueness"] = {"unique": unique, "count": count}
    except TooLarge as exc:
        out["uniqueness"] = {"skipped": str(exc)}
    if ev.solver is not None:
        out["evidence"]["price_norm"] = ev.solver.price_norm
        out["evidence"]["iterations"] = ev.solver.iterations
    if args.instance_out:
        write_atomic(args.instance_out, dumps_report(to_jsonable(inst)))
    if args.target_out:
        write_atomic(args.target_out, dumps_report({"demand": wit.target.tolist()}))
    if args.timings:
        out["timings"] = {"total_s": time.perf_counter() - t0}
    _emit(args, out)
    return EXIT_OK


def cmd_order(args):
    t0 = time.perf_counter()
    mx, my, cost, doc = load_pair(args.pair)
    rep = compare(mx, my, n=args.n, trials=args.trials, seed=args.seed)
    out = _header("order", instance_digest=digest(doc), seed=args.seed, **rep.to_dict())
    if cost is not None and rep.kernel:
        kr = kantorovich_q(mx, my, cost)
        out["kantorovich"] = {"value": kr.value, "dual_value": kr.dual_value,
                              "relative_gap": kr.relative_gap}
    if args.timings:
        out["timings"] = {"total_s": time.perf_counter() - t0}
    _emit(args, out)
    return EXIT_OK


def cmd_render(args):
    measure, _, doc = load_instance(args.instance)
    labels = load_labels(args.labels)
    svg = render_svg(measure, labels)
    write_atomic(args.out_svg, svg)
    out = _header("render", instance_digest=digest(doc), circles=measure.n_points,
                  elements=measure.n_points + 1)
    sys.stdout.write(dumps_report(out))
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "check": cmd_check, "witness": cmd_witness,
            "order": cmd_order, "render": cmd_render}


def _error(exc):
    err = {"type": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, NonSimplexRow):
        err["row"] = exc.row
    return {"error": err}


def _thread_limit():
    value = os.environ.get("VECOT_THREADS")
    if not value:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=max(1, int(value)))


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        with _thread_limit(), warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return COMMANDS[args.command](args)
    except (UsageError, SchemaError, VecotError, ValueError, OSError) as exc:
        sys.stdout.write(json.dumps(_error(exc), sort_keys=True) + "\n")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
