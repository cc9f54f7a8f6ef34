"""Command-line interface: ``paroforge <command> [options]``."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import bench
from .fme import eliminate, filter_redundant
from .geometry import interior_point, vertices_of
from .model import detect_structure, parse_problem, validate
from .pareto import (
    algorithm1,
    check_extension,
    dr_paro,
    improvement,
    pro_ldr,
    refine_d0,
)
from .robust import LinearDecisionRule, LinearRule, StaticRule, solve_aro_vertices

from .lp import BACKENDS


def _floats(text: str) -> np.ndarray:
    try:
        return np.array([float(t) for t in text.replace(";", ",").split(",") if t.strip()])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _load(args):
    if not args.input:
        raise SystemExit("paroforge: error: --input FILE is required")
    if args.input == "-":
        return parse_problem(sys.stdin.read())
    with open(args.input) as fh:
        return parse_problem(fh.read())


def _emit(args, text: str) -> None:
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")
    else:
        print(text)


def _reference_point(problem, V):
    U = problem.uncertainty
    return U.nominal if U.nominal is not None else interior_point(U, V).z


def cmd_validate(args) -> int:
    problem = _load(args)
    report = validate(problem)
    out = {"ok": report.ok, "violations": list(report.violations), "notes": list(report.notes)}
    if report.ok:
        s = detect_structure(problem)
        out["structure"] = {"kind": s.kind, "labels": list(s.labels), "notes": list(s.notes)}
    _emit(args, bench.dump_json(out))
    return 0 if report.ok else 1


def cmd_solve_aro(args) -> int:
    problem = _load(args)
    V = vertices_of(problem.uncertainty)
    res = solve_aro_vertices(problem, V, backend=args.backend)
    _emit(args, bench.dump_json({"x": res.x, "opt": res.opt, "status": res.status.value,
                                 "vertices": V, "y": res.per_vertex_y}))
    return 0


def cmd_refine(args) -> int:
    problem = _load(args)
    V = vertices_of(problem.uncertainty)
    if args.method == "alg1":
        res = algorithm1(problem, args.x, method=args.improve, max_iters=args.max_iters,
                         tol=args.tol, backend=args.backend, seed=args.seed, vertices=V)
        out = res.to_dict()
        if args.trace:
            bench.dump_json(out, args.trace)
    elif args.method == "d0":
        aro = solve_aro_vertices(problem, V, backend=args.backend)
        z_bar = interior_point(problem.uncertainty, V).z
        x = refine_d0(problem, aro.opt, z_bar, V, backend=args.backend)
        out = {"x": x, "opt": aro.opt, "z_bar": z_bar}
    elif args.method == "pro-ldr":
        z_bar = _reference_point(problem, V)
        res = pro_ldr(problem, z_bar, vertices=V, backend=args.backend)
        out = {"x": res.x, "w": res.rule.w, "W": res.rule.W, "z_bar": z_bar,
               "worst_case_ldr": res.step1.value, "nominal_change": res.nominal_change}
    else:
        res = dr_paro(problem, backend=args.backend)
        out = {"x": res.x, "w": res.rule.w, "W": res.rule.W, "provenance": res.provenance}
    _emit(args, bench.dump_json(out))
    return 0


def cmd_improve(args) -> int:
    problem = _load(args)
    from .pareto import ValueLedger

    V = vertices_of(problem.uncertainty)
    aro = solve_aro_vertices(problem, V, backend=args.backend)
    x_hat = aro.x if args.x is None else args.x
    res = improvement(problem, x_hat, ValueLedger.from_vertices(V, aro.opt), method=args.improve,
                      max_iters=args.max_iters, tol=args.tol, backend=args.backend, seed=args.seed)
    _emit(args, bench.dump_json({"p": res.p, "z_bar": res.z_bar, "x_bar": res.x_bar,
                                 "iterations": res.iterations, "converged": res.converged,
                                 "certified": res.certified}))
    return 0


def cmd_check_extension(args) -> int:
    problem = _load(args)
    if args.x is None:
        raise SystemExit("paroforge: error: --x is required")
    if args.rule:
        with open(args.rule) as fh:
            doc = json.load(fh)
        rule = LinearDecisionRule(LinearRule(doc["w"], doc.get("W", np.zeros((problem.n_y, problem.L)))))
    elif args.static is not None:
        rule = StaticRule(args.static)
    else:
        raise SystemExit("paroforge: error: give --static Y or --rule FILE")
    res = check_extension(problem, args.x, rule, backend=args.backend)
    _emit(args, bench.dump_json({"bound": res.bound, "z": res.z, "y": res.y,
                                 "is_extension": res.is_extension(args.tol),
                                 "certified": res.certified}))
    return 0


def cmd_fme(args) -> int:
    problem = _load(args)
    res = eliminate(problem, count=args.count)
    kw = {"vertices": vertices_of(problem.uncertainty)} if args.filter == "lp" else {}
    res = filter_redundant(res, args.filter, **kw)
    _emit(args, bench.dump_json(res.to_dict()))
    return 0


def cmd_vertices(args) -> int:
    problem = _load(args)
    V = vertices_of(problem.uncertainty)
    _emit(args, bench.dump_json({"count": len(V), "vertices": V}))
    return 0


def cmd_bench_fl(args) -> int:
    cfg = bench.FacilityLocationConfig(n=args.n, m=args.m, s=args.cap, gamma=args.gamma,
                                       seed=args.seed)

    def progress(row):
        print(f"instance {row['instance']} (seed {row['seed']}): {row['status']}", file=sys.stderr)

    text, _ = bench.run_benchmark(cfg, args.instances, args.seed, sample_count=args.samples,
                                  deterministic=args.deterministic, method=args.improve,
                                  backend=args.backend, max_iters=args.max_iters, tol=args.tol,
                                  progress=progress)
    _emit(args, text.rstrip("\n"))
    return 0


def cmd_rt(args) -> int:
    problem = bench.rt_example(args.delta)
    aro = solve_aro_vertices(problem, backend=args.backend)
    out = {"delta": args.delta, "opt": aro.opt, "x_aro": aro.x, "table": bench.table1(args.delta)}
    if args.out_problem:
        with open(args.out_problem, "w") as fh:
            from .model import serialize_problem

            fh.write(serialize_problem(problem, indent=2) + "\n")
    _emit(args, bench.dump_json(out))
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", help="problem JSON file ('-' for stdin)")
    common.add_argument("--out", help="write the result here instead of stdout")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--tol", type=float, default=1e-7)
    common.add_argument("--max-iters", type=int, default=100)
    common.add_argument("--backend", choices=BACKENDS, default="simplex")
    common.add_argument("--x", type=_floats, help="Stage-1 decision, comma separated")
    common.add_argument("--improve", choices=("mountain", "bilinear"), default="mountain",
                        help="solver for the improvement problem")

    parser = argparse.ArgumentParser(prog="paroforge", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("validate", parents=[common], help="check a problem file").set_defaults(fn=cmd_validate)
    sub.add_parser("solve-aro", parents=[common], help="worst-case optimal decision").set_defaults(fn=cmd_solve_aro)
    p = sub.add_parser("refine", parents=[common], help="Pareto refinement of the worst-case optimum")
    p.add_argument("--method", choices=("alg1", "d0", "pro-ldr", "dr-paro"), default="alg1")
    p.add_argument("--trace", help="write the iteration trace as JSON")
    p.set_defaults(fn=cmd_refine)
    sub.add_parser("improve", parents=[common],
                   help="one improvement problem for --x (default: the ARO decision)").set_defaults(fn=cmd_improve)
    p = sub.add_parser("check-extension", parents=[common], help="can optimal recourse beat a rule at --x")
    p.add_argument("--static", type=_floats, help="static Stage-2 decision")
    p.add_argument("--rule", help="JSON file with linear rule fields w and W")
    p.set_defaults(fn=cmd_check_extension)
    p = sub.add_parser("fme", parents=[common], help="eliminate Stage-2 variables")
    p.add_argument("--count", type=int, help="number of variables to eliminate (default all)")
    p.add_argument("--filter", choices=("none", "syntactic", "lp"), default="syntactic")
    p.set_defaults(fn=cmd_fme)
    sub.add_parser("vertices", parents=[common], help="vertices of the uncertainty set").set_defaults(fn=cmd_vertices)
    p = sub.add_parser("bench-fl", parents=[common], help="facility-location comparison as CSV")
    p.add_argument("--instances", type=int, default=30)
    p.add_argument("--samples", type=int, default=10, help="sampled scenarios for the Average metric")
    p.add_argument("--n", type=int, default=10, help="facilities")
    p.add_argument("--m", type=int, default=4, help="demand locations")
    p.add_argument("--gamma", type=float, default=45.0, help="total demand cap")
    p.add_argument("--cap", type=float, default=15.0, help="capacity per facility")
    p.add_argument("--deterministic", action="store_true", help="omit timestamp and runtimes")
    p.set_defaults(fn=cmd_bench_fl, backend="bnb-highs")
    p = sub.add_parser("rt", parents=[common], help="radiation-therapy toy problem")
    p.add_argument("--delta", type=float, default=0.5)
    p.add_argument("--out-problem", help="also write the problem JSON here")
    p.set_defaults(fn=cmd_rt)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, TypeError, RuntimeError, OSError) as exc:
        print(f"paroforge: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
