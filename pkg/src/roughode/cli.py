"""Command-line front end for lifts, solves, and residual-order experiments.

Exit codes: 0 pass, 1 invalid input, 2 numerical failure, 3 a fitted slope or
fit quality missed its threshold.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import branched_signature as bs
from . import experiments as ex
from . import geometric_rde as gr
from . import geometric_signature as gs
from . import tensor_algebra as ta
from . import tree_hopf as th

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NUMERICAL = 2
EXIT_THRESHOLD = 3


def _add_common(parser):
    parser.add_argument("--config", required=True, help="experiment config JSON")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="override config seed")
    parser.add_argument(
        "--threads",
        type=int,
        default=1,
        help="worker cap for sweep evaluation (current build evaluates sequentially)",
    )


def build_parser():
    parser = argparse.ArgumentParser(
        prog="roughode",
        description="Signature and branched rough-path experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_lift = sub.add_parser("lift", help="print lift coefficients over a window")
    p_lift.add_argument("--csv", help="driver CSV with header t,x1,...,xl")
    p_lift.add_argument("--generator", choices=["fourier", "walk"], default=None)
    p_lift.add_argument("--width", type=int, default=2)
    p_lift.add_argument("--knots", type=int, default=256)
    p_lift.add_argument("--seed", type=int, default=0)
    p_lift.add_argument("--depth", type=int, default=2)
    p_lift.add_argument("--theory", choices=["geometric", "branched"], default="geometric")
    p_lift.add_argument("--s", type=float, default=None)
    p_lift.add_argument("--t", type=float, default=None)

    p_hopf = sub.add_parser("hopf-selftest", help="run the tree-algebra identity suite")
    p_hopf.add_argument("--width", type=int, default=2)
    p_hopf.add_argument("--grade", type=int, default=4)
    p_hopf.add_argument("--seed", type=int, default=0)

    for name, help_text in (
        ("solve", "solve the configured equation and write solution.csv"),
        ("residuals", "run the residual-order experiment"),
        ("equivalence", "compare state and observable residual slopes"),
        ("flow-check", "measure the two-step composition defect"),
    ):
        _add_common(sub.add_parser(name, help=help_text))
    return parser


def _load_config(args):
    cfg = ex.load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.threads is not None and args.threads < 1:
        raise ex.ConfigError("--threads must be >= 1")
    return cfg


def _cmd_lift(args):
    if args.csv:
        path = gs.PiecewiseLinearPath.from_csv(args.csv)
    elif args.generator == "fourier":
        path = ex.fourier_path(args.width, args.knots, args.seed)
    elif args.generator == "walk":
        path = gs.PiecewiseLinearPath.random_walk(args.width, args.knots, args.seed)
    else:
        raise ex.ConfigError("lift needs --csv or --generator")
    t0, t1 = path.domain
    s = t0 if args.s is None else args.s
    t = t1 if args.t is None else args.t
    if args.theory == "geometric":
        increment = gs.lift(path, args.depth).increment(s, t)
        payload = {"theory": "geometric", "s": s, "t": t}
        payload.update(ta.to_json_dict(increment))
    else:
        increment = bs.branched_lift(path, args.depth).increment(s, t)
        payload = {
            "theory": "branched",
            "s": s,
            "t": t,
            "width": path.width,
            "grade": args.depth,
            "trees": {
                th.format_tree(tree): value
                for tree, value in sorted(
                    increment.tree_coefficients().items(),
                    key=lambda kv: (kv[0].size, kv[0].key),
                )
            },
        }
    print(json.dumps(payload, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_hopf_selftest(args):
    width, grade = args.width, args.grade
    rng = np.random.Generator(np.random.Philox(args.seed))
    trees = th.enumerate_trees(grade, width)
    forests = th.enumerate_forests(grade, width)
    checks = {}

    worst = 0
    for tree in trees:
        cop = th.coproduct(tree)
        left = {}
        right = {}
        for (a, b), c in cop.items():
            for (a1, a2), c1 in th.coproduct_forest(a).items():
                key = (a1, a2, b)
                left[key] = left.get(key, 0) + c * c1
            for (b1, b2), c1 in th.coproduct_forest(b).items():
                key = (a, b1, b2)
                right[key] = right.get(key, 0) + c * c1
        keys = set(left) | set(right)
        worst = max(
            worst,
            max(abs(left.get(k, 0) - right.get(k, 0)) for k in keys),
        )
    checks["coassociativity"] = {"cases": len(trees), "max_deviation": worst}

    worst = 0
    for forest in forests:
        if forest.grade == 0:
            continue
        acc = {}
        for (left_f, right_f), c in th.coproduct_forest(forest).items():
            for psi, cs in th.antipode(left_f).items():
                key = psi * right_f
                acc[key] = acc.get(key, 0) + c * cs
        worst = max(worst, max(abs(v) for v in acc.values()) if acc else 0)
    checks["antipode_identity"] = {
        "cases": len(forests) - 1,
        "max_deviation": worst,
    }

    def random_series():
        coeffs = {
            f: 0.5 * rng.standard_normal() for f in forests if f.grade >= 1
        }
        return th.TreeSeries(width, grade, coeffs)

    worst = 0.0
    for _ in range(5):
        a, b, c = random_series(), random_series(), random_series()
        lhs = th.convolution(th.convolution(a, b), c)
        rhs = th.convolution(a, th.convolution(b, c))
        worst = max(worst, lhs.max_abs_diff(rhs))
    checks["convolution_associativity"] = {"cases": 5, "max_deviation": worst}

    worst = 0.0
    for _ in range(5):
        tree_values_a = {t: 0.5 * rng.standard_normal() for t in trees}
        tree_values_b = {t: 0.5 * rng.standard_normal() for t in trees}
        xa = th.BranchedGroupElement.from_tree_values(width, grade, tree_values_a)
        xb = th.BranchedGroupElement.from_tree_values(width, grade, tree_values_b)
        product = th.convolution(xa, xb)
        _, dev = th.grouplike_check(product)
        worst = max(worst, dev)
        worst = max(
            worst, th.BranchedGroupElement.from_series(product).character_defect()
        )
    checks["character_group_closure"] = {"cases": 5, "max_deviation": worst}

    counts = {"trees": len(trees), "forests": len(forests)}
    print(json.dumps({"counts": counts, "checks": checks}, indent=2, sort_keys=True))
    tolerances = {
        "coassociativity": 0,
        "antipode_identity": 0,
        "convolution_associativity": 1e-12,
        "character_group_closure": 1e-10,
    }
    for name, tol in tolerances.items():
        if checks[name]["max_deviation"] > tol:
            print(f"FAIL {name}: {checks[name]['max_deviation']}", file=sys.stderr)
            return EXIT_THRESHOLD
    return EXIT_OK


def _run_reported(args, runner, csv_name):
    cfg = _load_config(args)
    os.makedirs(args.out, exist_ok=True)
    try:
        result = runner(cfg)
    except gr.NumericalBlowupError as exc:
        report = {
            "theory": cfg.theory,
            "p": cfg.p,
            "seed": cfg.seed,
            "error": f"numerical_blowup: {exc}",
            "passed": False,
        }
        ex.write_report_json(report, os.path.join(args.out, "report.json"))
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    ex.write_residual_csv(result.rows, os.path.join(args.out, csv_name))
    report = result.report_dict(cfg)
    ex.write_report_json(report, os.path.join(args.out, "report.json"))
    _print_slope_table(result)
    if not result.passed:
        for failure in result.failures:
            print(f"FAIL {failure}", file=sys.stderr)
        return EXIT_THRESHOLD
    return EXIT_OK


def _print_slope_table(result):
    print(f"{'kind':<12} {'f_id':<10} {'slope':>8} {'r2':>8}  status")
    for (kind, f_id), rep in sorted(result.reports.items()):
        if rep.below_noise_floor:
            print(f"{kind:<12} {f_id:<10} {'-':>8} {'-':>8}  below noise floor")
        else:
            print(
                f"{kind:<12} {f_id:<10} {rep.slope:8.3f} {rep.r_squared:8.4f}  ok"
            )


def _cmd_solve(args):
    cfg = _load_config(args)
    os.makedirs(args.out, exist_ok=True)
    solution = ex.run_solve(cfg)
    ex.write_solution_csv(solution, os.path.join(args.out, "solution.csv"))
    print(f"solved {len(solution)} partition points; endpoint {solution.endpoint}")
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "lift":
            return _cmd_lift(args)
        if args.command == "hopf-selftest":
            return _cmd_hopf_selftest(args)
        if args.command == "solve":
            return _cmd_solve(args)
        if args.command == "residuals":
            return _run_reported(args, ex.run_residuals, "residuals.csv")
        if args.command == "equivalence":
            return _run_reported(args, ex.run_equivalence, "equivalence.csv")
        if args.command == "flow-check":
            return _run_reported(args, ex.run_flow_check, "flow_check.csv")
        raise ex.ConfigError(f"unknown command {args.command!r}")
    except (ex.ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except gr.NumericalBlowupError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
