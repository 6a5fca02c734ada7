"""Command-line interface: ``pbds run | consistency | compare-gds | bench``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from .scenario import (
    ScenarioError,
    bench,
    check_assertions,
    consistency_test,
    load_scenario,
    run,
)
from .simulator import IntegratorConfig

EXIT_OK, EXIT_SCHEMA, EXIT_ABORT, EXIT_ASSERT = 0, 2, 3, 4


def _with_overrides(scn, args):
    cfg = scn.config
    dt = args.dt if args.dt is not None else cfg.dt
    T = args.horizon if args.horizon is not None else cfg.T
    scn.config = IntegratorConfig(dt, T, cfg.method, cfg.chart_scheme, cfg.velocity_stop_eps)
    if args.seed is not None:
        scn = replace(scn, seed=args.seed)
    return scn


def _load(args):
    scn = load_scenario(args.scenario)
    return _with_overrides(scn, args)


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, default=float))


def cmd_run(args) -> int:
    scn = _load(args)
    report, _ = run(scn, args.out, args.engine)
    _emit(report.to_dict())
    if report.aborted:
        return EXIT_ABORT
    fails = check_assertions(scn, report)
    for msg in fails:
        print(f"assertion failed: {msg}", file=sys.stderr)
    return EXIT_ASSERT if fails else EXIT_OK


def cmd_consistency(args) -> int:
    scn = _load(args)
    try:
        rep = consistency_test(scn, args.engine)
    except RuntimeError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_ABORT
    _emit(rep.to_dict())
    return EXIT_ASSERT if rep.passed is False else EXIT_OK


def cmd_compare_gds(args) -> int:
    scn = _load(args)
    try:
        pb = consistency_test(scn, "pbds")
        gd = consistency_test(scn, "gds")
    except RuntimeError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_ABORT
    ratio = gd.max_deviation / pb.max_deviation if pb.max_deviation > 0 else float("inf")
    _emit({"pbds": pb.to_dict(), "gds": gd.to_dict(), "ratio": ratio})
    return EXIT_ASSERT if pb.passed is False else EXIT_OK


def cmd_bench(args) -> int:
    scn = _load(args)
    rep = bench(scn, args.iters, seed=scn.seed)
    _emit(rep.to_dict())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pbds", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("scenario", help="scenario JSON file or bundled scenario name")
        p.add_argument("--dt", type=float, default=None, help="override the integration step")
        p.add_argument("--horizon", type=float, default=None, help="override the horizon T")
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")

    p = sub.add_parser("run", help="integrate a scenario and write trajectories")
    common(p)
    p.add_argument("--out", default=None, help="output directory for CSV and JSON")
    p.add_argument("--engine", choices=["pbds", "pbds_tree", "gds"], default=None)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("consistency", help="compare fixed-south, fixed-north and hemisphere runs")
    common(p)
    p.add_argument("--engine", choices=["pbds", "pbds_tree", "gds"], default=None)
    p.set_defaults(func=cmd_consistency)

    p = sub.add_parser("compare-gds", help="chart consistency of PBDS against the GDS baseline")
    common(p)
    p.set_defaults(func=cmd_compare_gds)

    p = sub.add_parser("bench", help="policy evaluation throughput")
    common(p)
    p.add_argument("--iters", type=int, default=20000)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA


if __name__ == "__main__":
    sys.exit(main())
