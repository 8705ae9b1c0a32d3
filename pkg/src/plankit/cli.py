"""Command-line harness.

Subcommands: ``run`` (batch a scenario), ``compare`` (model comparison with
Mann-Whitney tests), ``neem query`` / ``neem replay`` (episode store tools),
and ``validate`` (plan and world files).  Exit codes: 0 success, 1 usage,
2 scenario failure beyond budget, 3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import scenarios
from .neem import (NeemStore, ReplayDivergence, UnknownField, import_neem,
                   parse_query, query_neems, replay_neem)
from .plan_lang import PlanSyntaxError, load_plan_file, validate_plan
from .world import SchemaError, load_world_file

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_SCENARIO_FAILED = 2
EXIT_INVARIANT = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _parse_seeds(text: str) -> tuple[int, ...]:
    if ":" in text:
        lo, hi = text.split(":", 1)
        return tuple(range(int(lo), int(hi)))
    return tuple(int(t) for t in text.split(","))


def _print_report(report: scenarios.MetricsReport, as_json: bool):
    if as_json:
        for r in report.rows:
            print(json.dumps(r, sort_keys=True))
        print(json.dumps({"aggregates": report.aggregates}, sort_keys=True))
        return
    header = f"{'seed':>6} {'outcome':>10} {'repos':>6} {'retries':>8} {'proj':>6} {'steps':>7} {'ms':>8}"
    print(header)
    for r, w in zip(report.rows, report.wall_ms):
        print(f"{r['seed']:>6} {r['outcome']:>10} {r['repositions']:>6} "
              f"{r['retries']:>8} {r['projections']:>6} {r['steps']:>7} {w:>8.1f}")
    agg = report.aggregates
    print(f"-- {agg['succeeded']}/{agg['runs']} succeeded; "
          f"mean repositions {agg.get('mean_repositions', 0):.2f}, "
          f"mean retries {agg.get('mean_retries', 0):.2f}")


def _build_spec(args) -> scenarios.ScenarioSpec:
    world = Path(args.world) if args.world else scenarios.default_world_for(args.task)
    plan = Path(args.plan) if args.plan else scenarios.default_plan_file()
    return scenarios.ScenarioSpec(
        task=args.task, world_file=world, plan_file=plan,
        gm=(args.gm[0] if isinstance(args.gm, list) else args.gm),
        seeds=_parse_seeds(args.seeds),
        retry_budget=args.retry_budget,
        neem_dir=Path(args.neem_dir) if args.neem_dir else None,
        train_from=Path(args.train_from) if args.train_from else None)


def _cmd_run(args) -> int:
    spec = _build_spec(args)
    report = scenarios.run_scenario(spec)
    _print_report(report, args.json)
    failed = sum(1 for r in report.rows if r["outcome"] != "succeeded")
    return EXIT_SCENARIO_FAILED if failed else EXIT_OK


def _cmd_compare(args) -> int:
    spec = _build_spec(args)
    gm_names = args.gm if isinstance(args.gm, list) else [args.gm]
    comparison = scenarios.compare_models(spec, gm_names, spec.seeds,
                                          min_seeds_for_test=args.min_seeds)
    if args.json:
        for name, rep in comparison.per_gm.items():
            for r in rep.rows:
                print(json.dumps(r, sort_keys=True))
        print(json.dumps({"tests": comparison.tests,
                          "ordering": comparison.ordering}, sort_keys=True))
        return EXIT_OK
    print(f"{'model':>14} {'success':>8} {'mean repos':>11} {'mean retries':>13} {'mean proj':>10}")
    for name, rep in comparison.per_gm.items():
        a = rep.aggregates
        print(f"{name:>14} {a['succeeded']:>4}/{a['runs']:<3} "
              f"{a.get('mean_repositions', 0):>11.2f} {a.get('mean_retries', 0):>13.2f} "
              f"{a.get('mean_projections', 0):>10.2f}")
    print("ordering by mean repositions (best first):",
          " < ".join(name for name, _ in comparison.ordering))
    for key, t in comparison.tests.items():
        print(f"  {key}: U={t['U']}, p={t['p']:.4g}")
    return EXIT_OK


def _cmd_neem_query(args) -> int:
    store = NeemStore(args.neem_dir)
    pattern = parse_query(args.query)
    result = query_neems(store, pattern)
    if args.json:
        print(json.dumps(result, sort_keys=True))
    elif result["value"] is None:
        print("no data")
    else:
        print(result["value"])
    return EXIT_OK


def _cmd_neem_replay(args) -> int:
    store = NeemStore(args.neem_dir)
    files = store.files()
    if args.file:
        files = [store.dir / args.file]
    divergent = 0
    for path in files:
        neem = import_neem(path.read_text(encoding="utf-8"))
        try:
            replay_neem(neem)
            status = "ok"
        except ReplayDivergence:
            status = "DIVERGED"
            divergent += 1
        if args.json:
            print(json.dumps({"file": path.name, "replay": status}))
        else:
            print(f"{path.name}: {status}")
    return EXIT_INVARIANT if divergent else EXIT_OK


def _cmd_validate(args) -> int:
    problems = 0
    if args.plan:
        try:
            ast = load_plan_file(args.plan)
            diags = [d for d in validate_plan(ast)
                     if d.code != "unbound-variable"]
            for d in diags:
                print(f"{args.plan}: {d.code}: {d.message}")
            problems += len(diags)
            if not diags:
                print(f"{args.plan}: ok ({len(ast.definitions)} plans)")
        except PlanSyntaxError as e:
            print(f"{args.plan}: syntax error: {e}")
            problems += 1
    if args.world:
        try:
            w = load_world_file(args.world)
            print(f"{args.world}: ok ({len(w.objects)} objects, "
                  f"{len(w.containers)} containers)")
        except SchemaError as e:
            print(f"{args.world}: schema error: {e}")
            problems += 1
    if not args.plan and not args.world:
        raise _UsageError("validate needs --plan and/or --world")
    return EXIT_SCENARIO_FAILED if problems else EXIT_OK


def _add_scenario_args(p, multi_gm: bool):
    p.add_argument("--task", default="set-table", choices=scenarios.TASKS)
    p.add_argument("--world", help="world file (defaults to the bundled kitchen)")
    p.add_argument("--plan", help="plan library file (defaults to the bundled plans)")
    if multi_gm:
        p.add_argument("--gm", action="append", required=True,
                       choices=("uninformed", "epl", "prospective", "experience"))
    else:
        p.add_argument("--gm", default="epl",
                       choices=("uninformed", "epl", "prospective", "experience"))
    p.add_argument("--seed", dest="seeds", help="single seed", default=None)
    p.add_argument("--seeds", dest="seeds", default="0:5",
                   help="seed range lo:hi or comma list")
    p.add_argument("--retry-budget", type=int, default=10)
    p.add_argument("--neem-dir", help="directory to persist episode records")
    p.add_argument("--train-from", help="episode store for the experience model")
    p.add_argument("--json", action="store_true", help="machine-readable output")


def build_parser() -> _Parser:
    top = _Parser(prog="plankit",
                  description="Underdetermined fetch-and-place at desk scale.")
    sub = top.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario batch")
    _add_scenario_args(run, multi_gm=False)
    run.set_defaults(fn=_cmd_run)

    comp = sub.add_parser("compare", help="compare generative models")
    _add_scenario_args(comp, multi_gm=True)
    comp.add_argument("--min-seeds", type=int, default=30)
    comp.set_defaults(fn=_cmd_compare)

    neem = sub.add_parser("neem", help="episode store tools")
    neem_sub = neem.add_subparsers(dest="neem_command", required=True)
    q = neem_sub.add_parser("query", help="aggregate over stored episodes")
    q.add_argument("--neem-dir", required=True)
    q.add_argument("query", help='e.g. "success-rate grasp=top category=spoon"')
    q.add_argument("--json", action="store_true")
    q.set_defaults(fn=_cmd_neem_query)
    rp = neem_sub.add_parser("replay", help="re-execute stored episodes")
    rp.add_argument("--neem-dir", required=True)
    rp.add_argument("--file", help="one episode file (default: all)")
    rp.add_argument("--json", action="store_true")
    rp.set_defaults(fn=_cmd_neem_replay)

    val = sub.add_parser("validate", help="check plan and world files")
    val.add_argument("--plan")
    val.add_argument("--world")
    val.add_argument("--json", action="store_true")
    val.set_defaults(fn=_cmd_validate)
    return top


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except _UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (scenarios.ScenarioError, scenarios.InsufficientSeeds,
            UnknownField, PlanSyntaxError, SchemaError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ReplayDivergence as e:
        print(f"invariant violation: {e}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
