"""Command-line front end.

Exit codes: 0 success, 2 usage or validation error, 3 MC-tree cap exceeded,
4 plan/topology digest mismatch.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import experiment as exp
from .fidelity import DEFAULT_TREE_CAP, TreeCapExceeded, internal_completeness, output_fidelity
from .generator import GeneratorError, GeneratorSpec, generate_random
from .planner import ALGORITHMS, PlanError, ReplicationPlan, plan_exhaustive
from .simulator import FailureSpec, SimConfig, SimulationError, run
from .topology import TopologyError, load_topology, materialize, validate

EXIT_OK, EXIT_USAGE, EXIT_CAP, EXIT_DIGEST = 0, 2, 3, 4


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_USAGE):
        super().__init__(message)
        self.code = code


def _range(text: str) -> tuple[int, int]:
    try:
        lo, _, hi = text.partition(":")
        return int(lo), int(hi or lo)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO:HI, got {text!r}") from None


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(",") if x)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _names(text: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in text.split(",") if x.strip())


def _seed(args) -> int:
    env = os.environ.get("PPA_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise CliError(f"PPA_SEED must be an integer, got {env!r}") from None
    return args.seed


def _graph(path: str):
    try:
        return materialize(load_topology(path))
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise CliError(f"cannot load topology {path}: {exc}") from exc


def _plan_file(path: str, tg) -> ReplicationPlan:
    try:
        plan = ReplicationPlan.load(path)
    except (OSError, json.JSONDecodeError, PlanError) as exc:
        raise CliError(f"cannot load plan {path}: {exc}") from exc
    if plan.topology_digest and plan.topology_digest != tg.digest:
        raise CliError(
            f"plan digest {plan.topology_digest} does not match topology digest {tg.digest}", EXIT_DIGEST
        )
    unknown = plan.tasks - set(tg.tasks)
    if unknown:
        raise CliError(f"plan names unknown tasks: {sorted(unknown)}")
    return plan


def _write(text: str, path: str | None) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _fmt(x: float) -> str:
    return f"{x:.12g}"


# -- commands -------------------------------------------------------------


def cmd_gen(args) -> int:
    skew, s = GeneratorSpec.parse_skew(args.skew)
    spec = GeneratorSpec(args.ops, args.par, skew, s, args.join, args.kind, _seed(args))
    topo = generate_random(spec)
    _write(topo.dumps(), args.output)
    print(topo.digest(), file=sys.stderr if args.output in (None, "-") else sys.stdout)
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        topo = load_topology(args.topology)
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise CliError(f"cannot load topology {args.topology}: {exc}") from exc
    problems = validate(topo)
    for v in problems:
        print(v)
    if problems:
        return EXIT_USAGE
    print(f"ok {topo.digest()}")
    return EXIT_OK


def cmd_plan(args) -> int:
    tg = _graph(args.topology)
    n = len(tg.tasks)
    budget = args.budget if args.budget is not None else exp.budget_for(args.ratio, n)
    if budget < 0:
        raise CliError("budget must be non-negative")
    algo = ALGORITHMS[args.algorithm]
    start = time.perf_counter()
    if args.algorithm in ("dp", "sa"):
        plan = algo(tg, budget, args.cap)
    else:
        plan = algo(tg, budget)
    elapsed = time.perf_counter() - start
    if args.output:
        plan.save(args.output)
    print(f"algorithm {args.algorithm}")
    print(f"budget {budget}")
    print(f"tasks {' '.join(sorted(plan.tasks))}")
    print(f"objective {_fmt(plan.objective)}")
    print(f"elapsed_ms {elapsed * 1000:.3f}")
    if args.oracle:
        best = plan_exhaustive(tg, budget)
        print(f"oracle {_fmt(best.objective)}")
        print(f"gap {_fmt(best.objective - plan.objective)}")
    return EXIT_OK


def cmd_eval(args) -> int:
    tg = _graph(args.topology)
    if args.fail is not None:
        failed = set(_names(args.fail))
        unknown = failed - set(tg.tasks)
        if unknown:
            raise CliError(f"unknown tasks: {sorted(unknown)}")
    elif args.plan:
        plan = _plan_file(args.plan, tg)
        failed = set(tg.tasks) - plan.tasks
    else:
        failed = set()
    report = output_fidelity(tg, failed)
    ic = internal_completeness(tg, failed)
    if args.json:
        doc = report.to_dict()
        doc["ic"] = float(ic)
        print(json.dumps(doc, indent=2))
    else:
        print(f"OF {_fmt(report.of)}")
        print(f"IC {_fmt(ic)}")
    return EXIT_OK


def cmd_experiment(args) -> int:
    base = replace(exp.BASE, ops=args.ops or exp.BASE.ops, par=args.par or exp.BASE.par)
    spec = exp.ExperimentSpec.for_families(
        args.families,
        base=base,
        ratios=args.ratios,
        algorithms=args.algorithms,
        trials=args.trials,
        seed=_seed(args),
        cap=args.cap,
    )
    rows = exp.run_experiment(spec, workers=args.workers)
    _write(exp.rows_to_csv(rows), args.output)
    return EXIT_OK


def cmd_simulate(args) -> int:
    tg = _graph(args.topology)
    plan = _plan_file(args.plan, tg) if args.plan else ReplicationPlan.build(tg, (), 0, "none")
    cfg = SimConfig(
        batch_interval=args.batch_interval,
        checkpoint_interval=args.checkpoint_interval,
        replica_sync_interval=args.replica_sync_interval,
        failure_detection_delay=args.detection_delay,
        per_tuple_cost=args.per_tuple_cost,
        network_delay=args.network_delay,
        checkpoint_restore_cost=args.restore_cost,
        replay_bandwidth=args.replay_bandwidth,
        run_length=args.run_length,
        seed=_seed(args),
        tentative_mode=args.tentative,
        window=args.window,
    )
    failure = None
    if args.fail != "none":
        tasks = tg.tasks if args.fail == "all" else _names(args.fail)
        failure = FailureSpec(args.fail_time, frozenset(tasks))
    trace = run(tg, plan, cfg, failure)
    if args.trace:
        _write(trace.events_csv(), args.trace)
    if args.completeness:
        _write(trace.completeness_csv(), args.completeness)
    _write(trace.summary_json(), args.summary)
    return EXIT_OK


# -- parser ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ppaplan", description="Partial active replication planning for stream topologies.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a random topology")
    g.add_argument("--ops", type=_range, default=(5, 10), help="operator count range LO:HI")
    g.add_argument("--par", type=_range, default=(2, 6), help="parallelism range LO:HI")
    g.add_argument("--skew", default="uniform", help="uniform or zipf:S")
    g.add_argument("--join", type=float, default=0.0, help="fraction of multi-input operators that are joins")
    g.add_argument("--kind", choices=("structured", "full", "mixed"), default="mixed")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("-o", "--output")
    g.set_defaults(func=cmd_gen)

    v = sub.add_parser("validate", help="check a topology file")
    v.add_argument("topology")
    v.set_defaults(func=cmd_validate)

    pl = sub.add_parser("plan", help="compute a replication plan")
    pl.add_argument("topology")
    pl.add_argument("-a", "--algorithm", choices=sorted(ALGORITHMS), default="sa")
    b = pl.add_mutually_exclusive_group(required=True)
    b.add_argument("-r", "--budget", type=int, help="number of replicated tasks")
    b.add_argument("--ratio", type=float, help="budget as a fraction of the task count (floored)")
    pl.add_argument("--cap", type=int, default=DEFAULT_TREE_CAP, help="MC-tree enumeration cap")
    pl.add_argument("--oracle", action="store_true", help="also run the exhaustive planner and report the gap")
    pl.add_argument("-o", "--output", help="plan JSON path")
    pl.set_defaults(func=cmd_plan)

    e = sub.add_parser("eval", help="Output Fidelity and Internal Completeness of a scenario")
    e.add_argument("topology")
    e.add_argument("--plan", help="evaluate the worst case of this plan")
    e.add_argument("--fail", help="comma-separated failed tasks (overrides --plan)")
    e.add_argument("--json", action="store_true", help="full per-task report")
    e.set_defaults(func=cmd_eval)

    x = sub.add_parser("experiment", help="compare planners over random topologies")
    x.add_argument("--families", type=_names, default=tuple(exp.FAMILIES), help="subset of " + ",".join(exp.FAMILIES))
    x.add_argument("--ratios", type=_floats, default=exp.DEFAULT_RATIOS)
    x.add_argument("--algorithms", type=_names, default=("sa", "greedy"))
    x.add_argument("--trials", type=int, default=100)
    x.add_argument("--ops", type=_range)
    x.add_argument("--par", type=_range)
    x.add_argument("--seed", type=int, default=0)
    x.add_argument("--cap", type=int, default=DEFAULT_TREE_CAP)
    x.add_argument("--workers", type=int, default=1)
    x.add_argument("-o", "--output")
    x.set_defaults(func=cmd_experiment)

    s = sub.add_parser("simulate", help="run the discrete-event simulator")
    s.add_argument("topology")
    s.add_argument("plan", nargs="?", help="plan JSON (default: no replicas)")
    s.add_argument("--fail", default="all", help="'all', 'none' or comma-separated tasks")
    s.add_argument("--fail-time", type=float, default=30_000.0, help="ms")
    d = SimConfig()
    s.add_argument("--batch-interval", type=float, default=d.batch_interval)
    s.add_argument("--checkpoint-interval", type=float, default=d.checkpoint_interval)
    s.add_argument("--replica-sync-interval", type=float, default=d.replica_sync_interval)
    s.add_argument("--detection-delay", type=float, default=d.failure_detection_delay)
    s.add_argument("--per-tuple-cost", type=float, default=d.per_tuple_cost, help="µs")
    s.add_argument("--network-delay", type=float, default=d.network_delay)
    s.add_argument("--restore-cost", type=float, default=d.checkpoint_restore_cost, help="ms per state unit")
    s.add_argument("--replay-bandwidth", type=float, default=d.replay_bandwidth, help="tuples per ms")
    s.add_argument("--window", type=float, default=d.window, help="ms of input kept as state")
    s.add_argument("--run-length", type=float, default=d.run_length)
    s.add_argument("--no-tentative", dest="tentative", action="store_false")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--trace", help="event CSV path")
    s.add_argument("--completeness", help="per-batch completeness CSV path")
    s.add_argument("--summary", help="summary JSON path (default stdout)")
    s.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except TreeCapExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAP
    except (TopologyError, GeneratorError, PlanError, SimulationError, exp.ExperimentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
