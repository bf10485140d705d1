"""Information-loss propagation, Output Fidelity, Internal Completeness and MC-trees."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .topology import CORRELATED, INDEPENDENT, SOURCE, TaskGraph

DEFAULT_TREE_CAP = 10**6


class TreeCapExceeded(RuntimeError):
    """MC-tree enumeration would exceed the configured cap."""

    def __init__(self, cap: int):
        super().__init__(f"MC-tree enumeration exceeded cap of {cap} trees")
        self.cap = cap


@dataclass(frozen=True)
class FailureScenario:
    failed: frozenset[str] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "failed", frozenset(self.failed))


@dataclass(frozen=True)
class FidelityReport:
    of: float
    per_task: dict[str, float]
    per_stream: dict[tuple[str, int], float]
    sink_rates: dict[str, float] = field(default_factory=dict, repr=False)

    def recomputed_of(self) -> float:
        total = sum(self.sink_rates.values())
        if total > 0:
            return 1 - sum(r * self.per_task[t] for t, r in self.sink_rates.items()) / total
        return 1 - sum(self.per_task[t] for t in self.sink_rates) / len(self.sink_rates)

    def to_dict(self) -> dict:
        return {
            "of": float(self.of),
            "per_task": {t: float(v) for t, v in self.per_task.items()},
            "per_stream": [{"task": t, "stream": j, "il": float(v)} for (t, j), v in self.per_stream.items()],
        }


@dataclass(frozen=True)
class MCTree:
    tasks: frozenset[str]
    sink_task: str

    def __len__(self) -> int:
        return len(self.tasks)

    def key(self) -> tuple[str, ...]:
        return tuple(sorted(self.tasks))


def input_stream_loss(substreams: Sequence[tuple[float, float]]):
    """Rate-weighted loss of one input stream from its (rate, loss) substreams."""
    total = sum(r for r, _ in substreams)
    if total <= 0:
        return 1
    return sum(r * il for r, il in substreams) / total


def task_output_loss(input_kind: str, streams: Sequence[tuple[float, float]], failed: bool = False):
    """Output loss of a task from its (stream rate, stream loss) pairs."""
    if failed:
        return 1
    if input_kind == CORRELATED:
        keep = 1
        for _, il in streams:
            keep *= 1 - il
        return 1 - keep
    total = sum(r for r, _ in streams)
    if total <= 0:
        return 1
    return sum(r * il for r, il in streams) / total


def _propagate(tg: TaskGraph, failed: frozenset[str], treat_all_independent: bool, exact: bool):
    num = Fraction if exact else float
    per_task: dict[str, object] = {}
    per_stream: dict[tuple[str, int], object] = {}
    for t in tg.tasks:
        kind = tg.kind_of(t)
        if t in failed:
            per_task[t] = num(1)
            continue
        if kind == SOURCE:
            per_task[t] = num(0)
            continue
        streams = []
        for j, subs in enumerate(tg.inputs[t]):
            pairs = [(num(r), per_task[src]) for src, r in subs]
            il = input_stream_loss(pairs)
            per_stream[(t, j)] = num(il)
            streams.append((sum((r for r, _ in pairs), num(0)), num(il)))
        if treat_all_independent:
            kind = INDEPENDENT
        per_task[t] = num(task_output_loss(kind, streams))
    sink_rates = {t: num(tg.output_rates[t]) for t in tg.sink_tasks}
    return per_task, per_stream, sink_rates


def _report(tg, failed, treat_all_independent, exact) -> FidelityReport:
    unknown = set(failed) - set(tg.tasks)
    if unknown:
        raise KeyError(f"unknown tasks in scenario: {sorted(unknown)}")
    per_task, per_stream, sink_rates = _propagate(tg, frozenset(failed), treat_all_independent, exact)
    of = FidelityReport(0, per_task, per_stream, sink_rates).recomputed_of()
    # float round-off can leave OF a hair outside [0, 1]
    of = min(max(of, 0), 1)
    return FidelityReport(of, per_task, per_stream, sink_rates)


def _failed(scenario) -> frozenset[str]:
    if isinstance(scenario, FailureScenario):
        return scenario.failed
    return frozenset(scenario)


def output_fidelity(tg: TaskGraph, scenario: FailureScenario | Iterable[str], exact: bool = False) -> FidelityReport:
    """Propagate losses from the failed tasks to the sink and compute OF.

    With ``exact=True`` every quantity is a :class:`fractions.Fraction`.
    """
    return _report(tg, _failed(scenario), False, exact)


def internal_completeness(tg: TaskGraph, scenario: FailureScenario | Iterable[str], exact: bool = False):
    """IC baseline: same propagation with every operator treated as independent-input."""
    return _report(tg, _failed(scenario), True, exact).of


def plan_fidelity(tg: TaskGraph, plan: Iterable[str]) -> float:
    """Worst-case OF of a plan: every task outside the plan has failed."""
    cg = tg.compiled
    return cg.fidelity(cg.mask(plan))


def plan_fidelity_many(tg: TaskGraph, plans: Sequence[Iterable[str]]) -> np.ndarray:
    cg = tg.compiled
    if not plans:
        return np.zeros(0)
    return cg.fidelity_many(np.stack([cg.mask(p) for p in plans]))


def useful_tasks(tg: TaskGraph, alive: Iterable[str]) -> frozenset[str]:
    """Tasks of ``alive`` that belong to at least one MC-tree fully inside ``alive``."""
    cg = tg.compiled
    il = cg.losses(cg.mask(alive))
    live = {t for t, v in zip(tg.tasks, il) if v < 1.0}
    useful = {t for t in tg.sink_tasks if t in live}
    for t in reversed(tg.tasks):
        if t not in useful:
            continue
        for subs in tg.inputs[t]:
            for src, r in subs:
                if r > 0 and src in live:
                    useful.add(src)
    return frozenset(useful)


def _reconvergent(tg: TaskGraph) -> bool:
    return any(len(d) > 1 for d in tg.downstream_ops.values())


def enumerate_mc_trees(tg: TaskGraph, cap: int = DEFAULT_TREE_CAP) -> list[MCTree]:
    """All minimal complete trees, ordered lexicographically by sorted task ids."""
    memo: dict[str, list[frozenset[str]]] = {}

    def expand(t: str) -> list[frozenset[str]]:
        if t in memo:
            return memo[t]
        kind = tg.kind_of(t)
        if kind == SOURCE:
            res = [frozenset((t,))]
        else:
            per_stream = []
            for subs in tg.inputs[t]:
                opts: dict[frozenset[str], None] = {}
                for src, r in subs:
                    if r > 0:
                        for s in expand(src):
                            opts[s] = None
                per_stream.append(list(opts))
            if kind == CORRELATED:
                if any(not o for o in per_stream):
                    res = []
                else:
                    size = 1
                    for o in per_stream:
                        size *= len(o)
                    if size > cap:
                        raise TreeCapExceeded(cap)
                    res = list(dict.fromkeys(frozenset().union(*combo) | {t} for combo in itertools.product(*per_stream)))
            else:
                merged = dict.fromkeys(s for o in per_stream for s in o)
                res = [s | {t} for s in merged]
        if len(res) > cap:
            raise TreeCapExceeded(cap)
        memo[t] = res
        return res

    trees: dict[frozenset[str], str] = {}
    for sink in tg.sink_tasks:
        for s in expand(sink):
            trees.setdefault(s, sink)
            if len(trees) > cap:
                raise TreeCapExceeded(cap)
    sets = list(trees)
    if _reconvergent(tg):
        # shared upstream tasks can make one choice-tree a strict superset of another
        by_size = sorted(sets, key=len)
        kept = []
        for s in by_size:
            if not any(k < s for k in kept):
                kept.append(s)
        sets = kept
    out = [MCTree(s, trees[s]) for s in sets]
    out.sort(key=MCTree.key)
    return out


def min_tree_size(tg: TaskGraph) -> int:
    """Size of the smallest MC-tree (upper bound when upstream tasks are shared)."""
    best: dict[str, float] = {}
    for t in tg.tasks:
        kind = tg.kind_of(t)
        if kind == SOURCE:
            best[t] = 1
            continue
        per_stream = [min((best[s] for s, r in subs if r > 0), default=float("inf")) for subs in tg.inputs[t]]
        if kind == CORRELATED:
            best[t] = 1 + sum(per_stream)
        else:
            best[t] = 1 + min(per_stream, default=float("inf"))
    size = min((best[t] for t in tg.sink_tasks), default=float("inf"))
    return int(size) if size != float("inf") else 0
