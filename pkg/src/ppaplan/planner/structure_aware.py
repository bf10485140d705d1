"""General topologies: decompose into full/structured sub-topologies and merge their plans."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from ..fidelity import DEFAULT_TREE_CAP, _reconvergent, min_tree_size, plan_fidelity, useful_tasks
from ..topology import FULL, TaskGraph
from .base import ReplicationPlan, check_budget, obj_key
from .full import plan_full, replication_gains
from .structured import _StructuredSearch, plan_structured

FULL_KIND = "full"
STRUCTURED_KIND = "structured"


@dataclass(frozen=True, eq=False)
class SubTopology:
    sid: int
    kind: str
    operators: tuple[str, ...]
    graph: TaskGraph

    @property
    def n_operators(self) -> int:
        return len(self.operators)


def decompose(tg: TaskGraph) -> list[SubTopology]:
    """Split ``tg`` into full and structured sub-topologies by DFS from the sink upstream.

    A sub-topology's kind is fixed by the first edge that does not end at its
    own output operator. Full edges into the output operator fit either kind.
    Operators that do not fit are pushed onto the start set and seed their
    own sub-topology, which puts a Full edge on every boundary.
    """

    def all_full_inputs(op: str) -> bool:
        return all(tg.pattern(u, op) == FULL for u in tg.upstream_ops[op])

    assigned: dict[str, int] = {}
    starts = deque(sorted(tg.sink_ops, key=tg.operators.index))
    subs = []
    while starts:
        s = starts.popleft()
        if s in assigned:
            continue
        sid = len(subs)
        members = [s]
        assigned[s] = sid
        kind = None
        stack = [s]
        while stack:
            v = stack.pop()
            for u in tg.upstream_ops[v]:
                if u in assigned:
                    continue
                full_edge = tg.pattern(u, v) == FULL
                if full_edge and v == s:
                    ok = kind != FULL_KIND or all_full_inputs(u)
                elif full_edge:
                    if kind is None:
                        fits = all(all_full_inputs(m) for m in members if m != s) and all_full_inputs(v)
                        kind = FULL_KIND if fits else STRUCTURED_KIND
                    ok = kind == FULL_KIND and all_full_inputs(u)
                else:
                    if kind is None:
                        kind = STRUCTURED_KIND
                    ok = kind == STRUCTURED_KIND
                if ok:
                    assigned[u] = sid
                    members.append(u)
                    stack.append(u)
                else:
                    starts.append(u)
        ops = tuple(op for op in tg.operators if op in set(members))
        subs.append(SubTopology(sid, kind or FULL_KIND, ops, tg.subgraph(ops)))
    return subs


class _SubPlanner:
    def __init__(self, sub: SubTopology, cap: int):
        self.sub = sub
        if sub.kind == FULL_KIND:
            self.gains = replication_gains(sub.graph)
            self.initial_budget = sub.n_operators
        else:
            self.search = _StructuredSearch(sub.graph, cap)
            self.initial_budget = min_tree_size(sub.graph)

    def run(self, plan, budget, max_steps=None) -> frozenset[str]:
        if self.sub.kind == FULL_KIND:
            res = plan_full(plan, budget, self.sub.graph, max_steps=max_steps, gains=self.gains)
        else:
            res = plan_structured(plan, budget, self.sub.graph, max_steps=max_steps, search=self.search)
        return res.tasks


def plan_structure_aware(tg: TaskGraph, budget: int, cap: int = DEFAULT_TREE_CAP) -> ReplicationPlan:
    check_budget(tg, budget)
    # min_tree_size is exact on in-trees; with shared upstream tasks it is only an upper bound
    if not _reconvergent(tg) and budget < min_tree_size(tg):
        return ReplicationPlan.build(tg, (), budget, "sa")
    subs = decompose(tg)
    planners = [_SubPlanner(s, cap) for s in subs]

    parts: list[frozenset[str]] = []
    usage = 0
    for sp in planners:
        part = frozenset()
        if usage + sp.initial_budget <= budget:
            part = sp.run((), sp.initial_budget)
        parts.append(part)
        usage += len(part)

    def merged(ps):
        return frozenset().union(*ps)

    def grow(usage, strict):
        while usage < budget:
            current = plan_fidelity(tg, merged(parts))
            options = []
            for i, sp in enumerate(planners):
                room = budget - usage + len(parts[i])
                nxt = sp.run(parts[i], room, max_steps=1)
                cost = len(nxt) - len(parts[i])
                if cost <= 0 or usage + cost > budget:
                    continue
                trial = parts[:i] + [nxt] + parts[i + 1 :]
                delta = (plan_fidelity(tg, merged(trial)) - current) / cost
                if strict and obj_key(delta) <= 0:
                    continue
                options.append((-obj_key(delta), cost, i, nxt))
            if not options:
                break
            _, cost, i, nxt = min(options)
            parts[i] = nxt
            usage += cost
        return usage

    def prune():
        # initial allocations can land on sub-topologies no complete tree reaches
        keep = useful_tasks(tg, merged(parts))
        parts[:] = [p & keep for p in parts]
        return sum(len(p) for p in parts)

    grow(usage, strict=False)
    usage = prune()
    if usage < budget:
        grow(usage, strict=True)
        prune()
    return ReplicationPlan.build(tg, merged(parts), budget, "sa")
