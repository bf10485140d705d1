"""Planning on structured topologies: unit splitting and segment-based expansion."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable

from ..fidelity import DEFAULT_TREE_CAP, MCTree, enumerate_mc_trees, plan_fidelity, plan_fidelity_many, useful_tasks
from ..topology import CORRELATED, FULL, MERGE, SPLIT, TaskGraph
from .base import ReplicationPlan, check_budget, obj_key

EPS = 1e-12


class NotStructuredError(ValueError):
    pass


def is_structured(tg: TaskGraph) -> bool:
    """Full partitioning only on edges into the graph's output operators."""
    sinks = set(tg.sink_ops)
    return all(p != FULL or b in sinks for _, b, p in tg.op_edges)


def unit_boundaries(tg: TaskGraph) -> list[tuple[str, str]]:
    """Merge edges cut because the receiving operator splits its output or is a join."""
    cuts = []
    for a, b, p in tg.op_edges:
        if p != MERGE:
            continue
        splits_out = any(x == b and q == SPLIT for x, _, q in tg.op_edges)
        is_join = tg.input_kind[b] == CORRELATED and len(tg.upstream_ops[b]) >= 2
        if splits_out or is_join:
            cuts.append((a, b))
    return cuts


@dataclass(frozen=True, eq=False)
class Unit:
    uid: int
    operators: tuple[str, ...]
    graph: TaskGraph
    segments: tuple[MCTree, ...]

    @cached_property
    def tasks(self) -> frozenset[str]:
        return frozenset(self.graph.tasks)

    @cached_property
    def local_of(self) -> dict[frozenset[str], float]:
        """OF of each segment with the unit treated as a standalone topology."""
        vals = plan_fidelity_many(self.graph, [s.tasks for s in self.segments])
        return {s.tasks: float(v) for s, v in zip(self.segments, vals)}


@dataclass(frozen=True)
class CandidateExpansion:
    segments: tuple[frozenset[str], ...]
    new_tasks: frozenset[str]
    gain: float

    @property
    def cost(self) -> int:
        return len(self.new_tasks)

    @property
    def profit_density(self) -> float:
        return self.gain / self.cost if self.cost else 0.0


def split_units(tg: TaskGraph, cap: int = DEFAULT_TREE_CAP) -> list[Unit]:
    if not is_structured(tg):
        raise NotStructuredError("topology has Full partitioning outside its output operators")
    cut = set(unit_boundaries(tg))
    parent = {op: op for op in tg.operators}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b, _ in tg.op_edges:
        if (a, b) not in cut:
            parent[find(a)] = find(b)
    groups: dict[str, list[str]] = {}
    for op in tg.operators:
        groups.setdefault(find(op), []).append(op)
    units = []
    for uid, ops in enumerate(groups.values()):
        g = tg.subgraph(ops)
        units.append(Unit(uid, tuple(ops), g, tuple(enumerate_mc_trees(g, cap))))
    return units


def unit_adjacency(tg: TaskGraph, units: list[Unit]) -> dict[int, list[int]]:
    owner = {op: u.uid for u in units for op in u.operators}
    adj: dict[int, set[int]] = {u.uid: set() for u in units}
    for a, b, _ in tg.op_edges:
        if owner[a] != owner[b]:
            adj[owner[a]].add(owner[b])
            adj[owner[b]].add(owner[a])
    return {k: sorted(v) for k, v in adj.items()}


def _neighbours(tg: TaskGraph) -> dict[str, set[str]]:
    nb: dict[str, set[str]] = {t: set() for t in tg.tasks}
    for s in tg.substreams:
        if s.rate > 0:
            nb[s.src].add(s.dst)
            nb[s.dst].add(s.src)
    return nb


class _StructuredSearch:
    def __init__(self, tg: TaskGraph, cap: int):
        self.tg = tg
        self.units = split_units(tg, cap)
        self.adj = unit_adjacency(tg, self.units)
        self.nb = _neighbours(tg)

    def _connected(self, seg: frozenset[str], group: set[str]) -> bool:
        return any(n in group for t in seg for n in self.nb[t])

    def _grow(self, start: Unit, seed: frozenset[str], plan: set[str], left: int):
        """BFS over units adding, per visited unit, its best segment connected to the group."""
        group = set(seed)
        chosen = [seed]
        seen = {start.uid}
        queue = deque(self.adj[start.uid])
        seen.update(queue)
        while queue:
            unit = self.units[queue.popleft()]
            conn = [s.tasks for s in unit.segments if self._connected(s.tasks, group)]
            if conn:
                best = min(conn, key=lambda s: (-obj_key(unit.local_of[s]), len(s - plan - group), sorted(s)))
                if len((group | best) - plan) > left:
                    break
                group |= best
                chosen.append(best)
            for nxt in self.adj[unit.uid]:
                if nxt not in seen:
                    seen.add(nxt)
                    queue.append(nxt)
        return group, chosen

    def step(self, plan: set[str], budget: int, base: float) -> CandidateExpansion | None:
        left = budget - len(plan)
        pool: dict[frozenset[str], tuple] = {}
        for unit in self.units:
            if unit.tasks <= plan:
                continue
            for seg in unit.segments:
                g = seg.tasks
                if g <= plan or len(g - plan) > left:
                    continue
                group, chosen = set(g), [g]
                if obj_key(plan_fidelity(self.tg, plan | group)) <= obj_key(base):
                    group, chosen = self._grow(unit, g, plan, left)
                # drop tasks that cannot reach the output through complete trees
                new = useful_tasks(self.tg, plan | group) - plan
                if new and len(new) <= left:
                    pool.setdefault(frozenset(new), tuple(chosen))
        if not pool:
            return None
        keys = list(pool)
        values = plan_fidelity_many(self.tg, [plan | k for k in keys])
        cands = [CandidateExpansion(pool[k], k, float(v) - base) for k, v in zip(keys, values)]
        best = min(cands, key=lambda c: (-obj_key(c.profit_density), c.cost, sorted(c.new_tasks)))
        if best.gain <= EPS:
            return None
        return best


def plan_structured(
    initial: Iterable[str],
    budget: int,
    tg: TaskGraph,
    max_steps: int | None = None,
    cap: int = DEFAULT_TREE_CAP,
    search: _StructuredSearch | None = None,
) -> ReplicationPlan:
    """Grow ``initial`` by the densest connected segment groups until the budget is spent."""
    check_budget(tg, budget)
    search = search or _StructuredSearch(tg, cap)
    plan = set(initial)
    base = plan_fidelity(tg, plan)
    steps = 0
    while len(plan) < budget and (max_steps is None or steps < max_steps):
        if all(u.tasks <= plan for u in search.units):
            break
        best = search.step(plan, budget, base)
        if best is None:
            break
        plan |= best.new_tasks
        base += best.gain
        steps += 1
    return ReplicationPlan.build(tg, plan, max(budget, len(plan)), "structured")
