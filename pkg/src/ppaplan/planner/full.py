"""Planning on full topologies (every edge uses Full partitioning)."""

from __future__ import annotations

from typing import Iterable

import numpy as np

from ..fidelity import plan_fidelity_many
from ..topology import FULL, TaskGraph
from .base import ReplicationPlan, check_budget, obj_key


class NotFullError(ValueError):
    pass


def is_full(tg: TaskGraph) -> bool:
    return all(p == FULL for _, _, p in tg.op_edges)


def replication_gains(tg: TaskGraph) -> dict[str, float]:
    """OF gained by keeping one task alive while the rest of its operator is down."""
    cg = tg.compiled
    rows, owners = [], []
    base_rows = {}
    for op in tg.operators:
        mates = tg.tasks_of(op)
        down = np.ones(cg.n, dtype=np.uint8)
        for t in mates:
            down[tg.index[t]] = 0
        base_rows[op] = len(rows)
        rows.append(down)
        owners.append(None)
        for t in mates:
            m = down.copy()
            m[tg.index[t]] = 1
            rows.append(m)
            owners.append(t)
    vals = cg.fidelity_many(np.stack(rows))
    gains = {}
    for op in tg.operators:
        b = base_rows[op]
        for k, t in enumerate(tg.tasks_of(op), start=1):
            gains[t] = float(vals[b + k] - vals[b])
    return gains


def plan_full(
    initial: Iterable[str],
    budget: int,
    tg: TaskGraph,
    max_steps: int | None = None,
    gains: dict[str, float] | None = None,
) -> ReplicationPlan:
    check_budget(tg, budget)
    if not is_full(tg):
        raise NotFullError("every edge of a full topology must use Full partitioning")
    gains = gains or replication_gains(tg)
    plan = set(initial)
    queues = {
        op: sorted((t for t in tg.tasks_of(op) if t not in plan), key=lambda t: (-obj_key(gains[t]), t))
        for op in tg.operators
    }
    steps = 0
    if not plan:
        if len(tg.operators) > budget:
            return ReplicationPlan.build(tg, (), budget, "full")
        for op in tg.operators:
            plan.add(queues[op].pop(0))
        steps += 1
    while len(plan) < budget and (max_steps is None or steps < max_steps):
        heads = [(op, q[0]) for op, q in queues.items() if q]
        if not heads:
            break
        values = plan_fidelity_many(tg, [plan | {t} for _, t in heads])
        (op, t), _ = min(zip(heads, values.tolist()), key=lambda hv: (-obj_key(hv[1]), hv[0][1]))
        queues[op].pop(0)
        plan.add(t)
        steps += 1
    return ReplicationPlan.build(tg, plan, max(budget, len(plan)), "full")

