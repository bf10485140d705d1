"""Brute-force optimal plan, used as the oracle for the other planners."""

from __future__ import annotations

import itertools

import numpy as np

from ..topology import TaskGraph
from .base import PlanError, ReplicationPlan, check_budget, obj_key

MAX_TASKS = 25
_CHUNK = 65536


def best_plans_by_size(tg: TaskGraph, max_size: int) -> list[tuple[float, tuple[str, ...]]]:
    """For every size k <= max_size, the best plan of exactly k tasks (first in lexicographic order on ties)."""
    if len(tg.tasks) > MAX_TASKS:
        raise PlanError(f"exhaustive search limited to {MAX_TASKS} tasks, graph has {len(tg.tasks)}")
    cg = tg.compiled
    names = sorted(tg.tasks)
    col = np.asarray([cg.tasks.index(t) for t in names], dtype=np.intp)
    out = []
    for k in range(min(max_size, len(names)) + 1):
        best_val, best_combo = -1.0, ()
        combos = itertools.combinations(range(len(names)), k)
        while True:
            chunk = list(itertools.islice(combos, _CHUNK))
            if not chunk:
                break
            masks = np.zeros((len(chunk), cg.n), dtype=np.uint8)
            if k:
                idx = col[np.asarray(chunk, dtype=np.intp)]
                np.put_along_axis(masks, idx, 1, axis=1)
            vals = np.round(cg.fidelity_many(masks), 12)
            i = int(np.argmax(vals))
            if vals[i] > best_val:
                best_val, best_combo = float(vals[i]), chunk[i]
        out.append((best_val, tuple(names[i] for i in best_combo)))
    return out


def plan_exhaustive(tg: TaskGraph, budget: int) -> ReplicationPlan:
    check_budget(tg, budget)
    if budget > len(tg.tasks):
        raise PlanError(f"budget {budget} exceeds task count {len(tg.tasks)}")
    best = None
    for val, tasks in best_plans_by_size(tg, budget):
        # sizes ascend, so a strictly larger objective is needed to prefer a bigger plan
        if best is None or obj_key(val) > obj_key(best[0]):
            best = (val, tasks)
    return ReplicationPlan.build(tg, best[1], budget, "exhaustive")
