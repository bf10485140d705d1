"""Rank tasks by the damage their individual failure causes and replicate the worst R."""

from __future__ import annotations

import numpy as np

from ..topology import TaskGraph
from .base import ReplicationPlan, check_budget, obj_key


def single_failure_fidelity(tg: TaskGraph) -> dict[str, float]:
    """OF of the topology when only that task fails."""
    cg = tg.compiled
    masks = np.ones((cg.n, cg.n), dtype=np.uint8)
    np.fill_diagonal(masks, 0)
    return dict(zip(cg.tasks, cg.fidelity_many(masks).tolist()))


def plan_greedy(tg: TaskGraph, budget: int) -> ReplicationPlan:
    check_budget(tg, budget)
    scores = single_failure_fidelity(tg)
    ranked = sorted(tg.tasks, key=lambda t: (obj_key(scores[t]), t))
    return ReplicationPlan.build(tg, ranked[:budget], budget, "greedy")
