"""Bottom-up search over unions of MC-trees, one resource unit at a time."""

from __future__ import annotations

from ..fidelity import DEFAULT_TREE_CAP, TreeCapExceeded, enumerate_mc_trees, plan_fidelity_many
from ..topology import TaskGraph
from .base import ReplicationPlan, check_budget, plan_key


def plan_dp(tg: TaskGraph, budget: int, cap: int = DEFAULT_TREE_CAP) -> ReplicationPlan:
    check_budget(tg, budget)
    trees = [t.tasks for t in enumerate_mc_trees(tg, cap)]

    candidates: dict[frozenset[str], None] = {frozenset(): None}
    retired: dict[frozenset[str], None] = {}
    usage = 0
    while usage < budget:
        usage += 1
        for cp in list(candidates):
            dif = usage - len(cp)
            open_trees = [tr for tr in trees if not tr <= cp]
            widest = max((len(tr - cp) for tr in open_trees), default=0)
            if dif > widest:
                # no tree can ever fill the gap; stop expanding but keep it as an answer
                del candidates[cp]
                retired[cp] = None
                continue
            for tr in open_trees:
                if len(tr - cp) == dif:
                    nxt = cp | tr
                    if nxt not in candidates:
                        candidates[nxt] = None
                        if len(candidates) > cap:
                            raise TreeCapExceeded(cap)

    pool = list(candidates) + list(retired)
    values = plan_fidelity_many(tg, pool)
    best = min(zip(values.tolist(), pool), key=lambda vp: plan_key(vp[0], vp[1]))
    return ReplicationPlan.build(tg, best[1], budget, "dp")
