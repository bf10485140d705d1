"""Replication planners. Every planner takes a task graph and a budget and returns a ReplicationPlan."""

from .base import PlanError, ReplicationPlan
from .dp import plan_dp
from .exhaustive import plan_exhaustive
from .full import NotFullError, plan_full, replication_gains
from .greedy import plan_greedy
from .structure_aware import SubTopology, decompose, plan_structure_aware
from .structured import CandidateExpansion, NotStructuredError, Unit, plan_structured, split_units

ALGORITHMS = {
    "dp": plan_dp,
    "greedy": plan_greedy,
    "sa": plan_structure_aware,
    "exhaustive": plan_exhaustive,
}

__all__ = [
    "ALGORITHMS",
    "CandidateExpansion",
    "NotFullError",
    "NotStructuredError",
    "PlanError",
    "ReplicationPlan",
    "SubTopology",
    "Unit",
    "decompose",
    "plan_dp",
    "plan_exhaustive",
    "plan_full",
    "plan_greedy",
    "plan_structure_aware",
    "plan_structured",
    "replication_gains",
    "split_units",
]
