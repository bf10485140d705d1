"""Replication plan type and shared ordering helpers."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from ..fidelity import plan_fidelity
from ..topology import TaskGraph

# objective comparisons are made on rounded values so that equal plans reached
# through different float paths tie deterministically
OBJ_DIGITS = 12


class PlanError(ValueError):
    pass


def obj_key(value: float) -> float:
    return round(float(value), OBJ_DIGITS)


def plan_key(objective: float, tasks: Iterable[str]) -> tuple:
    """Sort key: higher objective, then fewer tasks, then lexicographic task ids."""
    ts = tuple(sorted(tasks))
    return (-obj_key(objective), len(ts), ts)


@dataclass(frozen=True)
class ReplicationPlan:
    tasks: frozenset[str]
    budget: int
    objective: float
    algorithm: str = ""
    topology_digest: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "tasks", frozenset(self.tasks))
        if len(self.tasks) > self.budget:
            raise PlanError(f"plan uses {len(self.tasks)} tasks but budget is {self.budget}")

    @classmethod
    def build(cls, tg: TaskGraph, tasks: Iterable[str], budget: int, algorithm: str) -> "ReplicationPlan":
        tasks = frozenset(tasks)
        return cls(tasks, budget, plan_fidelity(tg, tasks), algorithm, tg.digest)

    def __len__(self) -> int:
        return len(self.tasks)

    def to_dict(self) -> dict:
        return {
            "budget": self.budget,
            "tasks": sorted(self.tasks),
            "objective": self.objective,
            "algorithm": self.algorithm,
            "topology_digest": self.topology_digest,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ReplicationPlan":
        try:
            return cls(
                frozenset(data["tasks"]),
                int(data["budget"]),
                float(data["objective"]),
                data.get("algorithm", ""),
                data.get("topology_digest"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise PlanError(f"malformed plan document: {exc}") from exc

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "ReplicationPlan":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def check_budget(tg: TaskGraph, budget: int) -> None:
    if budget < 0:
        raise PlanError("budget must be non-negative")
