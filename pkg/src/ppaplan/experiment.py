"""Algorithm-comparison sweep over families of random topologies."""

from __future__ import annotations

import csv
import io
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

from .fidelity import DEFAULT_TREE_CAP, TreeCapExceeded
from .generator import GeneratorSpec, generate_random
from .planner import plan_dp, plan_exhaustive, plan_greedy, plan_structure_aware
from .planner.exhaustive import MAX_TASKS
from .topology import materialize

ALGORITHMS = ("dp", "greedy", "sa", "exhaustive")
COLUMNS = ("config", "ratio", "algorithm", "mean_of", "stddev", "trials")
DEFAULT_RATIOS = (0.1, 0.2, 0.3, 0.4, 0.5)

# Base configuration: 8-16 tasks per operator keeps 10% of the tasks at or
# above the operator count, so every algorithm can afford a complete tree.
BASE = GeneratorSpec(ops=(5, 10), par=(8, 16))

FAMILIES: dict[str, dict[str, dict]] = {
    "skew": {"skew=uniform": {}, "skew=zipf:0.1": {"skew": "zipf", "zipf_s": 0.1}},
    "par": {"par=4:8": {"par": (4, 8)}, "par=8:16": {"par": (8, 16)}},
    "kind": {"kind=structured": {"kind": "structured"}, "kind=full": {"kind": "full"}},
    "join": {"join=0": {"join_fraction": 0.0}, "join=0.5": {"join_fraction": 0.5}},
}


class ExperimentError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentSpec:
    configs: dict[str, GeneratorSpec] = field(default_factory=dict)
    ratios: tuple[float, ...] = DEFAULT_RATIOS
    algorithms: tuple[str, ...] = ("sa", "greedy")
    trials: int = 100
    seed: int = 0
    cap: int = DEFAULT_TREE_CAP

    def check(self) -> None:
        if not self.configs:
            raise ExperimentError("no configurations to run")
        if not self.ratios or any(not 0 < r <= 1 for r in self.ratios):
            raise ExperimentError("ratios must lie in (0, 1]")
        bad = [a for a in self.algorithms if a not in ALGORITHMS]
        if bad or not self.algorithms:
            raise ExperimentError(f"unknown algorithms {bad}")
        if self.trials < 1:
            raise ExperimentError("trials must be >= 1")
        for g in self.configs.values():
            g.check()

    @classmethod
    def for_families(cls, families, base: GeneratorSpec = BASE, **kw) -> "ExperimentSpec":
        configs = {}
        for fam in families:
            if fam not in FAMILIES:
                raise ExperimentError(f"unknown family {fam!r}")
            for name, over in FAMILIES[fam].items():
                configs[name] = replace(base, **over)
        return cls(configs=configs, **kw)


def budget_for(ratio: float, n_tasks: int) -> int:
    """Replication budget for a ratio of the task count (floor, at least 0)."""
    return max(0, int(ratio * n_tasks + 1e-9))


def _plan(alg: str, tg, budget: int, cap: int) -> float:
    if alg == "dp":
        return plan_dp(tg, budget, cap).objective
    if alg == "greedy":
        return plan_greedy(tg, budget).objective
    if alg == "sa":
        return plan_structure_aware(tg, budget, cap).objective
    return plan_exhaustive(tg, budget).objective


def _trial(args) -> dict[tuple[float, str], float | None]:
    """Objectives of every (ratio, algorithm) on one random topology; None when skipped."""
    gspec, ratios, algorithms, cap = args
    tg = materialize(generate_random(gspec))
    n = len(tg.tasks)
    out = {}
    for alg in algorithms:
        for r in ratios:
            if alg == "exhaustive" and n > MAX_TASKS:
                out[(r, alg)] = None
                continue
            try:
                out[(r, alg)] = _plan(alg, tg, budget_for(r, n), cap)
            except TreeCapExceeded:
                out[(r, alg)] = None
    return out


def trial_seed(seed: int, trial: int) -> int:
    return seed * 1_000_003 + trial


def run_experiment(spec: ExperimentSpec, workers: int = 1) -> list[dict]:
    """One row per (config, ratio, algorithm), sorted by those keys."""
    spec.check()
    jobs = []
    for name, g in spec.configs.items():
        for i in range(spec.trials):
            jobs.append((name, (replace(g, seed=trial_seed(spec.seed, i)), spec.ratios, spec.algorithms, spec.cap)))
    # families share their base configuration; run each distinct trial once
    unique = list(dict.fromkeys(a for _, a in jobs))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            done = list(pool.map(_trial, unique, chunksize=4))
    else:
        done = [_trial(a) for a in unique]
    memo = dict(zip(unique, done))
    results = [memo[a] for _, a in jobs]
    acc: dict[tuple[str, float, str], list] = {}
    for (name, _), res in zip(jobs, results):
        for (r, alg), v in res.items():
            acc.setdefault((name, r, alg), []).append(v)
    rows = []
    for (name, r, alg), vals in sorted(acc.items()):
        if any(v is None for v in vals):
            rows.append({"config": name, "ratio": r, "algorithm": alg, "mean_of": None, "stddev": None, "trials": 0})
            continue
        rows.append(
            {
                "config": name,
                "ratio": r,
                "algorithm": alg,
                "mean_of": statistics.fmean(vals),
                "stddev": statistics.pstdev(vals),
                "trials": len(vals),
            }
        )
    return rows


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for row in rows:
        if row["mean_of"] is None:
            w.writerow([row["config"], row["ratio"], row["algorithm"], "skipped", "", 0])
        else:
            w.writerow(
                [row["config"], row["ratio"], row["algorithm"], f"{row['mean_of']:.12g}", f"{row['stddev']:.12g}", row["trials"]]
            )
    return buf.getvalue()
