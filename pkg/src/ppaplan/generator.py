"""Random topology generator for the algorithm-comparison experiments."""

from __future__ import annotations

import random
from dataclasses import dataclass

from .topology import (
    CORRELATED,
    FULL,
    INDEPENDENT,
    INTERNAL,
    MERGE,
    ONE_TO_ONE,
    SINK,
    SOURCE,
    SPLIT,
    Connection,
    OperatorSpec,
    PartitionEdge,
    Topology,
    task_id,
)

KINDS = ("structured", "full", "mixed")


class GeneratorError(ValueError):
    pass


@dataclass(frozen=True)
class GeneratorSpec:
    ops: tuple[int, int] = (5, 10)
    par: tuple[int, int] = (2, 6)
    skew: str = "uniform"  # "uniform" or "zipf"
    zipf_s: float = 0.1
    join_fraction: float = 0.0
    kind: str = "mixed"
    seed: int = 0

    def check(self) -> None:
        lo, hi = self.ops
        if lo > hi or lo < 1:
            raise GeneratorError(f"empty operator-count range {self.ops}")
        if self.par[0] > self.par[1] or self.par[0] < 1:
            raise GeneratorError(f"empty parallelism range {self.par}")
        if self.skew not in ("uniform", "zipf"):
            raise GeneratorError(f"unknown skew {self.skew!r}")
        if self.skew == "zipf" and not self.zipf_s > 0:
            raise GeneratorError("zipf parameter must be > 0")
        if not 0 <= self.join_fraction <= 1:
            raise GeneratorError("join fraction must lie in [0, 1]")
        if self.kind not in KINDS:
            raise GeneratorError(f"unknown topology kind {self.kind!r}")
        if hi < 2:
            raise GeneratorError("a topology needs at least a source and a sink operator")

    @classmethod
    def parse_skew(cls, text: str) -> tuple[str, float]:
        """``uniform`` or ``zipf:<s>``."""
        if text == "uniform":
            return "uniform", 0.1
        name, _, s = text.partition(":")
        if name != "zipf":
            raise GeneratorError(f"bad skew {text!r}")
        try:
            return "zipf", float(s) if s else 0.1
        except ValueError as exc:
            raise GeneratorError(f"bad zipf parameter in {text!r}") from exc


def zipf_weights(n: int, s: float, rng: random.Random) -> list[float]:
    w = [1.0 / (k**s) for k in range(1, n + 1)]
    rng.shuffle(w)
    return w


def _structured_choices(n2: int, par: tuple[int, int]) -> dict[str, list[int]]:
    lo, hi = par
    choices = {}
    if lo <= n2 <= hi:
        choices[ONE_TO_ONE] = [n2]
    merge = [k * n2 for k in range(2, hi // n2 + 1) if lo <= k * n2 <= hi]
    if merge:
        choices[MERGE] = merge
    split = [n2 // k for k in range(2, n2 + 1) if n2 % k == 0 and lo <= n2 // k <= hi]
    if split:
        choices[SPLIT] = split
    return choices


def generate_random(spec: GeneratorSpec) -> Topology:
    """Draw a random in-tree topology; deterministic for a fixed seed."""
    spec.check()
    rng = random.Random(spec.seed)
    n = rng.randint(max(spec.ops[0], 2), spec.ops[1])
    names = [f"O{i + 1}" for i in range(n)]

    parent = {i: rng.randint(i + 1, n - 1) for i in range(n - 1)}
    children: dict[int, list[int]] = {i: [] for i in range(n)}
    for c, p in parent.items():
        children[p].append(c)

    multi = [i for i in range(n) if len(children[i]) >= 2]
    joins = set(rng.sample(multi, round(spec.join_fraction * len(multi)))) if multi else set()

    par = {n - 1: rng.randint(*spec.par)}
    pattern = {}
    for c in range(n - 2, -1, -1):
        p = parent[c]
        structured = _structured_choices(par[p], spec.par)
        if spec.kind == "full":
            use_full = True
        elif spec.kind == "structured":
            use_full = p == n - 1 and rng.random() < 0.5
        else:
            use_full = rng.random() < 0.5
        if use_full or not structured:
            pattern[c] = FULL
            par[c] = rng.randint(*spec.par)
        else:
            pat = rng.choice(sorted(structured))
            pattern[c] = pat
            par[c] = rng.choice(structured[pat])

    ops = []
    for i in range(n):
        role = SINK if i == n - 1 else SOURCE if not children[i] else INTERNAL
        ops.append(OperatorSpec(names[i], par[i], CORRELATED if i in joins else INDEPENDENT, role))

    edges = []
    for c in range(n - 1):
        p = parent[c]
        conns = None
        if spec.skew == "zipf" and pattern[c] in (FULL, SPLIT):
            # key skew: the same downstream tasks are hot for every upstream task
            weights = zipf_weights(par[p], spec.zipf_s, rng)
            if pattern[c] == FULL:
                conns = tuple(Connection(u, tuple(range(par[p])), tuple(weights)) for u in range(par[c]))
            else:
                k = par[p] // par[c]
                conns = tuple(
                    Connection(u, tuple(range(u * k, (u + 1) * k)), tuple(weights[u * k : (u + 1) * k]))
                    for u in range(par[c])
                )
        edges.append(PartitionEdge(names[c], names[p], pattern[c], conns))

    rates = {}
    for i in range(n):
        if children[i]:
            continue
        base = rng.uniform(1.0, 10.0)
        if spec.skew == "zipf":
            w = zipf_weights(par[i], spec.zipf_s, rng)
        else:
            w = [1.0] * par[i]
        total = sum(w)
        for k in range(par[i]):
            rates[task_id(names[i], k)] = round(base * par[i] * w[k] / total, 9)
    return Topology(tuple(ops), tuple(edges), rates)
