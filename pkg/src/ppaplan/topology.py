"""Operator/task DAG model: operators, partitioned edges, validation and task expansion."""

from __future__ import annotations

import hashlib
import heapq
import json
from collections import defaultdict, deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple

INDEPENDENT = "independent"
CORRELATED = "correlated"
INPUT_KINDS = (INDEPENDENT, CORRELATED)

SOURCE = "source"
INTERNAL = "internal"
SINK = "sink"
ROLES = (SOURCE, INTERNAL, SINK)

ONE_TO_ONE = "one_to_one"
SPLIT = "split"
MERGE = "merge"
FULL = "full"
PATTERNS = (ONE_TO_ONE, SPLIT, MERGE, FULL)

FORMAT_VERSION = 1


class TopologyError(ValueError):
    """Raised when a topology cannot be used (first violation is attached)."""

    def __init__(self, violation: "Violation"):
        super().__init__(str(violation))
        self.violation = violation


class Violation(NamedTuple):
    code: str
    message: str

    def __str__(self) -> str:
        return f"{self.code}: {self.message}"


def task_id(operator_id: str, index: int) -> str:
    return f"{operator_id}#{index}"


def split_task_id(tid: str) -> tuple[str, int]:
    op, _, idx = tid.rpartition("#")
    return op, int(idx)


@dataclass(frozen=True)
class OperatorSpec:
    id: str
    parallelism: int
    input_kind: str = INDEPENDENT
    role: str = INTERNAL
    selectivity: float = 1.0

    def __post_init__(self):
        # input kind has no meaning for sources
        if self.role == SOURCE and self.input_kind != INDEPENDENT:
            object.__setattr__(self, "input_kind", INDEPENDENT)


@dataclass(frozen=True)
class Connection:
    up: int
    down: tuple[int, ...]
    weights: tuple[float, ...] | None = None


@dataclass(frozen=True)
class PartitionEdge:
    src: str
    dst: str
    pattern: str
    connections: tuple[Connection, ...] | None = None


@dataclass(frozen=True)
class Topology:
    operators: tuple[OperatorSpec, ...]
    edges: tuple[PartitionEdge, ...]
    source_rates: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "operators", tuple(self.operators))
        object.__setattr__(self, "edges", tuple(self.edges))
        object.__setattr__(self, "source_rates", dict(self.source_rates))

    def __hash__(self):
        return hash(self.digest())

    @cached_property
    def by_id(self) -> dict[str, OperatorSpec]:
        return {op.id: op for op in self.operators}

    def incoming(self, op_id: str) -> list[PartitionEdge]:
        return [e for e in self.edges if e.dst == op_id]

    def outgoing(self, op_id: str) -> list[PartitionEdge]:
        return [e for e in self.edges if e.src == op_id]

    @property
    def sink(self) -> OperatorSpec:
        sinks = [op for op in self.operators if op.role == SINK]
        if len(sinks) != 1:
            raise TopologyError(Violation("sink-count", f"expected one sink, found {len(sinks)}"))
        return sinks[0]

    @property
    def task_count(self) -> int:
        return sum(op.parallelism for op in self.operators)

    def with_source_rates(self, rates: Mapping[str, float]) -> "Topology":
        return Topology(self.operators, self.edges, rates)

    # -- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        edges = []
        for e in self.edges:
            d = {"from": e.src, "to": e.dst, "pattern": e.pattern}
            if e.connections is not None:
                conns = []
                for c in e.connections:
                    cd = {"up": c.up, "down": list(c.down)}
                    if c.weights is not None:
                        cd["weights"] = list(c.weights)
                    conns.append(cd)
                d["connections"] = conns
            edges.append(d)
        return {
            "version": FORMAT_VERSION,
            "operators": [
                {
                    "id": op.id,
                    "parallelism": op.parallelism,
                    "input_kind": op.input_kind,
                    "role": op.role,
                    "selectivity": op.selectivity,
                }
                for op in self.operators
            ],
            "edges": edges,
            "source_rates": dict(self.source_rates),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "Topology":
        if data.get("version") != FORMAT_VERSION:
            raise TopologyError(Violation("version", f"unsupported topology version {data.get('version')!r}"))
        try:
            ops = [
                OperatorSpec(
                    id=str(o["id"]),
                    parallelism=o["parallelism"],
                    input_kind=o.get("input_kind", INDEPENDENT),
                    role=o.get("role", INTERNAL),
                    selectivity=float(o.get("selectivity", 1.0)),
                )
                for o in data["operators"]
            ]
            edges = []
            for e in data["edges"]:
                conns = None
                if e.get("connections") is not None:
                    conns = tuple(
                        Connection(
                            up=int(c["up"]),
                            down=tuple(int(d) for d in c["down"]),
                            weights=None if c.get("weights") is None else tuple(float(w) for w in c["weights"]),
                        )
                        for c in e["connections"]
                    )
                edges.append(PartitionEdge(str(e["from"]), str(e["to"]), e["pattern"], conns))
            rates = {str(k): float(v) for k, v in data.get("source_rates", {}).items()}
        except (KeyError, TypeError, ValueError) as exc:
            raise TopologyError(Violation("format", f"malformed topology document: {exc}")) from exc
        return cls(tuple(ops), tuple(edges), rates)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def digest(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def load_topology(path: str | Path) -> Topology:
    with open(path, encoding="utf-8") as fh:
        return Topology.from_dict(json.load(fh))


def save_topology(topology: Topology, path: str | Path) -> None:
    Path(path).write_text(topology.dumps(), encoding="utf-8")


# -- validation ---------------------------------------------------------


def _default_connections(pattern: str, n1: int, n2: int) -> list[tuple[int, list[int], None]] | None:
    if pattern == ONE_TO_ONE:
        if n1 != n2:
            return None
        return [(i, [i], None) for i in range(n1)]
    if pattern == SPLIT:
        if n2 % n1 or n2 // n1 < 2:
            return None
        k = n2 // n1
        return [(i, list(range(i * k, (i + 1) * k)), None) for i in range(n1)]
    if pattern == MERGE:
        if n1 % n2 or n1 // n2 < 2:
            return None
        k = n1 // n2
        return [(i, [i // k], None) for i in range(n1)]
    return [(i, list(range(n2)), None) for i in range(n1)]


def edge_connections(edge: PartitionEdge, n1: int, n2: int) -> list[tuple[int, list[int], tuple | None]]:
    """Connection map of an edge, one entry per upstream task (explicit or default wiring)."""
    if edge.connections is not None:
        return sorted(((c.up, list(c.down), c.weights) for c in edge.connections), key=lambda c: c[0])
    conns = _default_connections(edge.pattern, n1, n2)
    if conns is None:
        raise TopologyError(Violation("cardinality-mismatch", f"{edge.src}->{edge.dst}"))
    return conns


def _check_edge_cardinality(edge: PartitionEdge, n1: int, n2: int) -> list[Violation]:
    where = f"{edge.pattern} edge {edge.src}->{edge.dst} ({n1}->{n2} tasks)"
    if edge.connections is None:
        if _default_connections(edge.pattern, n1, n2) is None:
            return [Violation("cardinality-mismatch", where)]
        return []

    out: list[Violation] = []
    ups = [c.up for c in edge.connections]
    if sorted(ups) != list(range(n1)):
        out.append(Violation("connection-map", f"{where}: every upstream task must appear exactly once"))
        return out
    fan_in: dict[int, int] = defaultdict(int)
    for c in edge.connections:
        if len(set(c.down)) != len(c.down) or any(d < 0 or d >= n2 for d in c.down):
            out.append(Violation("connection-map", f"{where}: bad downstream indices for task {c.up}"))
            return out
        if c.weights is not None:
            if len(c.weights) != len(c.down) or any(w < 0 for w in c.weights) or not any(w > 0 for w in c.weights):
                out.append(Violation("connection-map", f"{where}: bad weights for task {c.up}"))
        for d in c.down:
            fan_in[d] += 1
    if len(fan_in) != n2:
        out.append(Violation("connection-map", f"{where}: some downstream task has no feeder"))
        return out
    fan_out = [len(c.down) for c in edge.connections]
    ok = True
    if edge.pattern == ONE_TO_ONE:
        ok = n1 == n2 and all(c.down == (c.up,) for c in edge.connections)
    elif edge.pattern == SPLIT:
        ok = all(f >= 2 for f in fan_out) and all(v == 1 for v in fan_in.values())
    elif edge.pattern == MERGE:
        ok = all(f == 1 for f in fan_out) and all(v >= 2 for v in fan_in.values())
    elif edge.pattern == FULL:
        ok = all(f == n2 for f in fan_out)
    if not ok:
        out.append(Violation("cardinality-mismatch", where))
    return out


def _operator_order(operators: Iterable[str], edges: Iterable[tuple[str, str]]) -> list[str] | None:
    """Kahn topological order with declaration-order tie breaking; None when cyclic."""
    ops = list(operators)
    pos = {op: i for i, op in enumerate(ops)}
    indeg = {op: 0 for op in ops}
    succ = defaultdict(list)
    for a, b in edges:
        succ[a].append(b)
        indeg[b] += 1
    ready = [pos[op] for op in ops if indeg[op] == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        op = ops[heapq.heappop(ready)]
        order.append(op)
        for b in succ[op]:
            indeg[b] -= 1
            if indeg[b] == 0:
                heapq.heappush(ready, pos[b])
    return order if len(order) == len(ops) else None


def validate(topology: Topology) -> list[Violation]:
    """Return every model violation of ``topology``; empty means valid."""
    out: list[Violation] = []
    ids = [op.id for op in topology.operators]
    seen = set()
    for op in topology.operators:
        if op.id in seen:
            out.append(Violation("duplicate-operator", op.id))
        seen.add(op.id)
        if "#" in op.id or not op.id:
            out.append(Violation("operator-id", f"invalid operator id {op.id!r}"))
        if not isinstance(op.parallelism, int) or isinstance(op.parallelism, bool) or op.parallelism < 1:
            out.append(Violation("parallelism", f"{op.id}: parallelism must be a positive integer"))
        if op.role not in ROLES:
            out.append(Violation("role", f"{op.id}: unknown role {op.role!r}"))
        if op.input_kind not in INPUT_KINDS:
            out.append(Violation("input-kind", f"{op.id}: unknown input kind {op.input_kind!r}"))
        if not op.selectivity >= 0:
            out.append(Violation("selectivity", f"{op.id}: selectivity must be non-negative"))
    if out:
        return out

    by_id = topology.by_id
    pairs = set()
    good_edges = []
    for e in topology.edges:
        if e.src not in by_id or e.dst not in by_id:
            out.append(Violation("unknown-operator", f"edge {e.src}->{e.dst}"))
            continue
        if e.src == e.dst:
            out.append(Violation("self-subscription", f"{e.src} subscribes to itself"))
            continue
        if e.pattern not in PATTERNS:
            out.append(Violation("pattern", f"edge {e.src}->{e.dst}: unknown pattern {e.pattern!r}"))
            continue
        if (e.src, e.dst) in pairs:
            out.append(Violation("duplicate-edge", f"{e.src}->{e.dst}"))
            continue
        pairs.add((e.src, e.dst))
        good_edges.append(e)

    has_in = {e.dst for e in good_edges}
    has_out = {e.src for e in good_edges}
    sinks = [op.id for op in topology.operators if op.role == SINK]
    if len(sinks) != 1:
        out.append(Violation("sink-count", f"expected exactly one sink operator, found {len(sinks)}"))
    for op in topology.operators:
        if op.role == SOURCE and op.id in has_in:
            out.append(Violation("source-has-input", op.id))
        if op.role == SINK and op.id in has_out:
            out.append(Violation("sink-has-output", op.id))
        if op.role != SOURCE and op.id not in has_in:
            out.append(Violation("unreachable", f"{op.id} has no input and is not a source"))
        if op.role != SINK and op.id not in has_out:
            out.append(Violation("dead-end", f"{op.id} has no output and is not the sink"))

    if _operator_order(ids, [(e.src, e.dst) for e in good_edges]) is None:
        out.append(Violation("cycle", "operator graph contains a cycle"))
    elif len(sinks) == 1:
        # every operator must reach the sink
        pred = defaultdict(list)
        for e in good_edges:
            pred[e.dst].append(e.src)
        reach = {sinks[0]}
        queue = deque(reach)
        while queue:
            for p in pred[queue.popleft()]:
                if p not in reach:
                    reach.add(p)
                    queue.append(p)
        for op in ids:
            if op not in reach:
                out.append(Violation("dead-end", f"{op} does not reach the sink"))

    for e in good_edges:
        out.extend(_check_edge_cardinality(e, by_id[e.src].parallelism, by_id[e.dst].parallelism))

    source_tasks = {task_id(op.id, i) for op in topology.operators if op.role == SOURCE for i in range(op.parallelism)}
    for tid in sorted(source_tasks):
        rate = topology.source_rates.get(tid)
        if rate is None or not rate > 0:
            out.append(Violation("source-rate", f"{tid}: source rate must be > 0"))
    for tid in sorted(set(topology.source_rates) - source_tasks):
        out.append(Violation("unknown-task", f"source rate given for non-source task {tid}"))
    return out


# -- task graph ---------------------------------------------------------


@dataclass(frozen=True)
class Substream:
    src: str
    dst: str
    rate: float
    stream: int  # input-stream index at ``dst``


@dataclass(frozen=True, eq=False)
class TaskGraph:
    """Task-level expansion of a topology (or of a subset of its operators).

    ``tasks`` is in topological order. Operators without inputs inside the
    graph act as sources; operators without outputs inside it are the sinks.
    """

    operators: tuple[str, ...]
    parallelism: Mapping[str, int]
    input_kind: Mapping[str, str]
    op_edges: tuple[tuple[str, str, str], ...]
    tasks: tuple[str, ...]
    substreams: tuple[Substream, ...]
    output_rates: Mapping[str, float]
    digest: str | None = None

    @cached_property
    def index(self) -> dict[str, int]:
        return {t: i for i, t in enumerate(self.tasks)}

    @cached_property
    def task_operator(self) -> dict[str, str]:
        return {t: split_task_id(t)[0] for t in self.tasks}

    @cached_property
    def upstream_ops(self) -> dict[str, list[str]]:
        """Upstream operators per operator, in input-stream order."""
        ups = {op: [] for op in self.operators}
        for a, b, _ in self.op_edges:
            ups[b].append(a)
        return ups

    @cached_property
    def downstream_ops(self) -> dict[str, list[str]]:
        downs = {op: [] for op in self.operators}
        for a, b, _ in self.op_edges:
            downs[a].append(b)
        return downs

    @cached_property
    def source_ops(self) -> tuple[str, ...]:
        return tuple(op for op in self.operators if not self.upstream_ops[op])

    @cached_property
    def sink_ops(self) -> tuple[str, ...]:
        return tuple(op for op in self.operators if not self.downstream_ops[op])

    def tasks_of(self, op: str) -> list[str]:
        return [task_id(op, i) for i in range(self.parallelism[op])]

    @cached_property
    def source_tasks(self) -> tuple[str, ...]:
        return tuple(t for op in self.source_ops for t in self.tasks_of(op))

    @cached_property
    def sink_tasks(self) -> tuple[str, ...]:
        return tuple(t for op in self.sink_ops for t in self.tasks_of(op))

    @cached_property
    def inputs(self) -> dict[str, list[list[tuple[str, float]]]]:
        """Per task: list of input streams, each a list of (producer task, rate)."""
        res = {}
        for t in self.tasks:
            res[t] = [[] for _ in self.upstream_ops[self.task_operator[t]]]
        for s in self.substreams:
            res[s.dst][s.stream].append((s.src, s.rate))
        return res

    @cached_property
    def outputs(self) -> dict[str, list[Substream]]:
        res = {t: [] for t in self.tasks}
        for s in self.substreams:
            res[s.src].append(s)
        return res

    def kind_of(self, tid: str) -> str:
        op = self.task_operator[tid]
        if not self.upstream_ops[op]:
            return SOURCE
        return self.input_kind[op]

    def pattern(self, src_op: str, dst_op: str) -> str:
        for a, b, p in self.op_edges:
            if a == src_op and b == dst_op:
                return p
        raise KeyError((src_op, dst_op))

    @cached_property
    def compiled(self):
        from .kernel import compile_graph

        return compile_graph(self)

    def subgraph(self, operators: Iterable[str]) -> "TaskGraph":
        """Task graph induced by ``operators``; operators losing all inputs become sources."""
        keep = set(operators)
        ops = tuple(op for op in self.operators if op in keep)
        op_edges = tuple(e for e in self.op_edges if e[0] in keep and e[1] in keep)
        stream_of = {}
        counter: dict[str, int] = defaultdict(int)
        for a, b, _ in op_edges:
            stream_of[(a, b)] = counter[b]
            counter[b] += 1
        tasks = tuple(t for t in self.tasks if self.task_operator[t] in keep)
        subs = []
        for s in self.substreams:
            a, b = self.task_operator[s.src], self.task_operator[s.dst]
            if a in keep and b in keep:
                subs.append(Substream(s.src, s.dst, s.rate, stream_of[(a, b)]))
        return TaskGraph(
            operators=ops,
            parallelism={op: self.parallelism[op] for op in ops},
            input_kind={op: self.input_kind[op] for op in ops},
            op_edges=op_edges,
            tasks=tasks,
            substreams=tuple(subs),
            output_rates={t: self.output_rates[t] for t in tasks},
            digest=None,
        )


def materialize(topology: Topology) -> TaskGraph:
    """Expand operators into tasks and wire substreams with their rates."""
    violations = validate(topology)
    if violations:
        raise TopologyError(violations[0])

    by_id = topology.by_id
    order = _operator_order([op.id for op in topology.operators], [(e.src, e.dst) for e in topology.edges])
    incoming = {op: [] for op in order}
    outgoing = {op: [] for op in order}
    for e in topology.edges:
        incoming[e.dst].append(e)
        outgoing[e.src].append(e)

    in_sum: dict[str, float] = defaultdict(float)
    rates: dict[str, float] = {}
    substreams: list[Substream] = []
    for op in order:
        spec = by_id[op]
        for i in range(spec.parallelism):
            tid = task_id(op, i)
            if spec.role == SOURCE:
                rates[tid] = float(topology.source_rates[tid])
            else:
                rates[tid] = spec.selectivity * in_sum[tid]
        if not outgoing[op]:
            continue
        share = 1.0 / len(outgoing[op])
        for e in outgoing[op]:
            stream = incoming[e.dst].index(e)
            n2 = by_id[e.dst].parallelism
            for up, downs, weights in edge_connections(e, spec.parallelism, n2):
                src = task_id(op, up)
                if weights is None:
                    weights = [1.0] * len(downs)
                total = float(sum(weights))
                for d, w in zip(downs, weights):
                    dst = task_id(e.dst, d)
                    r = rates[src] * share * (w / total)
                    in_sum[dst] += r
                    substreams.append(Substream(src, dst, r, stream))

    tasks = tuple(task_id(op, i) for op in order for i in range(by_id[op].parallelism))
    pos = {t: i for i, t in enumerate(tasks)}
    substreams.sort(key=lambda s: (pos[s.src], s.stream, pos[s.dst]))
    return TaskGraph(
        operators=tuple(order),
        parallelism={op: by_id[op].parallelism for op in order},
        input_kind={op: by_id[op].input_kind for op in order},
        op_edges=tuple((e.src, e.dst, e.pattern) for op in order for e in incoming[op]),
        tasks=tasks,
        substreams=tuple(substreams),
        output_rates=rates,
        digest=topology.digest(),
    )
