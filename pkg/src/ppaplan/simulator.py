"""Deterministic discrete-event execution of a task graph under failures.

Data moves in batches. Every task starts batch ``k`` only once it holds the
batch-over punctuation for ``k`` from every upstream task; a message here is a
batch's content plus its punctuation, tagged by (producer, batch id), which is
the sequence number used for de-duplication. Contents are tracked as
source-contribution mass, so sink completeness can be compared directly with
Output Fidelity.

Recovery mechanisms:

* tasks in the plan have an active replica that keeps processing; outputs are
  held from the failure until detection, then the replica flushes its buffer
  (downstream drops the duplicates) and takes over;
* other tasks reload their latest checkpoint (state and output buffer), ask
  upstream tasks to replay their buffers and reprocess until their progress
  vector dominates the one they had when they failed. A recovering task may
  have to wait for a recovering upstream task to catch up.

With tentative mode on, a recovery manager issues batch-over punctuations on
behalf of failed passive tasks from detection until they recover, so live
tasks keep producing (incomplete) output.
"""

from __future__ import annotations

import copy
import csv
import heapq
import io
import json
import math
import statistics
import zlib
from dataclasses import dataclass, field
from typing import Iterable

from .fidelity import output_fidelity
from .topology import CORRELATED, SOURCE, TaskGraph

COLLECTOR = "__output__"


class SimulationError(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    batch_interval: float = 200.0  # ms
    checkpoint_interval: float = 10_000.0  # ms
    replica_sync_interval: float = 1_000.0  # ms
    failure_detection_delay: float = 5_000.0  # ms
    per_tuple_cost: float = 20.0  # µs
    network_delay: float = 2.0  # ms
    checkpoint_restore_cost: float = 50.0  # ms per state unit
    replay_bandwidth: float = 2.0  # tuples per ms
    run_length: float = 60_000.0  # ms
    seed: int = 0
    tentative_mode: bool = True
    window: float = 30_000.0  # ms of input held as operator state

    def check(self) -> None:
        for name in (
            "batch_interval",
            "checkpoint_interval",
            "replica_sync_interval",
            "failure_detection_delay",
            "replay_bandwidth",
            "run_length",
            "window",
        ):
            if not getattr(self, name) > 0:
                raise SimulationError(f"{name} must be > 0")
        for name in ("per_tuple_cost", "network_delay", "checkpoint_restore_cost"):
            if getattr(self, name) < 0:
                raise SimulationError(f"{name} must be >= 0")
        if self.batch_interval > self.checkpoint_interval:
            raise SimulationError("batch interval must not exceed checkpoint interval")


@dataclass(frozen=True)
class FailureSpec:
    fail_time: float
    tasks: frozenset[str]

    def __post_init__(self):
        tasks = self.tasks
        if isinstance(tasks, str):
            tasks = (tasks,)
        object.__setattr__(self, "tasks", frozenset(tasks))


@dataclass
class ProgressVector:
    """Latest processed sequence number (batch id) per input stream."""

    seq: dict[int, int] = field(default_factory=dict)

    def advance(self, stream: int, value: int) -> None:
        if value < self.seq.get(stream, -1):
            raise SimulationError("progress vector must not move backwards")
        self.seq[stream] = value

    def dominates(self, other: "ProgressVector") -> bool:
        return all(self.seq.get(j, -1) >= v for j, v in other.seq.items())

    def copy(self) -> "ProgressVector":
        return ProgressVector(dict(self.seq))


@dataclass
class SimulationTrace:
    events: list[tuple[float, str, str, str]]
    completeness: dict[int, float]
    recovery_latency: dict[str, float]
    recovery_kind: dict[str, str]
    duplicate_deliveries: int
    dropped_duplicates: int
    batch_close_time: dict[int, float]
    batch_interval: float
    failure: FailureSpec | None = None
    detect_time: float | None = None
    takeover_done: float | None = None
    first_passive_recovery: float | None = None
    predicted_of: float | None = None

    def steady_batches(self) -> list[int]:
        """Batches produced entirely after replica takeover and closed before any passive recovery."""
        if self.failure is None or self.detect_time is None:
            return []
        start = self.takeover_done if self.takeover_done is not None else self.detect_time
        end = self.first_passive_recovery if self.first_passive_recovery is not None else math.inf
        return sorted(
            k
            for k, t in self.batch_close_time.items()
            if k * self.batch_interval >= start and t < end and k in self.completeness
        )

    def steady_completeness(self) -> float | None:
        ks = self.steady_batches()
        if not ks:
            return None
        return statistics.fmean(self.completeness[k] for k in ks)

    def events_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time_ms", "event", "task", "detail"])
        for t, kind, task, detail in self.events:
            w.writerow([f"{t:.3f}", kind, task, detail])
        return buf.getvalue()

    def completeness_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["batch_id", "completeness"])
        for k in sorted(self.completeness):
            w.writerow([k, repr(self.completeness[k])])
        return buf.getvalue()

    def summary(self) -> dict:
        lat = recovery_latency_summary(self) if self.failure is not None else {"active": None, "passive": None}
        return {
            "active_latency": lat["active"],
            "passive_latency": lat["passive"],
            "steady_completeness": self.steady_completeness(),
            "predicted_of": self.predicted_of,
            "duplicate_deliveries": self.duplicate_deliveries,
        }

    def summary_json(self) -> str:
        return json.dumps(self.summary(), indent=2) + "\n"


def measure_completeness(trace: SimulationTrace, window: tuple[int, int]) -> float:
    """Mean per-batch completeness over the inclusive batch-id interval ``window``."""
    lo, hi = window
    vals = [c for k, c in trace.completeness.items() if lo <= k <= hi]
    if not vals:
        raise SimulationError(f"no completed batches in window {window}")
    return statistics.fmean(vals)


def _stats(values: list[float]) -> dict | None:
    if not values:
        return None
    return {"min": min(values), "mean": statistics.fmean(values), "max": max(values)}


def recovery_latency_summary(trace: SimulationTrace) -> dict[str, dict | None]:
    """min/mean/max recovery latency per mechanism ("active" replica takeover, "passive" checkpoint)."""
    if trace.failure is None:
        raise SimulationError("trace contains no failure")
    groups: dict[str, list[float]] = {"active": [], "passive": []}
    for t, lat in sorted(trace.recovery_latency.items()):
        groups[trace.recovery_kind[t]].append(lat)
    return {k: _stats(v) for k, v in groups.items()}


class _Task:
    def __init__(self, tid: str):
        self.tid = tid
        self.upstream: list[tuple[str, int]] = []  # (producer, stream index)
        self.downstream: list[tuple[str, float]] = []  # (consumer, share of output)
        self.is_source = False
        self.correlated = False
        self.base_out = 0.0
        self.base_stream: dict[int, float] = {}
        self.state_size = 0.0
        self.planned = False
        self.status = "up"  # up | mute | down | restoring | recovering
        self.epoch = 0
        self.busy = False
        self.next_batch = 0
        self.inbox: dict[str, dict[int, float]] = {}
        self.out_buffer: dict[str, dict[int, float]] = {}
        self.replica_buffer: list[tuple[str, int, float]] = []
        self.held: list[tuple[str, int, float]] = []
        self.progress = ProgressVector()
        self.ledger: set[tuple[str, int]] = set()
        self.checkpoint: dict | None = None
        self.prefail: ProgressVector | None = None
        self.replay_waiting: list[str] = []
        self.tick_pending: int | None = None


class _Engine:
    def __init__(self, tg: TaskGraph, plan: frozenset[str], cfg: SimConfig, failure: FailureSpec | None):
        self.tg = tg
        self.cfg = cfg
        self.failure = failure
        self.heap: list = []
        self.counter = 0
        self.now = 0.0
        self.events: list[tuple[float, str, str, str]] = []
        self.fabricating: set[str] = set()
        self.completeness: dict[int, float] = {}
        self.close_time: dict[int, float] = {}
        self.latency: dict[str, float] = {}
        self.kind: dict[str, str] = {}
        self.duplicates = 0
        self.dropped = 0
        self.detect_time: float | None = None
        self.takeover_done: float | None = None
        self.first_passive: float | None = None
        self.failed: set[str] = set()

        scale = cfg.batch_interval / 1000.0
        self.tasks: dict[str, _Task] = {}
        for t in tg.tasks:
            task = _Task(t)
            task.is_source = tg.kind_of(t) == SOURCE
            task.correlated = tg.kind_of(t) == CORRELATED
            task.base_out = tg.output_rates[t] * scale
            task.planned = t in plan
            in_rate = tg.output_rates[t] if task.is_source else sum(r for subs in tg.inputs[t] for _, r in subs)
            task.state_size = in_rate * cfg.window / 1000.0
            self.tasks[t] = task
        for s in tg.substreams:
            src, dst = self.tasks[s.src], self.tasks[s.dst]
            dst.upstream.append((s.src, s.stream))
            dst.base_stream[s.stream] = dst.base_stream.get(s.stream, 0.0) + s.rate * scale
            share = s.rate / tg.output_rates[s.src] if tg.output_rates[s.src] > 0 else 0.0
            src.downstream.append((s.dst, share))
        collector = _Task(COLLECTOR)
        for i, t in enumerate(tg.sink_tasks):
            collector.upstream.append((t, 0))
            self.tasks[t].downstream.append((COLLECTOR, 1.0))
        collector.base_out = sum(self.tasks[t].base_out for t in tg.sink_tasks)
        self.tasks[COLLECTOR] = collector
        for task in self.tasks.values():
            task.inbox = {u: {} for u, _ in task.upstream}
            task.out_buffer = {d: {} for d, _ in task.downstream}

    # -- event plumbing ---------------------------------------------------

    def push(self, time: float, kind: str, *payload) -> None:
        self.counter += 1
        heapq.heappush(self.heap, (time, self.counter, kind, payload))

    def log(self, kind: str, task: str, detail: str = "") -> None:
        self.events.append((self.now, kind, task, detail))

    def run(self) -> None:
        cfg = self.cfg
        for i, t in enumerate(self.tg.tasks):
            # staggered checkpoint phases, a few batches apart
            self.push((i % 4) * cfg.batch_interval, "checkpoint", t)
            if self.tasks[t].planned:
                self.push(cfg.replica_sync_interval, "sync", t)
        for t in self.tg.source_tasks:
            self.push(cfg.batch_interval, "tick", t)
        if self.failure is not None:
            self.push(self.failure.fail_time, "fail")
        handlers = {
            "tick": self.on_tick,
            "arrive": self.on_arrive,
            "done": self.on_done,
            "checkpoint": self.on_checkpoint,
            "sync": self.on_sync,
            "fail": self.on_fail,
            "detect": self.on_detect,
            "restored": self.on_restored,
            "flushed": self.on_flushed,
        }
        while self.heap:
            time, _, kind, payload = heapq.heappop(self.heap)
            if time > cfg.run_length:
                break
            self.now = time
            handlers[kind](*payload)

    # -- data path --------------------------------------------------------

    def live(self, task: _Task) -> bool:
        return task.status in ("up", "mute")

    def send(self, src: str, dst: str, batch: int, mass: float, at: float | None = None) -> None:
        # jitter depends only on the message identity, so a batch travels equally
        # fast in every scenario that sends it
        key = f"{self.cfg.seed}:{src}:{dst}:{batch}".encode()
        delay = self.cfg.network_delay * (1.0 + 0.1 * zlib.crc32(key) / 2**32)
        self.push((self.now if at is None else at) + delay, "arrive", dst, src, batch, mass)

    def on_arrive(self, dst: str, src: str, batch: int, mass: float) -> None:
        task = self.tasks[dst]
        if task.status in ("down", "restoring"):
            return  # lost; upstream buffers replay it later
        box = task.inbox[src]
        if batch < task.next_batch or batch in box or (src, batch) in task.ledger:
            self.dropped += 1
            return
        box[batch] = mass
        self.try_start(task)

    def on_tick(self, tid: str) -> None:
        task = self.tasks[tid]
        task.tick_pending = None
        self.try_start(task)

    def source_available(self, task: _Task, batch: int) -> float:
        t = (batch + 1) * self.cfg.batch_interval
        ck = task.checkpoint
        if task.status == "recovering" and ck is not None and getattr(task, "replay_from", None) is not None:
            # external input is replayed at the replay bandwidth
            n = batch - ck["next_batch"] + 1
            t = max(t, task.replay_from + n * task.base_out / self.cfg.replay_bandwidth)
        return t

    def try_start(self, task: _Task) -> None:
        if task.busy or task.status not in ("up", "mute", "recovering"):
            return
        k = task.next_batch
        if task.tid == COLLECTOR:
            self.try_collect(task)
            return
        # nothing of batch k exists before its source interval closes
        avail = self.source_available(task, k) if task.is_source else (k + 1) * self.cfg.batch_interval
        if self.now < avail:
            if task.tick_pending != k:
                task.tick_pending = k
                self.push(avail, "tick", task.tid)
            return
        if task.is_source:
            in_mass = task.base_out
            out = task.base_out
            used: list[str] = []
        else:
            masses: dict[int, float] = {}
            used = []
            for u, j in task.upstream:
                box = task.inbox[u]
                if k in box:
                    masses[j] = masses.get(j, 0.0) + box[k]
                    used.append(u)
                elif not self.fabricated(task, u):
                    return
            in_mass = sum(masses.values())
            out = self.output_mass(task, masses)
        for u in used:
            key = (u, k)
            if key in task.ledger:
                self.duplicates += 1
            task.ledger.add(key)
            del task.inbox[u][k]
        for u in task.inbox:
            task.inbox[u].pop(k, None)
        task.busy = True
        cost = self.cfg.per_tuple_cost * in_mass / 1000.0
        self.push(self.now + cost, "done", task.tid, k, out, task.epoch)

    def fabricated(self, task: _Task, upstream: str) -> bool:
        return self.cfg.tentative_mode and self.live(task) and upstream in self.fabricating

    def output_mass(self, task: _Task, masses: dict[int, float]) -> float:
        if task.correlated:
            out = task.base_out
            for j, base in task.base_stream.items():
                out *= masses.get(j, 0.0) / base if base > 0 else 0.0
            return out
        base = sum(task.base_stream.values())
        return task.base_out * sum(masses.values()) / base if base > 0 else 0.0

    def on_done(self, tid: str, batch: int, out: float, epoch: int) -> None:
        task = self.tasks[tid]
        if epoch != task.epoch:
            return  # work lost with the failed primary
        task.busy = False
        task.next_batch = batch + 1
        streams = {0} if task.is_source else {j for _, j in task.upstream}
        for j in sorted(streams):
            task.progress.advance(j, batch)
        for dst, share in task.downstream:
            mass = out * share
            task.out_buffer[dst][batch] = mass
            if task.planned:
                task.replica_buffer.append((dst, batch, mass))
            if task.status == "mute":
                task.held.append((dst, batch, mass))
            else:
                self.send(tid, dst, batch, mass)
        if task.status == "recovering" and task.progress.dominates(task.prefail):
            self.mark_recovered(task, "passive")
        self.try_start(task)

    def try_collect(self, col: _Task) -> None:
        while True:
            k = col.next_batch
            if self.now < (k + 1) * self.cfg.batch_interval:
                if col.tick_pending != k:
                    col.tick_pending = k
                    self.push((k + 1) * self.cfg.batch_interval, "tick", col.tid)
                return
            got = 0.0
            for u, _ in col.upstream:
                box = col.inbox[u]
                if k in box:
                    got += box[k]
                elif not (self.cfg.tentative_mode and u in self.fabricating):
                    return
            for u, _ in col.upstream:
                if k in col.inbox[u]:
                    if (u, k) in col.ledger:
                        self.duplicates += 1
                    col.ledger.add((u, k))
                    del col.inbox[u][k]
            self.completeness[k] = min(1.0, got / col.base_out) if col.base_out > 0 else 0.0
            self.close_time[k] = self.now
            col.next_batch = k + 1

    # -- checkpoints and replicas ----------------------------------------

    def on_checkpoint(self, tid: str) -> None:
        task = self.tasks[tid]
        self.push(self.now + self.cfg.checkpoint_interval, "checkpoint", tid)
        if task.status != "up":
            return
        task.checkpoint = {
            "next_batch": task.next_batch,
            "progress": task.progress.copy(),
            "out_buffer": copy.deepcopy(task.out_buffer),
            "ledger": set(task.ledger),
            "inbox": copy.deepcopy(task.inbox),
            "time": self.now,
        }
        self.log("checkpoint", tid, f"batch={task.next_batch}")
        for u, _ in task.upstream:
            up = self.tasks[u]
            buf = up.out_buffer.get(tid, {})
            for b in [b for b in buf if b < task.next_batch]:
                del buf[b]

    def on_sync(self, tid: str) -> None:
        task = self.tasks[tid]
        self.push(self.now + self.cfg.replica_sync_interval, "sync", tid)
        if task.status == "up":
            task.replica_buffer.clear()

    # -- failure and recovery ---------------------------------------------

    def on_fail(self) -> None:
        for tid in sorted(self.failure.tasks):
            task = self.tasks[tid]
            self.failed.add(tid)
            task.prefail = task.progress.copy()
            if task.planned:
                task.status = "mute"
            else:
                task.status = "down"
                task.epoch += 1
                task.busy = False
                task.inbox = {u: {} for u, _ in task.upstream}
                task.out_buffer = {d: {} for d, _ in task.downstream}
            self.log("fail", tid, "active" if task.planned else "passive")
        self.push(self.now + self.cfg.failure_detection_delay, "detect")

    def on_detect(self) -> None:
        self.detect_time = self.now
        self.log("detect", "", f"failed={len(self.failed)}")
        takeover = []
        for tid in sorted(self.failed):
            task = self.tasks[tid]
            if task.planned:
                tuples = sum(m for _, _, m in task.replica_buffer)
                flush = tuples / self.cfg.replay_bandwidth
                self.push(self.now + flush, "flushed", tid)
                takeover.append(self.now + flush)
                self.log("takeover", tid, f"flush_ms={flush:.3f}")
            else:
                task.status = "restoring"
                self.fabricating.add(tid)
                restore = task.state_size * self.cfg.checkpoint_restore_cost
                self.push(self.now + restore, "restored", tid, task.epoch)
                self.log("restore", tid, f"restore_ms={restore:.3f}")
        self.takeover_done = max(takeover) if takeover else self.now
        # punctuations issued for failed passive tasks unblock live consumers
        for task in self.tasks.values():
            self.try_start(task)

    def on_flushed(self, tid: str) -> None:
        task = self.tasks[tid]
        held, task.held = task.held, []
        held_keys = {(d, b) for d, b, _ in held}
        for dst, batch, mass in task.replica_buffer:
            if (dst, batch) not in held_keys:
                self.send(tid, dst, batch, mass)  # duplicates of delivered output
        for dst, batch, mass in held:
            self.send(tid, dst, batch, mass)
        task.status = "up"
        self.mark_recovered(task, "active")
        self.try_start(task)

    def on_restored(self, tid: str, epoch: int) -> None:
        task = self.tasks[tid]
        if epoch != task.epoch:
            return
        ck = task.checkpoint
        if ck is None:
            ck = {
                "next_batch": 0,
                "progress": ProgressVector(),
                "out_buffer": {d: {} for d, _ in task.downstream},
                "ledger": set(),
                "inbox": {u: {} for u, _ in task.upstream},
                "time": 0.0,
            }
            task.checkpoint = ck
        task.next_batch = ck["next_batch"]
        task.progress = ck["progress"].copy()
        task.out_buffer = copy.deepcopy(ck["out_buffer"])
        task.ledger = set(ck["ledger"])
        task.inbox = copy.deepcopy(ck["inbox"])
        task.status = "recovering"
        task.replay_from = self.now
        self.log("restored", tid, f"from_batch={task.next_batch}")
        for u in sorted({u for u, _ in task.upstream}):
            up = self.tasks[u]
            if up.status in ("down", "restoring"):
                up.replay_waiting.append(tid)
            else:
                self.replay(up, task)
        for w in task.replay_waiting:
            self.replay(task, self.tasks[w])
        task.replay_waiting = []
        if task.progress.dominates(task.prefail):
            self.mark_recovered(task, "passive")
        self.try_start(task)

    def replay(self, up: _Task, down: _Task) -> None:
        buf = up.out_buffer.get(down.tid, {})
        t = self.now
        for batch in sorted(buf):
            if batch < down.next_batch:
                continue
            t += buf[batch] / self.cfg.replay_bandwidth
            self.send(up.tid, down.tid, batch, buf[batch], at=t)

    def mark_recovered(self, task: _Task, kind: str) -> None:
        if task.tid in self.latency:
            return
        task.status = "up"
        self.fabricating.discard(task.tid)
        self.latency[task.tid] = self.now - self.detect_time
        self.kind[task.tid] = kind
        self.log("recovered", task.tid, kind)
        if kind == "passive" and self.first_passive is None:
            self.first_passive = self.now
        # consumers that relied on fabricated punctuations now wait for real data
        for dst, _ in task.downstream:
            self.try_start(self.tasks[dst])


def run(
    tg: TaskGraph,
    plan,
    config: SimConfig,
    failure: FailureSpec | None = None,
) -> SimulationTrace:
    """Simulate ``tg`` protected by ``plan`` (a ReplicationPlan or a task collection)."""
    config.check()
    digest = getattr(plan, "topology_digest", None)
    if digest and tg.digest and digest != tg.digest:
        raise SimulationError("plan was computed for a different topology (digest mismatch)")
    tasks = frozenset(getattr(plan, "tasks", plan))
    unknown = tasks - set(tg.tasks)
    if unknown:
        raise SimulationError(f"plan names unknown tasks: {sorted(unknown)}")
    predicted = None
    if failure is not None:
        if not 0 <= failure.fail_time < config.run_length:
            raise SimulationError("failure time must lie within the run length")
        missing = failure.tasks - set(tg.tasks)
        if missing:
            raise SimulationError(f"failure names unknown tasks: {sorted(missing)}")
        predicted = output_fidelity(tg, failure.tasks - tasks).of
    engine = _Engine(tg, tasks, config, failure)
    engine.run()
    return SimulationTrace(
        events=engine.events,
        completeness=engine.completeness,
        recovery_latency=engine.latency,
        recovery_kind=engine.kind,
        duplicate_deliveries=engine.duplicates,
        dropped_duplicates=engine.dropped,
        batch_close_time=engine.close_time,
        batch_interval=config.batch_interval,
        failure=failure,
        detect_time=engine.detect_time,
        takeover_done=engine.takeover_done,
        first_passive_recovery=engine.first_passive,
        predicted_of=predicted,
    )


def worst_case_failure(tg: TaskGraph, plan: Iterable[str], fail_time: float) -> FailureSpec:
    """Correlated failure of every task: planned ones survive through their replicas."""
    return FailureSpec(fail_time, frozenset(tg.tasks))
