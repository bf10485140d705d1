"""Loss-propagation kernel dispatch.

The compiled extension (``_kernel``) is used when it has been built; otherwise
the pure-Python ``_kernel_py`` is selected. Set ``PPAPLAN_PURE=1`` to force the
fallback.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from . import _kernel_py

if os.environ.get("PPAPLAN_PURE"):
    _impl = _kernel_py
else:
    try:
        from . import _kernel as _impl
    except ImportError:  # extension not built
        _impl = _kernel_py

BACKEND = "cython" if _impl is not _kernel_py else "python"

KIND_SOURCE, KIND_INDEPENDENT, KIND_CORRELATED = 0, 1, 2


@dataclass(frozen=True, eq=False)
class CompiledGraph:
    """CSR layout of a task graph: tasks -> input streams -> substreams."""

    tasks: tuple[str, ...]
    kind: np.ndarray
    stream_ptr: np.ndarray
    stream_rate: np.ndarray
    sub_ptr: np.ndarray
    sub_src: np.ndarray
    sub_rate: np.ndarray
    sink_idx: np.ndarray
    sink_rate: np.ndarray

    @property
    def n(self) -> int:
        return len(self.tasks)

    def _args(self):
        return (self.kind, self.stream_ptr, self.stream_rate, self.sub_ptr, self.sub_src, self.sub_rate)

    def mask(self, alive_tasks: Iterable[str]) -> np.ndarray:
        idx = {t: i for i, t in enumerate(self.tasks)}
        m = np.zeros(self.n, dtype=np.uint8)
        for t in alive_tasks:
            m[idx[t]] = 1
        return m

    def losses(self, alive: np.ndarray, impl=None) -> np.ndarray:
        return (impl or _impl).propagate(*self._args(), np.ascontiguousarray(alive, dtype=np.uint8))

    def fidelity(self, alive: np.ndarray, impl=None) -> float:
        return float(
            (impl or _impl).fidelity(
                *self._args(), self.sink_idx, self.sink_rate, np.ascontiguousarray(alive, dtype=np.uint8)
            )
        )

    def fidelity_many(self, alive: np.ndarray, impl=None) -> np.ndarray:
        alive = np.ascontiguousarray(alive, dtype=np.uint8).reshape(-1, self.n)
        return (impl or _impl).fidelity_many(*self._args(), self.sink_idx, self.sink_rate, alive)


def compile_graph(tg) -> CompiledGraph:
    from .topology import CORRELATED, SOURCE

    index = tg.index
    kinds, stream_ptr, stream_rate, sub_ptr, sub_src, sub_rate = [], [0], [], [0], [], []
    for t in tg.tasks:
        k = tg.kind_of(t)
        kinds.append(KIND_SOURCE if k == SOURCE else KIND_CORRELATED if k == CORRELATED else KIND_INDEPENDENT)
        streams = [] if k == SOURCE else tg.inputs[t]
        for subs in streams:
            stream_rate.append(sum(r for _, r in subs))
            for src, r in subs:
                sub_src.append(index[src])
                sub_rate.append(r)
            sub_ptr.append(len(sub_src))
        stream_ptr.append(len(stream_rate))
    sinks = tg.sink_tasks
    return CompiledGraph(
        tasks=tuple(tg.tasks),
        kind=np.asarray(kinds, dtype=np.int8),
        stream_ptr=np.asarray(stream_ptr, dtype=np.int32),
        stream_rate=np.asarray(stream_rate, dtype=np.float64),
        sub_ptr=np.asarray(sub_ptr, dtype=np.int32),
        sub_src=np.asarray(sub_src, dtype=np.int32),
        sub_rate=np.asarray(sub_rate, dtype=np.float64),
        sink_idx=np.asarray([index[t] for t in sinks], dtype=np.int32),
        sink_rate=np.asarray([tg.output_rates[t] for t in sinks], dtype=np.float64),
    )
