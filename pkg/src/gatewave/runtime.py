"""Parallel evaluation of scheduled circuits over encrypted bits.

All batches of all waves are submitted up front to one thread pool;
each batch waits on the previous wave's fence event before touching the
wire store, so there is no global lock and no coordinator round-trip
between waves.  The pool queue is FIFO and batches are enqueued in wave
order, which guarantees a thread is never parked on a fence while the
work that must set it is still queued behind it.  The heavy kernels
release the GIL, so worker threads overlap on multicore hosts.

The wire store is one uint32 matrix with a row per wire.  Single static
assignment plus the wave fences make row accesses race-free: a row is
written by exactly one batch, and only read by batches in later waves.
"""

from __future__ import annotations

import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .cggi import (
    GATE_ARITY,
    DimensionError,
    EvalKey,
    OpCounter,
    eval_gate_batch,
    _as_eval_key,
)
from .circuit import Circuit
from .scheduler import Batch, Schedule


class EvaluateError(RuntimeError):
    """Inputs do not match the circuit, or an internal invariant broke."""


@dataclass
class Metrics:
    """What one evaluation did and how long it took.

    Counter fields reflect work actually performed by the kernels;
    span entries are (wave, worker, start, end) in seconds on the
    monotonic clock, one per executed batch.
    """

    total_gates: int = 0
    workers: int = 0
    bootstrap_count: int = 0
    ntt_forward_count: int = 0
    ntt_inverse_count: int = 0
    wall_time_seconds: float = 0.0
    gates_per_second: float = 0.0
    per_wave_wall_time: list[float] = field(default_factory=list)
    per_worker_busy_time: list[float] = field(default_factory=list)
    spans: list[tuple[int, int, float, float]] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "total_gates": self.total_gates,
            "workers": self.workers,
            "bootstrap_count": self.bootstrap_count,
            "ntt_forward_count": self.ntt_forward_count,
            "ntt_inverse_count": self.ntt_inverse_count,
            "wall_time_seconds": self.wall_time_seconds,
            "gates_per_second": self.gates_per_second,
            "per_wave_wall_time": self.per_wave_wall_time,
            "per_worker_busy_time": self.per_worker_busy_time,
        }


class WireStore:
    """Ciphertext row per wire id, with occupancy tracking."""

    def __init__(self, slots: int, width: int):
        self._rows = np.zeros((slots, width), dtype=np.uint32)
        self._written = np.zeros(slots, dtype=bool)

    def write_rows(self, wire_ids, rows: np.ndarray) -> None:
        idx = np.asarray(wire_ids, dtype=np.int64)
        if np.any(self._written[idx]):
            dup = idx[self._written[idx]][0]
            raise EvaluateError(f"wire {int(dup)} written twice")
        self._rows[idx] = rows
        self._written[idx] = True

    def read_rows(self, wire_ids) -> np.ndarray:
        idx = np.asarray(wire_ids, dtype=np.int64)
        if not np.all(self._written[idx]):
            missing = idx[~self._written[idx]][0]
            raise EvaluateError(f"wire {int(missing)} read before it was written")
        return self._rows[idx]


def _check_inputs(c: Circuit, inputs: Mapping[str, np.ndarray], n: int) -> dict[str, np.ndarray]:
    mats: dict[str, np.ndarray] = {}
    names = {p.name for p in c.inputs}
    for name in inputs:
        if name not in names:
            raise EvaluateError(f"unknown input group {name!r}")
    for p in c.inputs:
        if p.name not in inputs:
            raise EvaluateError(f"missing input group {p.name!r}")
        m = np.ascontiguousarray(inputs[p.name], dtype=np.uint32)
        if m.ndim != 2 or m.shape[0] != p.width:
            raise EvaluateError(
                f"input {p.name!r} must provide {p.width} rows, got shape {m.shape}"
            )
        if m.shape[1] != n + 1:
            raise DimensionError(
                f"input {p.name!r} samples have dimension {m.shape[1] - 1}, "
                f"parameters expect {n}"
            )
        mats[p.name] = m
    return mats


def evaluate(c: Circuit, schedule: Schedule, inputs: Mapping[str, np.ndarray],
             keys) -> tuple[dict[str, np.ndarray], Metrics]:
    """Run every gate of c over encrypted inputs.

    inputs maps each input group name to a (width, n+1) uint32 matrix,
    row k being the sample for bit k.  Returns the same shape per
    output group, plus metrics.  Results are bit-identical for every
    worker count.
    """
    ek: EvalKey = _as_eval_key(keys)
    n = ek.params.n
    mats = _check_inputs(c, inputs, n)

    store = WireStore(c.max_wire + 1, n + 1)
    for p in c.inputs:
        store.write_rows(np.array(p.wires, dtype=np.int64), mats[p.name])

    by_id = {g.id: g for g in c.gates}
    scheduled = [gid for wave in schedule.waves for b in wave for gid in b.gate_ids]
    if sorted(scheduled) != sorted(by_id):
        raise EvaluateError("schedule does not cover this circuit's gates")
    wave_count = len(schedule.waves)
    fences = [threading.Event() for _ in range(wave_count)]
    remaining = [len(wave) for wave in schedule.waves]
    for w, wave in enumerate(schedule.waves):
        if not wave:
            fences[w].set()
    fence_lock = threading.Lock()
    failed = threading.Event()

    def run_batch(wave_idx: int, batch: Batch):
        try:
            if wave_idx > 0:
                fences[wave_idx - 1].wait()
            if failed.is_set():
                return None
            start = time.monotonic()
            arity = GATE_ARITY[batch.opcode]
            gates = [by_id[gid] for gid in batch.gate_ids]
            operands = [
                store.read_rows([g.operands[pos] for g in gates])
                for pos in range(arity)
            ]
            counter = OpCounter()
            out = eval_gate_batch(batch.opcode, operands, ek, counter,
                                  count=len(gates))
            store.write_rows(list(batch.gate_ids), out)
            end = time.monotonic()
            return counter, start, end
        except BaseException:
            failed.set()
            raise
        finally:
            with fence_lock:
                remaining[wave_idx] -= 1
                if remaining[wave_idx] == 0:
                    fences[wave_idx].set()

    metrics = Metrics(total_gates=len(c.gates), workers=schedule.workers)
    t0 = time.monotonic()
    futures = []
    if c.gates:
        with ThreadPoolExecutor(max_workers=schedule.workers) as pool:
            for w, wave in enumerate(schedule.waves):
                for batch in wave:
                    futures.append((w, batch.worker, pool.submit(run_batch, w, batch)))
            # only result retrieval joins the workers
            results = [(w, wk, f.result()) for (w, wk, f) in futures]
    else:
        results = []
    t1 = time.monotonic()

    total = OpCounter()
    wave_start = [float("inf")] * wave_count
    wave_end = [0.0] * wave_count
    busy = [0.0] * schedule.workers
    for w, worker, res in results:
        if res is None:
            continue
        counter, start, end = res
        total.merge(counter)
        wave_start[w] = min(wave_start[w], start)
        wave_end[w] = max(wave_end[w], end)
        busy[worker] += end - start
        metrics.spans.append((w, worker, start, end))

    metrics.bootstrap_count = total.bootstraps
    metrics.ntt_forward_count = total.ntt_forward
    metrics.ntt_inverse_count = total.ntt_inverse
    metrics.wall_time_seconds = t1 - t0
    metrics.gates_per_second = (
        len(c.gates) / metrics.wall_time_seconds if metrics.wall_time_seconds > 0 else 0.0
    )
    metrics.per_wave_wall_time = [
        max(0.0, e - s) for s, e in zip(wave_start, wave_end)
    ]
    metrics.per_worker_busy_time = busy

    outputs = {p.name: store.read_rows(np.array(p.wires, dtype=np.int64))
               for p in c.outputs}
    return outputs, metrics
