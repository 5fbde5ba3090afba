"""Wave partitioning and worker assignment.

Gates are grouped into waves: wave 0 holds gates fed only by circuit
inputs, wave w+1 holds gates whose deepest gate predecessor sits in
wave w.  Within a wave all gates are independent, so each wave is
batched by opcode and every batch is cut into at most K contiguous
near-equal slices, one per worker.  Homogeneous batches keep the
per-gate kernels branch-free; slicing per opcode (instead of splitting
the wave by raw gate count) is what keeps worker loads balanced when
cheap and expensive kinds are mixed.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .cggi import BOOTSTRAPS_PER_GATE, GateKind
from .circuit import Circuit


class SchedulerError(ValueError):
    pass


@dataclass(frozen=True)
class CostModel:
    """Relative per-gate execution weight by kind."""

    costs: Mapping[GateKind, int]

    def cost_of(self, kind: GateKind) -> int:
        return self.costs[kind]


def _default_costs() -> dict[GateKind, int]:
    # A bootstrap is ~n*2l transforms of N points; everything else is
    # vector bookkeeping.  1024 units per bootstrap keeps the free
    # kinds visible without letting them matter.
    return {k: max(1, 1024 * BOOTSTRAPS_PER_GATE[k]) for k in GateKind}


DEFAULT_COST_MODEL = CostModel(_default_costs())


@dataclass(frozen=True)
class Waves:
    order: tuple[tuple[int, ...], ...]       # wave index -> gate ids
    wave_of: Mapping[int, int] = field(hash=False)

    @property
    def depth(self) -> int:
        return len(self.order)


def partition_waves(c: Circuit) -> Waves:
    """Longest-path wave index for every gate, computed with a FIFO work
    queue so each gate is visited once its predecessors are all placed.

    Disconnected islands and constant gates are handled naturally: any
    gate with no gate predecessors seeds the queue.  Cost is linear in
    gates plus operand references.
    """
    gate_ids = c.gate_ids
    pending: dict[int, int] = {}
    succ: dict[int, list[int]] = {}
    for g in c.gates:
        preds = 0
        for op in g.operands:
            if op in gate_ids:
                preds += 1
                succ.setdefault(op, []).append(g.id)
        pending[g.id] = preds

    by_id = {g.id: g for g in c.gates}
    queue = deque(g.id for g in c.gates if pending[g.id] == 0)
    wave_of: dict[int, int] = {}
    placed = 0
    while queue:
        gid = queue.popleft()
        wave = 0
        for op in by_id[gid].operands:
            if op in gate_ids:
                wave = max(wave, wave_of[op] + 1)
        wave_of[gid] = wave
        placed += 1
        for s in succ.get(gid, ()):
            pending[s] -= 1
            if pending[s] == 0:
                queue.append(s)
    if placed != len(c.gates):
        raise SchedulerError(
            f"circuit is not a valid sequential form: {len(c.gates) - placed} "
            f"gates are unreachable from the inputs"
        )

    depth = max(wave_of.values()) + 1 if wave_of else 0
    order: list[list[int]] = [[] for _ in range(depth)]
    for g in c.gates:  # within a wave, keep the circuit's gate order
        order[wave_of[g.id]].append(g.id)
    return Waves(order=tuple(tuple(w) for w in order), wave_of=wave_of)


def batch_by_opcode(wave_gates: Sequence[int], c: Circuit) -> dict[GateKind, list[int]]:
    """Group one wave's gate ids by opcode, preserving order of first
    appearance and order within each group."""
    by_id = {g.id: g for g in c.gates}
    groups: dict[GateKind, list[int]] = {}
    for gid in wave_gates:
        groups.setdefault(by_id[gid].opcode, []).append(gid)
    return groups


@dataclass(frozen=True)
class Batch:
    opcode: GateKind
    gate_ids: tuple[int, ...]
    worker: int


def make_batch(c: Circuit, gate_ids: Sequence[int], worker: int) -> Batch:
    """Checked constructor: a batch must be homogeneous in opcode."""
    by_id = {g.id: g for g in c.gates}
    kinds = {by_id[gid].opcode for gid in gate_ids}
    if len(kinds) != 1:
        raise SchedulerError(
            f"batch mixes opcodes {sorted(k.value for k in kinds)}"
        )
    return Batch(opcode=kinds.pop(), gate_ids=tuple(gate_ids), worker=worker)


def split_batches(groups: Mapping[GateKind, Sequence[int]],
                  workers: int) -> list[Batch]:
    """Cut each opcode group into contiguous slices across workers.

    Slice sizes differ by at most one, earlier workers take the larger
    share, and workers left with nothing get no batch at all.
    """
    if workers < 1:
        raise SchedulerError(f"worker count must be >= 1, got {workers}")
    batches: list[Batch] = []
    for opcode, ids in groups.items():
        m = len(ids)
        if m == 0:
            continue
        q, r = divmod(m, workers)
        start = 0
        for w in range(workers):
            size = q + (1 if w < r else 0)
            if size == 0:
                break
            batches.append(Batch(opcode=opcode,
                                 gate_ids=tuple(ids[start:start + size]),
                                 worker=w))
            start += size
    return batches


@dataclass(frozen=True)
class Schedule:
    waves: tuple[tuple[Batch, ...], ...]
    workers: int

    @property
    def batch_count(self) -> int:
        return sum(len(w) for w in self.waves)


def build_schedule(c: Circuit, workers: int) -> Schedule:
    if workers < 1:
        raise SchedulerError(f"worker count must be >= 1, got {workers}")
    waves = partition_waves(c)
    out = []
    for wave_gates in waves.order:
        groups = batch_by_opcode(wave_gates, c)
        out.append(tuple(split_batches(groups, workers)))
    return Schedule(waves=tuple(out), workers=workers)


@dataclass(frozen=True)
class LoadReport:
    per_wave_loads: tuple[tuple[int, ...], ...]   # wave -> per-worker units
    per_wave_imbalance: tuple[float, ...]          # max/min load ratio
    worker_totals: tuple[int, ...]

    @property
    def worst_imbalance(self) -> float:
        return max(self.per_wave_imbalance, default=1.0)


def _imbalance(loads: Sequence[int]) -> float:
    mx = max(loads)
    mn = min(loads)
    if mx == 0:
        return 1.0
    if mn == 0:
        return float("inf")
    return mx / mn


def estimate_load(schedule: Schedule,
                  model: CostModel = DEFAULT_COST_MODEL) -> LoadReport:
    """Cost-model units per worker and wave for a schedule.

    A single-worker schedule always reports ratio exactly 1.0; a
    homogeneous wave of m equal gates over K workers is bounded by
    ceil(m/K)/floor(m/K).
    """
    wave_loads = []
    imbalances = []
    totals = [0] * schedule.workers
    for wave in schedule.waves:
        loads = [0] * schedule.workers
        for b in wave:
            units = len(b.gate_ids) * model.cost_of(b.opcode)
            loads[b.worker] += units
            totals[b.worker] += units
        wave_loads.append(tuple(loads))
        imbalances.append(_imbalance(loads))
    return LoadReport(per_wave_loads=tuple(wave_loads),
                      per_wave_imbalance=tuple(imbalances),
                      worker_totals=tuple(totals))


def naive_contiguous_split(wave_gates: Sequence[int],
                           workers: int) -> list[list[int]]:
    """The strawman assignment: slice the wave by raw gate count,
    ignoring opcode, sizes differing by at most one."""
    if workers < 1:
        raise SchedulerError(f"worker count must be >= 1, got {workers}")
    m = len(wave_gates)
    q, r = divmod(m, workers)
    chunks = []
    start = 0
    for w in range(workers):
        size = q + (1 if w < r else 0)
        chunks.append(list(wave_gates[start:start + size]))
        start += size
    return chunks


def chunk_loads(c: Circuit, chunks: Sequence[Sequence[int]],
                model: CostModel = DEFAULT_COST_MODEL) -> list[int]:
    by_id = {g.id: g for g in c.gates}
    return [sum(model.cost_of(by_id[gid].opcode) for gid in chunk)
            for chunk in chunks]


def schedule_csv(schedule: Schedule,
                 model: CostModel = DEFAULT_COST_MODEL) -> str:
    """CSV dump of the batch plan: wave,opcode,worker,count,cost_units."""
    lines = ["wave,opcode,worker,count,cost_units"]
    for w, wave in enumerate(schedule.waves):
        for b in wave:
            count = len(b.gate_ids)
            lines.append(
                f"{w},{b.opcode.value},{b.worker},{count},"
                f"{count * model.cost_of(b.opcode)}"
            )
    return "\n".join(lines) + "\n"
