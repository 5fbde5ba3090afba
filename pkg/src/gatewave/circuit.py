"""Gate-level circuit representation, text format, analytics, fixtures.

A circuit is a single-static-assignment gate list over integer wire
ids.  Input groups claim wire ids sequentially in declaration order;
every gate writes exactly one new wire and may read only wires defined
earlier, so the gate list is a valid sequential execution and acyclic
by construction.

Text format, one declaration per line (# starts a comment):

    input <name> <width>
    output <name> <w0,w1,...>
    gate <id> <OPCODE> <arg,...>

Gates must appear in execution order.  CONST0/CONST1 take no argument
field.  Multi-bit groups are little-endian: wire k of an input named x
carries bit k of x's value.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping

from .cggi import GATE_ARITY, GateKind


@dataclass(frozen=True)
class Diagnostic:
    line: int | None
    message: str

    def __str__(self) -> str:
        if self.line is None:
            return self.message
        return f"line {self.line}: {self.message}"


class CircuitError(Exception):
    """Parse or validation failure; carries all collected diagnostics."""

    def __init__(self, diagnostics: Iterable[Diagnostic]):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(str(d) for d in self.diagnostics))


@dataclass(frozen=True)
class Port:
    name: str
    wires: tuple[int, ...]

    @property
    def width(self) -> int:
        return len(self.wires)


@dataclass(frozen=True)
class Gate:
    id: int
    opcode: GateKind
    operands: tuple[int, ...]


@dataclass(eq=True)
class Circuit:
    inputs: tuple[Port, ...]
    outputs: tuple[Port, ...]
    gates: tuple[Gate, ...]

    @cached_property
    def input_wires(self) -> frozenset[int]:
        return frozenset(w for p in self.inputs for w in p.wires)

    @cached_property
    def gate_ids(self) -> frozenset[int]:
        return frozenset(g.id for g in self.gates)

    @cached_property
    def wire_count(self) -> int:
        return len(self.input_wires | self.gate_ids)

    @cached_property
    def max_wire(self) -> int:
        ids = self.input_wires | self.gate_ids
        return max(ids) if ids else -1


@dataclass(frozen=True)
class TopologyReport:
    level_widths: tuple[int, ...]
    critical_path: int
    gate_histogram: Mapping[GateKind, int]
    total_gates: int


def _parse_wire_list(tok: str) -> list[int]:
    return [int(part) for part in tok.split(",") if part != ""]


def parse_circuit(text: str | bytes) -> Circuit:
    """Parse the text format; raises CircuitError listing every problem
    found, each tagged with its line number."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    diags: list[Diagnostic] = []
    inputs: list[tuple[int, str, int]] = []    # (line, name, width)
    outputs: list[tuple[int, str, list[int]]] = []
    gates: list[tuple[int, int, GateKind, list[int]]] = []

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        kw = tok[0]
        if kw == "input":
            if len(tok) != 3:
                diags.append(Diagnostic(lineno, "input takes a name and a width"))
                continue
            try:
                width = int(tok[2])
            except ValueError:
                diags.append(Diagnostic(lineno, f"bad input width {tok[2]!r}"))
                continue
            if width < 1:
                diags.append(Diagnostic(lineno, f"input width must be >= 1, got {width}"))
                continue
            if any(name == tok[1] for _, name, _ in inputs):
                diags.append(Diagnostic(lineno, f"duplicate input name {tok[1]!r}"))
                continue
            inputs.append((lineno, tok[1], width))
        elif kw == "output":
            if len(tok) != 3:
                diags.append(Diagnostic(lineno, "output takes a name and a wire list"))
                continue
            try:
                wires = _parse_wire_list(tok[2])
            except ValueError:
                diags.append(Diagnostic(lineno, f"bad output wire list {tok[2]!r}"))
                continue
            if not wires:
                diags.append(Diagnostic(lineno, "output wire list is empty"))
                continue
            if any(name == tok[1] for _, name, _ in outputs):
                diags.append(Diagnostic(lineno, f"duplicate output name {tok[1]!r}"))
                continue
            outputs.append((lineno, tok[1], wires))
        elif kw == "gate":
            if len(tok) not in (3, 4):
                diags.append(Diagnostic(lineno, "gate takes an id, an opcode and operands"))
                continue
            try:
                gid = int(tok[1])
            except ValueError:
                diags.append(Diagnostic(lineno, f"bad gate id {tok[1]!r}"))
                continue
            if gid < 0:
                diags.append(Diagnostic(lineno, f"gate id must be non-negative, got {gid}"))
                continue
            try:
                opcode = GateKind[tok[2]]
            except KeyError:
                diags.append(Diagnostic(lineno, f"unknown opcode {tok[2]!r}"))
                continue
            try:
                operands = _parse_wire_list(tok[3]) if len(tok) == 4 else []
            except ValueError:
                diags.append(Diagnostic(lineno, f"bad operand list {tok[3]!r}"))
                continue
            if len(operands) != GATE_ARITY[opcode]:
                diags.append(Diagnostic(
                    lineno,
                    f"{opcode.value} expects {GATE_ARITY[opcode]} operands, "
                    f"got {len(operands)}",
                ))
                continue
            gates.append((lineno, gid, opcode, operands))
        else:
            diags.append(Diagnostic(lineno, f"unrecognized declaration {kw!r}"))

    # Input groups claim wire ids 0..k-1 in declaration order.
    next_wire = 0
    ports = []
    defined: dict[int, int] = {}
    for lineno, name, width in inputs:
        wires = tuple(range(next_wire, next_wire + width))
        next_wire += width
        ports.append(Port(name, wires))
        for w in wires:
            defined[w] = lineno

    gate_objs = []
    available = set(defined)
    all_gate_ids = {gid for _, gid, _, _ in gates}
    for lineno, gid, opcode, operands in gates:
        if gid in defined:
            diags.append(Diagnostic(lineno, f"wire {gid} is already defined"))
            continue
        for op in operands:
            if op not in available:
                if op in all_gate_ids:
                    diags.append(Diagnostic(
                        lineno, f"wire {op} is used before its definition"))
                else:
                    diags.append(Diagnostic(lineno, f"wire {op} is never defined"))
        defined[gid] = lineno
        available.add(gid)
        gate_objs.append(Gate(gid, opcode, tuple(operands)))

    out_ports = []
    for lineno, name, wires in outputs:
        for w in wires:
            if w not in defined:
                diags.append(Diagnostic(
                    lineno, f"output {name!r} references undefined wire {w}"))
        out_ports.append(Port(name, tuple(wires)))

    if diags:
        raise CircuitError(diags)
    return Circuit(inputs=tuple(ports), outputs=tuple(out_ports),
                   gates=tuple(gate_objs))


def validate(c: Circuit) -> list[Diagnostic]:
    """Re-verify the structural invariants of an in-memory circuit.

    Returns one diagnostic per violation (empty list when valid).
    Disconnected gates are fine; only the sequential-execution form is
    required.
    """
    diags: list[Diagnostic] = []
    available = set(c.input_wires)
    for pos, g in enumerate(c.gates):
        if g.id in available:
            diags.append(Diagnostic(None, f"wire {g.id} is defined more than once"))
        if len(g.operands) != GATE_ARITY[g.opcode]:
            diags.append(Diagnostic(
                None,
                f"gate {g.id}: {g.opcode.value} expects {GATE_ARITY[g.opcode]} "
                f"operands, got {len(g.operands)}",
            ))
        for op in g.operands:
            if op not in available:
                diags.append(Diagnostic(
                    None, f"gate {g.id} reads wire {op} before it is defined"))
        available.add(g.id)
    for port in c.outputs:
        for w in port.wires:
            if w not in available:
                diags.append(Diagnostic(
                    None, f"output {port.name!r} wire {w} is never written"))
    return diags


def serialize_circuit(c: Circuit) -> str:
    """Canonical text form: inputs, then outputs, then gates in
    execution order.  parse_circuit inverts this exactly."""
    lines = []
    for p in c.inputs:
        lines.append(f"input {p.name} {p.width}")
    for p in c.outputs:
        lines.append(f"output {p.name} {','.join(str(w) for w in p.wires)}")
    for g in c.gates:
        if g.operands:
            lines.append(f"gate {g.id} {g.opcode.value} "
                         f"{','.join(str(w) for w in g.operands)}")
        else:
            lines.append(f"gate {g.id} {g.opcode.value}")
    return "\n".join(lines) + "\n"


def gate_levels(c: Circuit) -> dict[int, int]:
    """Dependency level of every gate: 0 for gates fed only by circuit
    inputs, else 1 + the max level among gate-defined operands.  This is
    the same rule the scheduler uses for waves."""
    levels: dict[int, int] = {}
    for g in c.gates:
        lvl = 0
        for op in g.operands:
            pred = levels.get(op)
            if pred is not None:
                lvl = max(lvl, pred + 1)
        levels[g.id] = lvl
    return levels


def topology_stats(c: Circuit) -> TopologyReport:
    levels = gate_levels(c)
    depth = max(levels.values()) + 1 if levels else 0
    widths = [0] * depth
    hist: dict[GateKind, int] = {}
    for g in c.gates:
        widths[levels[g.id]] += 1
        hist[g.opcode] = hist.get(g.opcode, 0) + 1
    return TopologyReport(
        level_widths=tuple(widths),
        critical_path=depth,
        gate_histogram=hist,
        total_gates=len(c.gates),
    )


# ---------------------------------------------------------------------------
# Plaintext semantics.
# ---------------------------------------------------------------------------


def value_to_bits(value: int, width: int) -> list[int]:
    """Little-endian bits of value, two's complement within width."""
    if not (-(1 << (width - 1)) <= value < (1 << width)):
        raise ValueError(f"value {value} does not fit in {width} bits")
    v = value & ((1 << width) - 1)
    return [(v >> i) & 1 for i in range(width)]


def bits_to_value(bits: Iterable[int]) -> int:
    return sum((int(b) & 1) << i for i, b in enumerate(bits))


def simulate_plain(c: Circuit, assignments: Mapping[str, int]) -> dict[str, int]:
    """Evaluate the circuit over plaintext bits.

    assignments maps every input group name to an integer; the result
    maps each output group name to its unsigned little-endian value.
    """
    known = {p.name for p in c.inputs}
    for name in assignments:
        if name not in known:
            raise ValueError(f"unknown input {name!r}")
    wire: dict[int, int] = {}
    for p in c.inputs:
        if p.name not in assignments:
            raise ValueError(f"missing assignment for input {p.name!r}")
        for w, bit in zip(p.wires, value_to_bits(assignments[p.name], p.width)):
            wire[w] = bit
    for g in c.gates:
        ops = [wire[o] for o in g.operands]
        k = g.opcode
        if k is GateKind.AND:
            v = ops[0] & ops[1]
        elif k is GateKind.OR:
            v = ops[0] | ops[1]
        elif k is GateKind.NAND:
            v = 1 - (ops[0] & ops[1])
        elif k is GateKind.NOR:
            v = 1 - (ops[0] | ops[1])
        elif k is GateKind.XOR:
            v = ops[0] ^ ops[1]
        elif k is GateKind.XNOR:
            v = 1 - (ops[0] ^ ops[1])
        elif k is GateKind.NOT:
            v = 1 - ops[0]
        elif k is GateKind.MUX:
            v = ops[1] if ops[0] else ops[2]
        elif k is GateKind.CONST0:
            v = 0
        elif k is GateKind.CONST1:
            v = 1
        else:  # COPY
            v = ops[0]
        wire[g.id] = v
    return {p.name: bits_to_value(wire[w] for w in p.wires) for p in c.outputs}


# ---------------------------------------------------------------------------
# Fixture generators.
# ---------------------------------------------------------------------------


def gen_adder(width: int) -> Circuit:
    """Ripple-carry adder: inputs a, b (width bits each), output s of
    width+1 bits (sum plus carry).

    Every cell emits the same four inner gates
        t = XOR(a, b);  s = XOR(t, c);  g = AND(a, b);  p = AND(t, c)
    and cells after the first merge the carry with OR(g, p).  The first
    cell's carry-in is a CONST0 gate and its p term is identically zero,
    so its carry-out is g alone and the OR is elided: width w costs
    2w XOR + 2w AND + (w-1) OR + 1 CONST0 gates.
    """
    if width < 1:
        raise ValueError(f"width must be >= 1, got {width}")
    a = list(range(width))
    b = list(range(width, 2 * width))
    nxt = 2 * width
    gates: list[Gate] = []

    def emit(opcode: GateKind, *operands: int) -> int:
        nonlocal nxt
        gates.append(Gate(nxt, opcode, tuple(operands)))
        nxt += 1
        return nxt - 1

    carry = emit(GateKind.CONST0)
    sums = []
    for k in range(width):
        t = emit(GateKind.XOR, a[k], b[k])
        sums.append(emit(GateKind.XOR, t, carry))
        g = emit(GateKind.AND, a[k], b[k])
        p = emit(GateKind.AND, t, carry)
        carry = g if k == 0 else emit(GateKind.OR, g, p)
    return Circuit(
        inputs=(Port("a", tuple(a)), Port("b", tuple(b))),
        outputs=(Port("s", tuple(sums + [carry])),),
        gates=tuple(gates),
    )


def gen_mux_tree(depth: int) -> Circuit:
    """Binary selection tree: 2**depth data bits d, depth select bits s,
    one output equal to d[s].  2**depth - 1 MUX gates."""
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    leaves = 1 << depth
    d = list(range(leaves))
    s = list(range(leaves, leaves + depth))
    nxt = leaves + depth
    gates: list[Gate] = []
    layer = d
    for lvl in range(depth):
        nxt_layer = []
        for k in range(0, len(layer), 2):
            # select bit lvl picks the half contributing 2**lvl
            gates.append(Gate(nxt, GateKind.MUX, (s[lvl], layer[k + 1], layer[k])))
            nxt_layer.append(nxt)
            nxt += 1
        layer = nxt_layer
    return Circuit(
        inputs=(Port("d", tuple(d)), Port("s", tuple(s))),
        outputs=(Port("out", (layer[0],)),),
        gates=tuple(gates),
    )


def gen_not_chain(length: int) -> Circuit:
    """length NOT gates in a straight line; forces strictly serial waves."""
    if length < 1:
        raise ValueError(f"length must be >= 1, got {length}")
    gates = []
    prev = 0
    for k in range(length):
        gates.append(Gate(1 + k, GateKind.NOT, (prev,)))
        prev = 1 + k
    return Circuit(
        inputs=(Port("x", (0,)),),
        outputs=(Port("y", (prev,)),),
        gates=tuple(gates),
    )


_FLAT_KINDS = {
    GateKind.AND, GateKind.OR, GateKind.NAND, GateKind.NOR,
    GateKind.XOR, GateKind.XNOR, GateKind.NOT,
}


def gen_flat(gates: int, op: GateKind = GateKind.AND) -> Circuit:
    """A single wave of independent gates of one kind, for scaling and
    batching tests.  Two-input kinds read fresh input bits pairwise."""
    if gates < 1:
        raise ValueError(f"gate count must be >= 1, got {gates}")
    if op not in _FLAT_KINDS:
        raise ValueError(f"flat sheets support 1- and 2-input kinds, not {op.value}")
    arity = GATE_ARITY[op]
    if arity == 2:
        a = list(range(gates))
        b = list(range(gates, 2 * gates))
        base = 2 * gates
        glist = [Gate(base + k, op, (a[k], b[k])) for k in range(gates)]
        inputs = (Port("a", tuple(a)), Port("b", tuple(b)))
    else:
        a = list(range(gates))
        base = gates
        glist = [Gate(base + k, op, (a[k],)) for k in range(gates)]
        inputs = (Port("a", tuple(a)),)
    return Circuit(
        inputs=inputs,
        outputs=(Port("y", tuple(g.id for g in glist)),),
        gates=tuple(glist),
    )
