"""Command-line interface.

Exit codes: 0 success, 1 usage, 2 circuit parse/validate, 3
crypto/parameter mismatch, 4 file I/O or format.  The worker count
defaults to the ARCTYREX_THREADS environment variable, then to 1.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .cggi import (
    DimensionError,
    GateKind,
    PARAM_SETS,
    ParamSet,
    ParameterError,
    decrypt_rows,
    encrypt_bits,
    keygen,
)
from .circuit import (
    Circuit,
    CircuitError,
    bits_to_value,
    gen_adder,
    gen_flat,
    gen_mux_tree,
    gen_not_chain,
    parse_circuit,
    serialize_circuit,
    simulate_plain,  # noqa: F401  (re-exported convenience for scripting)
    topology_stats,
    validate,
    value_to_bits,
)
from .rng import SeededRng
from .runtime import EvaluateError, evaluate
from .scheduler import (
    DEFAULT_COST_MODEL,
    build_schedule,
    estimate_load,
    schedule_csv,
)
from .serial import (
    FormatError,
    ParamsMismatchError,
    read_bundle,
    read_eval_key,
    read_secret_key,
    write_bundle,
    write_eval_key,
    write_secret_key,
)


class UsageError(Exception):
    pass


class StageError(Exception):
    """Wraps a failure with the pipeline stage it happened in."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {cause}")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _exit_code_for(exc: Exception) -> int:
    if isinstance(exc, UsageError):
        return 1
    if isinstance(exc, (CircuitError, EvaluateError)):
        return 2
    if isinstance(exc, (ParameterError, DimensionError, ParamsMismatchError)):
        return 3
    if isinstance(exc, (FormatError, OSError)):
        return 4
    if isinstance(exc, ValueError):
        return 1
    raise exc


def _load_params(selector: str) -> ParamSet:
    if selector in PARAM_SETS:
        return PARAM_SETS[selector]
    if os.path.exists(selector):
        with open(selector) as f:
            fields = json.load(f)
        if not isinstance(fields, dict):
            raise ParameterError(f"parameter file {selector!r} must hold an object")
        try:
            return ParamSet(**fields)
        except TypeError as e:
            raise ParameterError(f"parameter file {selector!r}: {e}") from None
    raise UsageError(
        f"unknown parameter set {selector!r} "
        f"(names: {', '.join(sorted(PARAM_SETS))}, or a JSON file path)"
    )


def _parse_seed(arg: str | None) -> bytes | None:
    if arg is None:
        return None
    try:
        return bytes.fromhex(arg)
    except ValueError:
        raise UsageError(f"--seed must be a hex string, got {arg!r}") from None


def _worker_count(value: int | None) -> int:
    if value is None:
        env = os.environ.get("ARCTYREX_THREADS")
        if env is None or env == "":
            return 1
        try:
            value = int(env)
        except ValueError:
            raise UsageError(
                f"ARCTYREX_THREADS must be an integer, got {env!r}") from None
    if value < 1:
        raise UsageError(f"worker count must be >= 1, got {value}")
    return value


def _read_circuit(path: str) -> Circuit:
    with open(path, "rb") as f:
        c = parse_circuit(f.read())
    diags = validate(c)
    if diags:
        raise CircuitError(diags)
    return c


def cmd_keygen(args) -> int:
    params = _load_params(args.params)
    ks = keygen(params, _parse_seed(args.seed))
    write_secret_key(args.out_secret, ks)
    write_eval_key(args.out_eval, ks)
    print(f"n = {params.n}")
    print(f"N = {params.N}")
    print(f"lwe_noise_std = {params.lwe_noise_std}")
    print(f"rlwe_noise_std = {params.rlwe_noise_std}")
    print(f"secret_key_bytes = {os.path.getsize(args.out_secret)}")
    print(f"eval_key_bytes = {os.path.getsize(args.out_eval)}")
    return 0


def _parse_assignments(pairs: list[str]) -> dict[str, int]:
    out: dict[str, int] = {}
    for pair in pairs:
        name, eq, value = pair.partition("=")
        if not eq or not name:
            raise UsageError(f"--assign takes name=value, got {pair!r}")
        try:
            out[name] = int(value, 0)
        except ValueError:
            raise UsageError(f"--assign {name}: bad integer {value!r}") from None
    return out


def cmd_encrypt(args) -> int:
    sk = read_secret_key(args.secret)
    c = _read_circuit(args.circuit)
    assigned = _parse_assignments(args.assign or [])
    known = {p.name for p in c.inputs}
    for name in assigned:
        if name not in known:
            raise UsageError(f"unknown input name {name!r}")
    for p in c.inputs:
        if p.name not in assigned:
            raise UsageError(f"missing --assign for input {p.name!r}")
    wires: list[int] = []
    bits: list[int] = []
    for p in c.inputs:
        try:
            group_bits = value_to_bits(assigned[p.name], p.width)
        except ValueError as e:
            raise UsageError(str(e)) from None
        wires.extend(p.wires)
        bits.extend(group_bits)
    rng = SeededRng(_parse_seed(args.seed))
    rows = encrypt_bits(sk.params, sk.lwe_sk, bits, rng)
    write_bundle(args.out, sk.params, dict(zip(wires, rows)))
    print(f"encrypted {len(bits)} input bits into {args.out}")
    return 0


def cmd_run(args) -> int:
    workers = _worker_count(args.workers)

    def stage(name, fn, *a, **kw):
        try:
            return fn(*a, **kw)
        except Exception as e:
            raise StageError(name, e) from e

    c = stage("parse", _read_circuit, args.circuit)
    ek = stage("keys", read_eval_key, args.eval)
    bundle = stage("inputs", read_bundle, args.in_path, ek.params)

    def collect_inputs():
        mats = {}
        for p in c.inputs:
            rows = []
            for w in p.wires:
                if w not in bundle:
                    raise EvaluateError(f"input bundle is missing wire {w} "
                                        f"of group {p.name!r}")
                rows.append(bundle[w])
            mats[p.name] = np.stack(rows)
        return mats

    mats = stage("inputs", collect_inputs)
    schedule = stage("schedule", build_schedule, c, workers)
    outputs, metrics = stage("evaluate", evaluate, c, schedule, mats, ek)

    out_wires = {}
    for p in c.outputs:
        for w, row in zip(p.wires, outputs[p.name]):
            out_wires[w] = row
    stage("outputs", write_bundle, args.out, ek.params, out_wires)
    if args.metrics:
        with open(args.metrics, "w") as f:
            json.dump(metrics.as_dict(), f, indent=2)
            f.write("\n")
    print(f"gates = {metrics.total_gates}")
    print(f"bootstraps = {metrics.bootstrap_count}")
    print(f"wall_seconds = {metrics.wall_time_seconds:.3f}")
    print(f"gates_per_second = {metrics.gates_per_second:.1f}")
    return 0


def cmd_decrypt(args) -> int:
    sk = read_secret_key(args.secret)
    c = _read_circuit(args.circuit)
    bundle = read_bundle(args.in_path, sk.params)
    for p in c.outputs:
        missing = [w for w in p.wires if w not in bundle]
        if missing:
            raise EvaluateError(
                f"bundle is missing wires {missing} of output {p.name!r}")
        mat = np.stack([bundle[w] for w in p.wires])
        bits = decrypt_rows(sk.lwe_sk, mat)
        print(f"{p.name} = {bits_to_value(bits)}")
    return 0


def cmd_analyze(args) -> int:
    workers = _worker_count(args.workers)
    c = _read_circuit(args.circuit)
    report = topology_stats(c)
    schedule = build_schedule(c, workers)
    load = estimate_load(schedule, DEFAULT_COST_MODEL)
    print(f"total_gates = {report.total_gates}")
    print(f"levels = {report.critical_path}")
    print(f"widest_level = {max(report.level_widths, default=0)}")
    print("histogram:")
    for kind in sorted(report.gate_histogram, key=lambda k: k.value):
        print(f"  {kind.value} = {report.gate_histogram[kind]}")
    print(f"cost_units = {sum(load.worker_totals)}")
    print(f"workers = {workers}")
    for k, units in enumerate(load.worker_totals):
        gates = sum(
            len(b.gate_ids)
            for wave in schedule.waves for b in wave if b.worker == k
        )
        print(f"  worker {k}: {gates} gates, {units} cost units")
    if args.csv:
        with open(args.csv, "w") as f:
            f.write("level,width\n")
            for lvl, width in enumerate(report.level_widths):
                f.write(f"{lvl},{width}\n")
    if args.schedule_csv:
        with open(args.schedule_csv, "w") as f:
            f.write(schedule_csv(schedule, DEFAULT_COST_MODEL))
    return 0


_FIXTURES = ("adder", "mux-tree", "not-chain", "flat")


def cmd_gen(args) -> int:
    if args.fixture == "adder":
        c = gen_adder(args.width)
    elif args.fixture == "mux-tree":
        c = gen_mux_tree(args.depth)
    elif args.fixture == "not-chain":
        c = gen_not_chain(args.length)
    elif args.fixture == "flat":
        try:
            op = GateKind[args.op]
        except KeyError:
            raise UsageError(f"unknown opcode {args.op!r}") from None
        c = gen_flat(args.gates, op)
    else:
        raise UsageError(f"unknown fixture {args.fixture!r}")
    with open(args.out, "w") as f:
        f.write(serialize_circuit(c))
    print(f"wrote {args.fixture} fixture with {len(c.gates)} gates to {args.out}")
    return 0


def _build_parser() -> _Parser:
    p = _Parser(prog="gatewave",
                description="Evaluate Boolean circuits over encrypted bits.")
    sub = p.add_subparsers(dest="command", required=True)

    kg = sub.add_parser("keygen", help="generate a key pair")
    kg.add_argument("--params", default="110",
                    help="parameter set name or JSON file (default: 110)")
    kg.add_argument("--seed", help="hex seed for deterministic keys")
    kg.add_argument("--out-secret", required=True)
    kg.add_argument("--out-eval", required=True)
    kg.set_defaults(func=cmd_keygen)

    enc = sub.add_parser("encrypt", help="encrypt circuit inputs")
    enc.add_argument("--secret", required=True)
    enc.add_argument("--circuit", required=True)
    enc.add_argument("--assign", action="append", metavar="NAME=VALUE",
                     help="input assignment, repeatable")
    enc.add_argument("--seed", help="hex seed for deterministic encryption")
    enc.add_argument("--out", required=True)
    enc.set_defaults(func=cmd_encrypt)

    run = sub.add_parser("run", help="evaluate a circuit over a bundle")
    run.add_argument("--eval", required=True)
    run.add_argument("--circuit", required=True)
    run.add_argument("--in", dest="in_path", required=True)
    run.add_argument("--workers", type=int,
                     help="parallel workers (default: $ARCTYREX_THREADS or 1)")
    run.add_argument("--out", required=True)
    run.add_argument("--metrics", help="write metrics JSON here")
    run.set_defaults(func=cmd_run)

    dec = sub.add_parser("decrypt", help="decrypt an output bundle")
    dec.add_argument("--secret", required=True)
    dec.add_argument("--circuit", required=True)
    dec.add_argument("--in", dest="in_path", required=True)
    dec.set_defaults(func=cmd_decrypt)

    an = sub.add_parser("analyze", help="topology and schedule report")
    an.add_argument("--circuit", required=True)
    an.add_argument("--workers", type=int,
                    help="split preview worker count (default: $ARCTYREX_THREADS or 1)")
    an.add_argument("--csv", help="write level,width CSV here")
    an.add_argument("--schedule-csv", dest="schedule_csv",
                    help="write wave,opcode,worker,count,cost_units CSV here")
    an.set_defaults(func=cmd_analyze)

    gen = sub.add_parser("gen", help="generate fixture circuits")
    gen.add_argument("--fixture", required=True, choices=_FIXTURES)
    gen.add_argument("--width", type=int, default=8, help="adder width")
    gen.add_argument("--depth", type=int, default=3, help="mux tree depth")
    gen.add_argument("--length", type=int, default=100, help="not chain length")
    gen.add_argument("--gates", type=int, default=10000, help="flat sheet size")
    gen.add_argument("--op", default="AND", help="flat sheet opcode")
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_gen)
    return p


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except StageError as e:
        print(f"error {e}", file=sys.stderr)
        return _exit_code_for(e.cause)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # mapped domain errors only; others re-raise
        code = _exit_code_for(e)
        print(f"error: {e}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
