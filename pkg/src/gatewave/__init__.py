"""Evaluate Boolean circuits over encrypted bits on desk-scale CPUs.

Every gate output is refreshed by bootstrapping, so circuits of
arbitrary depth evaluate without noise budgeting.  Work is scheduled in
dependency waves and fanned out across worker threads; the heavy
per-gate arithmetic runs in compiled kernels that release the GIL.
"""

from .cggi import (
    GateKind,
    KeySet,
    ParamSet,
    PARAM_110,
    PARAM_128,
    PARAM_SETS,
    decrypt_bit,
    encrypt_bit,
    eval_gate,
    gate_bootstrap,
    keygen,
)
from .circuit import Circuit, parse_circuit, serialize_circuit, simulate_plain
from .runtime import Metrics, evaluate
from .scheduler import build_schedule, partition_waves

__all__ = [
    "GateKind",
    "KeySet",
    "ParamSet",
    "PARAM_110",
    "PARAM_128",
    "PARAM_SETS",
    "decrypt_bit",
    "encrypt_bit",
    "eval_gate",
    "gate_bootstrap",
    "keygen",
    "Circuit",
    "parse_circuit",
    "serialize_circuit",
    "simulate_plain",
    "Metrics",
    "evaluate",
    "build_schedule",
    "partition_waves",
]

__version__ = "0.1.0"
