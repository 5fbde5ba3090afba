"""Parallel evaluation: correctness, metrics, wave fencing."""

import numpy as np
import pytest

from gatewave.cggi import (
    DimensionError,
    GateKind,
    decrypt_rows,
    encrypt_bits,
)
from gatewave.circuit import (
    gen_adder,
    gen_flat,
    gen_not_chain,
    parse_circuit,
    simulate_plain,
    value_to_bits,
)
from gatewave.rng import SeededRng
from gatewave.runtime import EvaluateError, WireStore, evaluate
from gatewave.scheduler import build_schedule

from conftest import MINI


def _encrypt_inputs(c, keys, assignments, seed=0):
    sk = keys.secret_key()
    rng = SeededRng(seed)
    mats = {}
    for p in c.inputs:
        bits = value_to_bits(assignments[p.name], p.width)
        mats[p.name] = encrypt_bits(keys.params, sk.lwe_sk, bits, rng)
    return mats


def _decrypt_outputs(c, keys, outputs):
    sk = keys.secret_key()
    vals = {}
    for p in c.outputs:
        bits = decrypt_rows(sk.lwe_sk, outputs[p.name])
        vals[p.name] = sum(int(b) << i for i, b in enumerate(bits))
    return vals


def test_wire_store_guards():
    ws = WireStore(4, 3)
    rows = np.ones((2, 3), dtype=np.uint32)
    ws.write_rows([0, 2], rows)
    assert np.array_equal(ws.read_rows([2, 0]), rows)
    with pytest.raises(EvaluateError, match="written twice"):
        ws.write_rows([2], rows[:1])
    with pytest.raises(EvaluateError, match="before it was written"):
        ws.read_rows([1])


def test_adder_evaluates_correctly(mini_keys):
    c = gen_adder(4)
    schedule = build_schedule(c, 2)
    mats = _encrypt_inputs(c, mini_keys, {"a": 11, "b": 6})
    outputs, metrics = evaluate(c, schedule, mats, mini_keys.eval_key())
    assert _decrypt_outputs(c, mini_keys, outputs) == {"s": 17}
    assert metrics.total_gates == len(c.gates)
    assert metrics.bootstrap_count == 19
    assert metrics.workers == 2
    assert metrics.wall_time_seconds > 0
    assert metrics.gates_per_second > 0


def test_outputs_read_straight_from_input_wires(mini_keys):
    c = parse_circuit("input a 2\ngate 2 AND 0,1\noutput y 0,1\noutput z 2\n")
    mats = _encrypt_inputs(c, mini_keys, {"a": 0b01})
    outputs, _ = evaluate(c, build_schedule(c, 1), mats, mini_keys.eval_key())
    got = _decrypt_outputs(c, mini_keys, outputs)
    assert got == {"y": 0b01, "z": 0}


def test_not_chain_through_runtime(mini_keys):
    c = gen_not_chain(5)
    mats = _encrypt_inputs(c, mini_keys, {"x": 1})
    outputs, metrics = evaluate(c, build_schedule(c, 3), mats, mini_keys.eval_key())
    assert _decrypt_outputs(c, mini_keys, outputs) == {"y": 0}
    assert metrics.bootstrap_count == 0
    assert metrics.ntt_forward_count == 0
    assert len(metrics.per_wave_wall_time) == 5


def test_results_identical_across_worker_counts(mini_keys):
    c = gen_adder(6)
    mats = _encrypt_inputs(c, mini_keys, {"a": 45, "b": 18}, seed=5)
    ek = mini_keys.eval_key()
    reference = None
    for k in (1, 2, 4, 8):
        outputs, _ = evaluate(c, build_schedule(c, k), mats, ek)
        if reference is None:
            reference = outputs
        else:
            for name in reference:
                assert np.array_equal(outputs[name], reference[name]), k
    assert _decrypt_outputs(c, mini_keys, reference) == {"s": 63}


def test_random_vectors_match_plain_simulation(mini_keys):
    import random

    rnd = random.Random(99)
    c = gen_adder(5)
    ek = mini_keys.eval_key()
    schedule = build_schedule(c, 2)
    for trial in range(3):
        a, b = rnd.randrange(32), rnd.randrange(32)
        mats = _encrypt_inputs(c, mini_keys, {"a": a, "b": b}, seed=trial)
        outputs, _ = evaluate(c, schedule, mats, ek)
        assert _decrypt_outputs(c, mini_keys, outputs) == simulate_plain(
            c, {"a": a, "b": b})


def test_spans_respect_wave_fences(mini_keys):
    c = gen_adder(4)
    mats = _encrypt_inputs(c, mini_keys, {"a": 3, "b": 9})
    _, metrics = evaluate(c, build_schedule(c, 2), mats, mini_keys.eval_key())
    by_wave = {}
    for wave, worker, start, end in metrics.spans:
        assert end >= start
        by_wave.setdefault(wave, []).append((start, end))
    waves = sorted(by_wave)
    assert waves == list(range(len(metrics.per_wave_wall_time)))
    for earlier, later in zip(waves, waves[1:]):
        latest_end = max(e for _, e in by_wave[earlier])
        first_start = min(s for s, _ in by_wave[later])
        assert first_start >= latest_end


def test_per_worker_busy_time_shape(mini_keys):
    c = gen_flat(8, GateKind.AND)
    mats = {
        "a": _encrypt_inputs(c, mini_keys, {"a": 200, "b": 11})["a"],
        "b": _encrypt_inputs(c, mini_keys, {"a": 200, "b": 11})["b"],
    }
    _, metrics = evaluate(c, build_schedule(c, 4), mats, mini_keys.eval_key())
    assert len(metrics.per_worker_busy_time) == 4
    assert all(t >= 0 for t in metrics.per_worker_busy_time)
    assert sum(metrics.per_worker_busy_time) > 0


def test_metrics_as_dict_is_json_friendly(mini_keys):
    import json

    c = gen_adder(2)
    mats = _encrypt_inputs(c, mini_keys, {"a": 1, "b": 2})
    _, metrics = evaluate(c, build_schedule(c, 1), mats, mini_keys.eval_key())
    d = metrics.as_dict()
    json.dumps(d)
    assert d["total_gates"] == len(c.gates)
    assert "spans" not in d
    assert len(d["per_wave_wall_time"]) == len(metrics.per_wave_wall_time)


def test_input_validation_errors(mini_keys):
    c = gen_adder(2)
    ek = mini_keys.eval_key()
    schedule = build_schedule(c, 1)
    good = _encrypt_inputs(c, mini_keys, {"a": 1, "b": 2})
    with pytest.raises(EvaluateError, match="missing input group"):
        evaluate(c, schedule, {"a": good["a"]}, ek)
    with pytest.raises(EvaluateError, match="unknown input group"):
        evaluate(c, schedule, {**good, "zz": good["a"]}, ek)
    with pytest.raises(EvaluateError, match="must provide 2 rows"):
        evaluate(c, schedule, {"a": good["a"][:1], "b": good["b"]}, ek)
    with pytest.raises(DimensionError):
        bad = {"a": good["a"][:, :-1], "b": good["b"][:, :-1]}
        evaluate(c, schedule, bad, ek)


def test_schedule_circuit_mismatch_is_detected(mini_keys):
    c = gen_adder(2)
    other = gen_adder(3)
    mats = _encrypt_inputs(c, mini_keys, {"a": 1, "b": 2})
    with pytest.raises(EvaluateError):
        evaluate(c, build_schedule(other, 1), mats, mini_keys.eval_key())
