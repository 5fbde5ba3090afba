"""Cryptographic layer tests.

The heavy kernels are checked against slow pure-Python references on a
small parameter set where both paths must agree bit for bit, because
every operation is exact integer arithmetic once the random inputs are
fixed.
"""

import numpy as np
import pytest

from gatewave.cggi import (
    BOOTSTRAPS_PER_GATE,
    DimensionError,
    GateKind,
    OpCounter,
    PARAM_110,
    PARAM_128,
    ParamSet,
    ParameterError,
    TlweCiphertext,
    decrypt_bit,
    decrypt_rows,
    encrypt_bit,
    encrypt_bits,
    eval_gate,
    eval_gate_batch,
    external_product,
    gadget_decompose,
    gadget_recompose,
    gate_bootstrap,
    blind_rotate,
    keygen,
    keyswitch,
    lwe_linear,
    lwe_trivial,
    phase,
    phase_rows,
    sample_extract,
    tlwe_trivial,
)
from gatewave.rng import SeededRng
from gatewave.torus import negacyclic_mul_naive, poly_rotate, torus_signed

from conftest import MINI


def test_builtin_parameter_sets():
    assert PARAM_110.n == 512
    assert PARAM_110.N == 1024
    assert PARAM_110.mu == 2**29
    assert PARAM_128.n == 630
    assert PARAM_128.N == 1024


def test_parameter_validation():
    ok = dict(n=16, N=64, lwe_noise_std=1e-6, rlwe_noise_std=1e-9,
              Bg_bits=9, l=2, ks_base_bits=2, ks_levels=8)
    ParamSet(**ok)
    with pytest.raises(ParameterError):
        ParamSet(**{**ok, "N": 48})
    with pytest.raises(ParameterError):
        ParamSet(**{**ok, "Bg_bits": 17})  # l * Bg > 32
    with pytest.raises(ParameterError):
        # log2(N) + Bg > 32 breaks convolution exactness.
        ParamSet(**{**ok, "N": 1024, "l": 1, "Bg_bits": 23})
    with pytest.raises(ParameterError):
        ParamSet(**{**ok, "ks_base_bits": 5, "ks_levels": 7})
    with pytest.raises(ParameterError):
        ParamSet(**{**ok, "lwe_noise_std": 0.7})
    with pytest.raises(ParameterError):
        ParamSet(**{**ok, "mu": 0})


def test_keygen_is_deterministic():
    a = keygen(MINI, seed=99)
    b = keygen(MINI, seed=99)
    c = keygen(MINI, seed=100)
    assert np.array_equal(a.lwe_sk, b.lwe_sk)
    assert np.array_equal(a.rlwe_sk, b.rlwe_sk)
    assert np.array_equal(a.bootstrapping_key.data, b.bootstrapping_key.data)
    assert np.array_equal(a.keyswitch_key.data, b.keyswitch_key.data)
    assert not np.array_equal(a.lwe_sk, c.lwe_sk) or not np.array_equal(
        a.bootstrapping_key.data, c.bk.data)


def test_encrypt_decrypt_roundtrip(mini_keys):
    sk = mini_keys.secret_key()
    rng = SeededRng(42)
    bits = np.array([0, 1] * 100, dtype=np.uint32)
    rows = encrypt_bits(MINI, sk.lwe_sk, bits, rng)
    assert rows.shape == (200, MINI.n + 1)
    assert np.array_equal(decrypt_rows(sk.lwe_sk, rows), bits.astype(np.uint8))


def test_fresh_phase_sits_at_message_levels(mini_keys):
    sk = mini_keys.secret_key()
    rng = SeededRng(43)
    rows = encrypt_bits(MINI, sk.lwe_sk, [1] * 50 + [0] * 50, rng)
    ph = torus_signed(phase_rows(sk.lwe_sk, rows)).astype(np.int64)
    mu = MINI.mu
    # Fresh noise is ~2^-20 of the torus: phases hug +-mu tightly.
    assert np.all(np.abs(ph[:50] - mu) < 2**14)
    assert np.all(np.abs(ph[50:] + mu) < 2**14)


def test_encrypt_rejects_bad_bits(mini_keys):
    sk = mini_keys.secret_key()
    with pytest.raises(ValueError):
        encrypt_bits(MINI, sk.lwe_sk, [0, 2], SeededRng(1))
    with pytest.raises(DimensionError):
        encrypt_bits(MINI, sk.lwe_sk, [[0], [1]], SeededRng(1))


def test_trivial_samples_decrypt_under_any_key(mini_keys):
    sk = mini_keys.secret_key()
    assert decrypt_bit(sk.lwe_sk, lwe_trivial(MINI, MINI.mu)) == 1
    assert decrypt_bit(sk.lwe_sk, lwe_trivial(MINI, MINI.minus_mu)) == 0


def test_lwe_linear_phase_identity(mini_keys):
    sk = mini_keys.secret_key()
    rng = SeededRng(44)
    cts = [encrypt_bit(MINI, sk.lwe_sk, b, rng) for b in (0, 1, 1)]
    weights = [1, -2, 3]
    const = 0x12345678
    combo = lwe_linear(weights, cts, const)
    want = (sum(w * phase(sk.lwe_sk, ct) for w, ct in zip(weights, cts))
            + const) & 0xFFFFFFFF
    assert phase(sk.lwe_sk, combo) == want


def test_gadget_decompose_digits_and_recompose_bound():
    rng = np.random.default_rng(45)
    bg = 1 << MINI.Bg_bits
    half = bg // 2
    err_bound = 1 << (32 - MINI.l * MINI.Bg_bits - 1)
    for _ in range(200):
        poly = rng.integers(0, 2**32, MINI.N, dtype=np.uint32)
        digits = gadget_decompose(poly, MINI)
        assert digits.shape == (MINI.l, MINI.N)
        back = gadget_recompose(digits, MINI)
        err = torus_signed(poly - back).astype(np.int64)
        assert np.all(np.abs(err) <= err_bound)


def test_gadget_digit_range():
    rng = np.random.default_rng(46)
    bg = 1 << MINI.Bg_bits
    half = bg // 2
    poly = rng.integers(0, 2**32, MINI.N, dtype=np.uint32)
    digits = gadget_decompose(poly, MINI)
    assert digits.dtype == np.int32
    assert digits.min() >= -half
    assert digits.max() < half


def _tlwe_phase_poly(ct: TlweCiphertext, rlwe_sk: np.ndarray) -> np.ndarray:
    conv = negacyclic_mul_naive(rlwe_sk.astype(np.int64),
                                ct.a.astype(np.int64))
    return (ct.b - conv).astype(np.uint32)


def test_bootstrapping_key_encrypts_the_small_key(mini_keys):
    """external_product(bk[i], trivial(mu)) must carry lwe_sk[i] * mu."""
    tables = mini_keys.eval_key().tables
    mu = MINI.mu
    triv = tlwe_trivial(MINI.N, mu)
    for i in (0, 1, 7, MINI.n - 1):
        prod = external_product(mini_keys.bootstrapping_key[i], triv, tables)
        ph = torus_signed(_tlwe_phase_poly(prod, mini_keys.rlwe_sk))
        want = mu * int(mini_keys.lwe_sk[i])
        assert abs(int(ph[0]) - want) < 2**22
        # Non-constant coefficients carry no message.
        assert np.all(np.abs(ph[1:].astype(np.int64)) < 2**22)


def test_external_product_transform_tally(mini_keys):
    tables = mini_keys.eval_key().tables
    ctr = OpCounter()
    external_product(mini_keys.bootstrapping_key[0], tlwe_trivial(MINI.N, 123), tables, ctr)
    assert ctr.ntt_forward == 2 * MINI.l
    assert ctr.ntt_inverse == 2


def _reference_blind_rotate(tv, ct, keys):
    """Slow rotate-and-select loop over the public pieces."""
    p = keys.params
    tables = keys.eval_key().tables
    N = p.N
    shift = 32 - tables.log_n - 1
    half = 1 << (shift - 1)

    def disc(x):
        return ((int(x) + half) >> shift) & (2 * N - 1)

    vec = ct.vec
    bbar = disc(vec[-1])
    acc = np.stack([poly_rotate(tv.data[0], -bbar),
                    poly_rotate(tv.data[1], -bbar)])
    for i in range(p.n):
        abar = disc(vec[i])
        rot = np.stack([poly_rotate(acc[0], abar),
                        poly_rotate(acc[1], abar)])
        diff = TlweCiphertext(rot - acc)
        prod = external_product(keys.bootstrapping_key[i], diff, tables)
        acc = acc + prod.data
    return acc


def test_blind_rotate_matches_reference(mini_keys):
    rng = SeededRng(47)
    sk = mini_keys.secret_key()
    tv = tlwe_trivial(MINI.N, MINI.mu)
    for bit in (0, 1):
        ct = encrypt_bit(MINI, sk.lwe_sk, bit, rng)
        fast = blind_rotate(tv, ct, mini_keys.bootstrapping_key, mini_keys.eval_key().tables)
        slow = _reference_blind_rotate(tv, ct, mini_keys)
        assert np.array_equal(fast.data, slow)


def test_blind_rotate_transform_tally(mini_keys):
    sk = mini_keys.secret_key()
    ct = encrypt_bit(MINI, sk.lwe_sk, 1, SeededRng(48))
    ctr = OpCounter()
    blind_rotate(tlwe_trivial(MINI.N, MINI.mu), ct, mini_keys.bootstrapping_key,
                 mini_keys.eval_key().tables, ctr)
    # One external product per LWE position, none skipped.
    assert ctr.ntt_forward == MINI.n * 2 * MINI.l
    assert ctr.ntt_inverse == MINI.n * 2


def test_sample_extract_phase_identity(mini_keys):
    rng = np.random.default_rng(49)
    data = rng.integers(0, 2**32, (2, MINI.N), dtype=np.uint32)
    ct = TlweCiphertext(data)
    ext = sample_extract(ct)
    # Phase of the extracted sample under the coefficient vector of the
    # ring key equals the constant coefficient of the ring phase.
    ring_phase = _tlwe_phase_poly(ct, mini_keys.rlwe_sk)
    ext_phase = phase(mini_keys.rlwe_sk.astype(np.uint32), ext)
    assert ext_phase == int(ring_phase[0])


def test_keyswitch_preserves_phase(mini_keys):
    rng = np.random.default_rng(50)
    p = MINI
    ext_sk = mini_keys.rlwe_sk.astype(np.uint64)
    mu = p.mu
    worst = 0
    for _ in range(200):
        a = rng.integers(0, 2**32, p.N, dtype=np.uint32)
        b = np.uint32((int(a.astype(np.uint64) @ ext_sk) + mu) & 0xFFFFFFFF)
        vec = np.concatenate([a, [b]]).astype(np.uint32)
        from gatewave.cggi import LweCiphertext
        out = keyswitch(LweCiphertext(vec), mini_keys.keyswitch_key)
        got = phase(mini_keys.lwe_sk, out)
        err = abs(int(torus_signed(np.uint32((got - mu) & 0xFFFFFFFF))))
        worst = max(worst, err)
    # Rounding bound N * 2^(31 - t*gamma) plus a little key noise.
    assert worst < p.N * 2 ** (31 - p.ks_levels * p.ks_base_bits) + 2**18


def test_bootstrap_output_has_canonical_levels(mini_keys):
    sk = mini_keys.secret_key()
    rng = SeededRng(51)
    for bit in (0, 1):
        ct = encrypt_bit(MINI, sk.lwe_sk, bit, rng)
        out = gate_bootstrap(ct, mini_keys)
        ph = torus_signed(np.uint32(phase(sk.lwe_sk, out)))
        want = MINI.mu if bit else -MINI.mu
        assert abs(int(ph) - want) < 2**24
        assert decrypt_bit(sk.lwe_sk, out) == bit


ALL_COMBOS = {
    GateKind.AND: lambda a, b: a & b,
    GateKind.OR: lambda a, b: a | b,
    GateKind.NAND: lambda a, b: 1 - (a & b),
    GateKind.NOR: lambda a, b: 1 - (a | b),
    GateKind.XOR: lambda a, b: a ^ b,
    GateKind.XNOR: lambda a, b: 1 - (a ^ b),
}


def test_two_input_gate_truth_tables(mini_keys):
    sk, ek = mini_keys.secret_key(), mini_keys.eval_key()
    rng = SeededRng(52)
    for kind, fn in ALL_COMBOS.items():
        for a in (0, 1):
            for b in (0, 1):
                ca = encrypt_bit(MINI, sk.lwe_sk, a, rng)
                cb = encrypt_bit(MINI, sk.lwe_sk, b, rng)
                out = eval_gate(kind, [ca, cb], ek)
                assert decrypt_bit(sk.lwe_sk, out) == fn(a, b), (kind, a, b)


def test_unary_and_const_gates(mini_keys):
    sk, ek = mini_keys.secret_key(), mini_keys.eval_key()
    rng = SeededRng(53)
    for a in (0, 1):
        ca = encrypt_bit(MINI, sk.lwe_sk, a, rng)
        assert decrypt_bit(sk.lwe_sk, eval_gate(GateKind.NOT, [ca], ek)) == 1 - a
        assert decrypt_bit(sk.lwe_sk, eval_gate(GateKind.COPY, [ca], ek)) == a
    assert decrypt_bit(sk.lwe_sk, eval_gate(GateKind.CONST0, [], ek)) == 0
    assert decrypt_bit(sk.lwe_sk, eval_gate(GateKind.CONST1, [], ek)) == 1


def test_mux_truth_table(mini_keys):
    sk, ek = mini_keys.secret_key(), mini_keys.eval_key()
    rng = SeededRng(54)
    for s in (0, 1):
        for a in (0, 1):
            for b in (0, 1):
                ops = [encrypt_bit(MINI, sk.lwe_sk, v, rng) for v in (s, a, b)]
                out = eval_gate(GateKind.MUX, ops, ek)
                assert decrypt_bit(sk.lwe_sk, out) == (a if s else b), (s, a, b)


def test_gate_transform_counters(mini_keys):
    sk, ek = mini_keys.secret_key(), mini_keys.eval_key()
    rng = SeededRng(55)
    n = MINI.n
    enc = lambda v: encrypt_bit(MINI, sk.lwe_sk, v, rng).vec

    def counted(kind, mats, count=None):
        ctr = OpCounter()
        eval_gate_batch(kind, mats, ek, counter=ctr, count=count)
        return ctr

    one = lambda: np.stack([enc(1)])
    c = counted(GateKind.AND, [one(), one()])
    assert (c.ntt_forward, c.ntt_inverse, c.bootstraps) == (4 * n, 2 * n, 1)
    c = counted(GateKind.MUX, [one(), one(), one()])
    assert (c.ntt_forward, c.ntt_inverse, c.bootstraps) == (8 * n, 4 * n, 2)
    for kind in (GateKind.NOT, GateKind.COPY):
        c = counted(kind, [one()])
        assert (c.ntt_forward, c.ntt_inverse, c.bootstraps) == (0, 0, 0)
    c = counted(GateKind.CONST1, [], count=3)
    assert (c.ntt_forward, c.ntt_inverse, c.bootstraps) == (0, 0, 0)
    # Batch of B two-input gates scales all tallies by B.
    mats = [np.stack([enc(1)] * 5), np.stack([enc(0)] * 5)]
    c = counted(GateKind.OR, mats)
    assert (c.ntt_forward, c.ntt_inverse, c.bootstraps) == (20 * n, 10 * n, 5)


def test_bootstraps_per_gate_table():
    assert BOOTSTRAPS_PER_GATE[GateKind.AND] == 1
    assert BOOTSTRAPS_PER_GATE[GateKind.MUX] == 2
    assert BOOTSTRAPS_PER_GATE[GateKind.NOT] == 0
    assert BOOTSTRAPS_PER_GATE[GateKind.CONST0] == 0
    assert BOOTSTRAPS_PER_GATE[GateKind.COPY] == 0


def test_not_gate_is_exact_negation(mini_keys):
    sk, ek = mini_keys.secret_key(), mini_keys.eval_key()
    ct = encrypt_bit(MINI, sk.lwe_sk, 1, SeededRng(56))
    out = eval_gate(GateKind.NOT, [ct], ek)
    assert np.array_equal(out.vec, (np.uint32(0) - ct.vec))


def test_evaluation_is_deterministic(mini_keys):
    sk, ek = mini_keys.secret_key(), mini_keys.eval_key()
    rng = SeededRng(57)
    a = np.stack([encrypt_bit(MINI, sk.lwe_sk, 1, rng).vec])
    b = np.stack([encrypt_bit(MINI, sk.lwe_sk, 0, rng).vec])
    out1 = eval_gate_batch(GateKind.NAND, [a, b], ek)
    out2 = eval_gate_batch(GateKind.NAND, [a, b], ek)
    assert np.array_equal(out1, out2)


def test_dimension_errors(mini_keys):
    ek = mini_keys.eval_key()
    good = np.zeros((2, MINI.n + 1), dtype=np.uint32)
    bad = np.zeros((2, MINI.n), dtype=np.uint32)
    with pytest.raises(DimensionError):
        eval_gate_batch(GateKind.AND, [good, bad], ek)
    with pytest.raises(DimensionError):
        eval_gate_batch(GateKind.AND, [good], ek)
    with pytest.raises(DimensionError):
        eval_gate_batch(GateKind.AND, [good, np.zeros((3, MINI.n + 1), np.uint32)], ek)
    with pytest.raises(DimensionError):
        eval_gate_batch(GateKind.CONST0, [], ek)  # needs count
