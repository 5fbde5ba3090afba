"""Gate-bootstrapped encrypted bits: keys, ciphertexts, and gate evaluation.

An encrypted bit is an LWE sample over the uint32 torus with message
+mu for 1 and -mu for 0 (mu = 1/8 by default).  Every logic gate except
NOT/COPY/constants is computed by one blind rotation per bootstrap: the
gate's public linear combination moves the answer into the sign of the
phase, the accumulator rotation refreshes it against a test vector of
mu, and a keyswitch brings the sample back to the small dimension.

Batched entry points evaluate many gates of the same kind in one
compiled-kernel call; the single-gate functions are thin wrappers over
the same code path, so results are identical bit for bit either way.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np
from numba import njit

from .rng import SeededRng
from .torus import (
    NttTables,
    TransformCounter,
    _fwd_inplace,
    _inv_inplace,
    _ma,
    _mm,
    _QHALF,
    _QU,
    build_ntt_tables,
    lift_signed,
    mod_mul,
    ntt_forward,
    ntt_inverse,
    residue_to_torus,
    torus_signed,
)

_MASK32 = np.uint64(0xFFFFFFFF)


class ParameterError(ValueError):
    """Raised for parameter sets the scheme cannot instantiate."""


class DimensionError(ValueError):
    """Raised when ciphertext or key dimensions disagree."""


@dataclass
class OpCounter(TransformCounter):
    """Transform tally plus the number of bootstraps performed."""

    bootstraps: int = 0

    def merge(self, other: TransformCounter) -> None:
        super().merge(other)
        self.bootstraps += getattr(other, "bootstraps", 0)


@dataclass(frozen=True)
class ParamSet:
    """Scheme parameters.

    Noise levels are standard deviations as fractions of the torus.
    The defaults in PARAM_110 target roughly 110-bit security with a
    decryption failure rate far below 1e-4 per gate; PARAM_128 raises
    the LWE dimension for a 128-bit target.
    """

    n: int
    N: int
    lwe_noise_std: float
    rlwe_noise_std: float
    Bg_bits: int
    l: int
    ks_base_bits: int
    ks_levels: int
    mu: int = 1 << 29

    def __post_init__(self):
        if self.n < 1:
            raise ParameterError(f"LWE dimension must be positive, got {self.n}")
        if self.N < 2 or self.N & (self.N - 1):
            raise ParameterError(f"ring dimension must be a power of two >= 2, got {self.N}")
        if self.N > 1 << 20:
            raise ParameterError(f"ring dimension too large: {self.N}")
        if not (1 <= self.Bg_bits and 1 <= self.l and self.l * self.Bg_bits <= 32):
            raise ParameterError(
                f"gadget levels * base bits must fit 32 bits, got {self.l} * {self.Bg_bits}"
            )
        if self.N.bit_length() - 1 + self.Bg_bits > 32:
            raise ParameterError("gadget digits too wide for exact convolution")
        if not (1 <= self.ks_base_bits and 1 <= self.ks_levels
                and self.ks_levels * self.ks_base_bits <= 32):
            raise ParameterError(
                f"keyswitch levels * base bits must fit 32 bits, "
                f"got {self.ks_levels} * {self.ks_base_bits}"
            )
        for name in ("lwe_noise_std", "rlwe_noise_std"):
            v = getattr(self, name)
            if not (0.0 <= v < 0.5) or not math.isfinite(v):
                raise ParameterError(f"{name} must be in [0, 0.5), got {v}")
        if not (0 < self.mu < 1 << 32):
            raise ParameterError(f"mu must be a nonzero uint32, got {self.mu}")

    @property
    def minus_mu(self) -> int:
        return (1 << 32) - self.mu


PARAM_110 = ParamSet(
    n=512,
    N=1024,
    lwe_noise_std=2.0 ** -15,
    rlwe_noise_std=2.5e-8,
    Bg_bits=9,
    l=2,
    ks_base_bits=2,
    ks_levels=8,
)

PARAM_128 = ParamSet(
    n=630,
    N=1024,
    lwe_noise_std=2.0 ** -15,
    rlwe_noise_std=2.5e-8,
    Bg_bits=9,
    l=2,
    ks_base_bits=2,
    ks_levels=8,
)

PARAM_SETS = {"110": PARAM_110, "128": PARAM_128}


class GateKind(Enum):
    AND = "AND"
    OR = "OR"
    NAND = "NAND"
    NOR = "NOR"
    XOR = "XOR"
    XNOR = "XNOR"
    NOT = "NOT"
    MUX = "MUX"
    CONST0 = "CONST0"
    CONST1 = "CONST1"
    COPY = "COPY"


GATE_ARITY = {
    GateKind.AND: 2,
    GateKind.OR: 2,
    GateKind.NAND: 2,
    GateKind.NOR: 2,
    GateKind.XOR: 2,
    GateKind.XNOR: 2,
    GateKind.NOT: 1,
    GateKind.MUX: 3,
    GateKind.CONST0: 0,
    GateKind.CONST1: 0,
    GateKind.COPY: 1,
}

TWO_INPUT_KINDS = frozenset(
    {GateKind.AND, GateKind.OR, GateKind.NAND, GateKind.NOR,
     GateKind.XOR, GateKind.XNOR}
)

# (constant, weight1, weight2) as multiples of mu: the input combination
# whose sign after blind rotation is the gate's answer.
_GATE_COMBO = {
    GateKind.AND: (-1, 1, 1),
    GateKind.OR: (1, 1, 1),
    GateKind.NAND: (1, -1, -1),
    GateKind.NOR: (-1, -1, -1),
    GateKind.XOR: (2, 2, 2),
    GateKind.XNOR: (-2, -2, -2),
}

# How many bootstraps each gate kind costs.
BOOTSTRAPS_PER_GATE = {k: (1 if k in TWO_INPUT_KINDS else 0) for k in GateKind}
BOOTSTRAPS_PER_GATE[GateKind.MUX] = 2


@dataclass(eq=False)
class LweCiphertext:
    """LWE sample: vec = [a_0 .. a_{n-1}, b], all uint32."""

    vec: np.ndarray

    def __post_init__(self):
        self.vec = np.ascontiguousarray(self.vec, dtype=np.uint32)
        if self.vec.ndim != 1 or self.vec.shape[0] < 2:
            raise DimensionError(f"LWE vector must be 1-d [a..., b], got {self.vec.shape}")

    @property
    def dim(self) -> int:
        return self.vec.shape[0] - 1

    @property
    def a(self) -> np.ndarray:
        return self.vec[:-1]

    @property
    def b(self) -> int:
        return int(self.vec[-1])


@dataclass(eq=False)
class TlweCiphertext:
    """Ring LWE sample (a(X), b(X)), stored as a (2, N) uint32 array."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.uint32)
        if self.data.ndim != 2 or self.data.shape[0] != 2:
            raise DimensionError(f"TLWE data must have shape (2, N), got {self.data.shape}")

    @property
    def a(self) -> np.ndarray:
        return self.data[0]

    @property
    def b(self) -> np.ndarray:
        return self.data[1]

    @property
    def ring_dim(self) -> int:
        return self.data.shape[1]


@dataclass(eq=False)
class TgswCiphertext:
    """Gadget-encrypted ring sample: (2l, 2, N) uint32 rows.

    Rows 0..l-1 carry the message on the a component (scaled by the
    gadget powers), rows l..2l-1 on the b component.
    """

    rows: np.ndarray
    bg_bits: int

    def __post_init__(self):
        self.rows = np.ascontiguousarray(self.rows, dtype=np.uint32)
        if self.rows.ndim != 3 or self.rows.shape[1] != 2 or self.rows.shape[0] % 2:
            raise DimensionError(f"TGSW rows must have shape (2l, 2, N), got {self.rows.shape}")
        self._ntt = None

    @property
    def levels(self) -> int:
        return self.rows.shape[0] // 2

    @property
    def ring_dim(self) -> int:
        return self.rows.shape[2]

    def ntt_rows(self, tables: NttTables) -> np.ndarray:
        """Transform-domain rows, cached.  Key material is transformed
        once at construction time, not per gate, so these transforms are
        not part of any per-gate tally."""
        if self._ntt is None:
            self._ntt = ntt_forward(self.rows.astype(np.uint64), tables)
        return self._ntt


class BootstrappingKey:
    """TGSW encryptions of each LWE secret bit, with transform-domain
    rows precomputed once."""

    def __init__(self, data: np.ndarray, bg_bits: int, tables: NttTables,
                 ntt: np.ndarray | None = None):
        self.data = np.ascontiguousarray(data, dtype=np.uint32)
        if self.data.ndim != 4 or self.data.shape[2] != 2:
            raise DimensionError(f"bootstrapping key must be (n, 2l, 2, N), got {self.data.shape}")
        self.bg_bits = bg_bits
        if ntt is None:
            ntt = ntt_forward(self.data.astype(np.uint64), tables)
        self.ntt = ntt

    def __len__(self) -> int:
        return self.data.shape[0]

    def __getitem__(self, i: int) -> TgswCiphertext:
        g = TgswCiphertext(self.data[i], self.bg_bits)
        g._ntt = self.ntt[i]
        return g


class KeyswitchKey:
    """LWE encryptions of v * s_i / 2**((j+1)*gamma) for every ring secret
    coefficient s_i, level j, and nonzero digit value v."""

    def __init__(self, data: np.ndarray, base_bits: int, levels: int):
        self.data = np.ascontiguousarray(data, dtype=np.uint32)
        expected_rows = (1 << base_bits) - 1
        if self.data.ndim != 4 or self.data.shape[1] != levels \
                or self.data.shape[2] != expected_rows:
            raise DimensionError(
                f"keyswitch key must be (N, {levels}, {expected_rows}, n+1), "
                f"got {self.data.shape}"
            )
        self.base_bits = base_bits
        self.levels = levels

    def entry(self, i: int, j: int, digit: int) -> LweCiphertext:
        if digit < 1:
            raise DimensionError("keyswitch rows exist only for nonzero digits")
        return LweCiphertext(self.data[i, j, digit - 1])


@dataclass(eq=False)
class SecretKey:
    """Client-side material: enough to encrypt and decrypt."""

    params: ParamSet
    lwe_sk: np.ndarray
    rlwe_sk: np.ndarray


@dataclass(eq=False)
class EvalKey:
    """Server-side material: enough to evaluate gates, nothing secret."""

    params: ParamSet
    bk: BootstrappingKey
    ksk: KeyswitchKey
    tables: NttTables

    @classmethod
    def build(cls, params: ParamSet, bk_data: np.ndarray, ksk_data: np.ndarray,
              tables: NttTables | None = None) -> "EvalKey":
        tables = tables or build_ntt_tables(params.N)
        bk = BootstrappingKey(bk_data, params.Bg_bits, tables)
        ksk = KeyswitchKey(ksk_data, params.ks_base_bits, params.ks_levels)
        return cls(params=params, bk=bk, ksk=ksk, tables=tables)


@dataclass(eq=False)
class KeySet:
    """Everything keygen produces."""

    params: ParamSet
    lwe_sk: np.ndarray
    rlwe_sk: np.ndarray
    bootstrapping_key: BootstrappingKey
    keyswitch_key: KeyswitchKey
    tables: NttTables

    def secret_key(self) -> SecretKey:
        return SecretKey(self.params, self.lwe_sk, self.rlwe_sk)

    def eval_key(self) -> EvalKey:
        return EvalKey(self.params, self.bootstrapping_key,
                       self.keyswitch_key, self.tables)


def _as_eval_key(keys) -> EvalKey:
    if isinstance(keys, EvalKey):
        return keys
    if isinstance(keys, KeySet):
        return keys.eval_key()
    raise TypeError(f"expected KeySet or EvalKey, got {type(keys)!r}")


# ---------------------------------------------------------------------------
# Key generation.  The draw order from the seeded stream is fixed:
# lwe_sk, rlwe_sk, bootstrapping-key masks, bootstrapping-key noise,
# keyswitch masks, keyswitch noise.  Identical seeds give identical keys.
# ---------------------------------------------------------------------------


def keygen(params: ParamSet, seed: bytes | int | None = None) -> KeySet:
    rng = SeededRng(seed)
    n, N, l = params.n, params.N, params.l
    tables = build_ntt_tables(N)

    lwe_sk = rng.bits(n)
    rlwe_sk = rng.bits(N)

    # Bootstrapping key: TGSW(lwe_sk[i]) under the ring key.
    bk_mask = rng.uniform_u32((n, 2 * l, N))
    bk_noise = rng.normal_torus(params.rlwe_noise_std, (n, 2 * l, N))
    s_ntt = ntt_forward(rlwe_sk.astype(np.uint64), tables)
    mask_ntt = ntt_forward(bk_mask.astype(np.uint64), tables)
    a_times_s = residue_to_torus(ntt_inverse(mod_mul(mask_ntt, s_ntt), tables))
    bk_data = np.empty((n, 2 * l, 2, N), dtype=np.uint32)
    bk_data[:, :, 0, :] = bk_mask
    bk_data[:, :, 1, :] = a_times_s + bk_noise
    for lv in range(l):
        h = np.uint32(1 << (32 - (lv + 1) * params.Bg_bits))
        bk_data[:, lv, 0, 0] += lwe_sk * h
        bk_data[:, l + lv, 1, 0] += lwe_sk * h
    bk = BootstrappingKey(bk_data, params.Bg_bits, tables)

    # Keyswitch key: LWE(v * rlwe_sk[i] * 2**(32-(j+1)*gamma)).
    t, gamma = params.ks_levels, params.ks_base_bits
    vmax = (1 << gamma) - 1
    ks_mask = rng.uniform_u32((N, t, vmax, n))
    ks_noise = rng.normal_torus(params.lwe_noise_std, (N, t, vmax))
    dots = (ks_mask.reshape(-1, n).astype(np.uint64) @ lwe_sk.astype(np.uint64))
    dots = (dots & _MASK32).astype(np.uint32).reshape(N, t, vmax)
    scales = np.array(
        [[(v + 1) << (32 - (j + 1) * gamma) & 0xFFFFFFFF for v in range(vmax)]
         for j in range(t)],
        dtype=np.uint32,
    )
    msgs = rlwe_sk[:, None, None] * scales[None, :, :]
    ks_data = np.empty((N, t, vmax, n + 1), dtype=np.uint32)
    ks_data[..., :n] = ks_mask
    ks_data[..., n] = dots + ks_noise + msgs
    ksk = KeyswitchKey(ks_data, gamma, t)

    return KeySet(params=params, lwe_sk=lwe_sk, rlwe_sk=rlwe_sk,
                  bootstrapping_key=bk, keyswitch_key=ksk, tables=tables)


# ---------------------------------------------------------------------------
# Encryption, decryption, linear algebra on samples.
# ---------------------------------------------------------------------------


def encrypt_bits(params: ParamSet, lwe_sk: np.ndarray, bits,
                 rng: SeededRng) -> np.ndarray:
    """Encrypt a vector of bits into a (B, n+1) matrix of LWE samples."""
    bits_arr = np.asarray(bits, dtype=np.uint32)
    if bits_arr.ndim != 1:
        raise DimensionError("bits must be a 1-d sequence")
    if np.any(bits_arr > 1):
        raise ValueError("plaintext bits must be 0 or 1")
    count = bits_arr.shape[0]
    n = params.n
    mask = rng.uniform_u32((count, n))
    noise = rng.normal_torus(params.lwe_noise_std, count)
    dots = (mask.astype(np.uint64) @ lwe_sk.astype(np.uint64) & _MASK32).astype(np.uint32)
    mu = np.uint32(params.mu)
    msgs = np.where(bits_arr == 1, mu, np.uint32(params.minus_mu))
    out = np.empty((count, n + 1), dtype=np.uint32)
    out[:, :n] = mask
    out[:, n] = dots + noise + msgs
    return out


def encrypt_bit(params: ParamSet, lwe_sk: np.ndarray, bit: int,
                rng: SeededRng) -> LweCiphertext:
    return LweCiphertext(encrypt_bits(params, lwe_sk, [int(bit)], rng)[0])


def phase_rows(lwe_sk: np.ndarray, mat: np.ndarray) -> np.ndarray:
    """Raw phases b - <a, s> of a (B, n+1) sample matrix, as uint32."""
    mat = np.asarray(mat, dtype=np.uint32)
    n = mat.shape[-1] - 1
    if lwe_sk.shape[0] != n:
        raise DimensionError(f"key dimension {lwe_sk.shape[0]} != sample dimension {n}")
    dots = mat[..., :n].astype(np.uint64) @ lwe_sk.astype(np.uint64)
    return mat[..., n] - (dots & _MASK32).astype(np.uint32)


def phase(lwe_sk: np.ndarray, ct: LweCiphertext) -> int:
    """Phase of a single sample as a raw uint32 torus value."""
    return int(phase_rows(lwe_sk, ct.vec[None, :])[0])


def decrypt_rows(lwe_sk: np.ndarray, mat: np.ndarray) -> np.ndarray:
    """Bits from a (B, n+1) sample matrix: 1 iff the phase lies in (0, 1/2)."""
    return (torus_signed(phase_rows(lwe_sk, mat)) > 0).astype(np.uint8)


def decrypt_bit(lwe_sk: np.ndarray, ct: LweCiphertext) -> int:
    return int(decrypt_rows(lwe_sk, ct.vec[None, :])[0])


def lwe_trivial(params: ParamSet, torus_value: int) -> LweCiphertext:
    """Noiseless sample (0, ..., 0, value): encrypts value under any key."""
    vec = np.zeros(params.n + 1, dtype=np.uint32)
    vec[-1] = np.uint32(torus_value & 0xFFFFFFFF)
    return LweCiphertext(vec)


def tlwe_trivial(N: int, torus_value: int) -> TlweCiphertext:
    """Noiseless ring sample with b(X) = value (constant polynomial)."""
    data = np.zeros((2, N), dtype=np.uint32)
    data[1, 0] = np.uint32(torus_value & 0xFFFFFFFF)
    return TlweCiphertext(data)


def lwe_linear(weights: Sequence[int], cts: Sequence[LweCiphertext],
               constant: int = 0) -> LweCiphertext:
    """Integer combination sum(w_i * ct_i) + (0, constant), exact mod 2**32."""
    if len(weights) != len(cts):
        raise DimensionError(f"{len(weights)} weights for {len(cts)} ciphertexts")
    if not cts:
        raise DimensionError("need at least one ciphertext")
    dim = cts[0].dim
    for ct in cts:
        if ct.dim != dim:
            raise DimensionError(f"mixed LWE dimensions {ct.dim} and {dim}")
    acc = np.zeros(dim + 1, dtype=np.int64)
    for w, ct in zip(weights, cts):
        acc += int(w) * ct.vec.astype(np.int64)
    acc[-1] += int(constant)
    return LweCiphertext((acc & 0xFFFFFFFF).astype(np.uint32))


# ---------------------------------------------------------------------------
# Gadget decomposition and the external product.
# ---------------------------------------------------------------------------


def _decompose_offset(bg_bits: int, levels: int) -> int:
    """Adding this constant turns truncation into round-to-nearest with
    digits centered in [-B/2, B/2)."""
    off = 1 << (32 - levels * bg_bits - 1)
    for j in range(1, levels + 1):
        off += (1 << (bg_bits - 1)) << (32 - j * bg_bits)
    return off & 0xFFFFFFFF


def _gadget_digits(arr: np.ndarray, bg: int, l: int) -> np.ndarray:
    buf = arr + np.uint32(_decompose_offset(bg, l))
    base = 1 << bg
    digits = np.empty((l,) + arr.shape, dtype=np.int32)
    for j in range(l):
        sh = np.uint32(32 - (j + 1) * bg)
        digits[j] = ((buf >> sh) & np.uint32(base - 1)).astype(np.int32) - (base >> 1)
    return digits


def gadget_decompose(poly, params: ParamSet) -> np.ndarray:
    """Signed base-2**Bg_bits digits of a torus polynomial.

    Returns an (l, N) int32 array with digits in [-B/2, B/2) such that
    sum_j digits[j] * 2**(32-(j+1)*Bg_bits) approximates the input to
    within 2**(32 - l*Bg_bits - 1) per coefficient.
    """
    return _gadget_digits(np.asarray(poly, dtype=np.uint32), params.Bg_bits, params.l)


def gadget_recompose(digits: np.ndarray, params: ParamSet) -> np.ndarray:
    """Inverse direction, for tests: digits back to a torus polynomial."""
    bg = params.Bg_bits
    acc = np.zeros(digits.shape[1:], dtype=np.uint32)
    for j in range(digits.shape[0]):
        acc += (digits[j].astype(np.int64) << (32 - (j + 1) * bg) & 0xFFFFFFFF).astype(np.uint32)
    return acc


def _mod_add_arr(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    s = x + y
    s += (s < x) * _MASK32
    s -= (s >= _QU) * _QU
    return s


def external_product(g: TgswCiphertext, c: TlweCiphertext, tables: NttTables,
                     counter: TransformCounter | None = None) -> TlweCiphertext:
    """TGSW x TLWE product: decrypts to (message of g) * (message of c).

    Decomposes both components of c, transforms the 2l digit
    polynomials, and accumulates against the cached transform-domain
    rows of g: exactly 2l forward and 2 inverse transforms.
    """
    if g.ring_dim != c.ring_dim or g.ring_dim != tables.n:
        raise DimensionError("ring dimensions disagree")
    l = g.levels
    digits = np.concatenate(
        [_gadget_digits(c.a, g.bg_bits, l), _gadget_digits(c.b, g.bg_bits, l)],
        axis=0,
    )
    fr = ntt_forward(lift_signed(digits), tables, counter)
    gn = g.ntt_rows(tables)
    acc = np.zeros((2, tables.n), dtype=np.uint64)
    for r in range(2 * l):
        acc[0] = _mod_add_arr(acc[0], mod_mul(fr[r], gn[r, 0]))
        acc[1] = _mod_add_arr(acc[1], mod_mul(fr[r], gn[r, 1]))
    return TlweCiphertext(residue_to_torus(ntt_inverse(acc, tables, counter)))


# ---------------------------------------------------------------------------
# Compiled kernels for the per-gate pipeline.  Loops run with the LWE
# index outermost so each TGSW slice stays hot across the whole batch,
# and the transform tallies reflect work actually performed.
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _blind_rotate_kernel(cts, tv, bk_ntt, psi_brv, ipsi_brv, n_inv,
                         log_n, bg_bits, levels, dec_offset, counts):
    B = cts.shape[0]
    n = cts.shape[1] - 1
    N = tv.shape[1]
    two_n = 2 * N
    rows = 2 * levels
    rshift = np.uint64(32 - (log_n + 1))
    radd = np.uint64(1) << np.uint64(32 - (log_n + 1) - 1)
    base_mask = np.uint64((1 << bg_bits) - 1)
    half_base = np.int64(1 << (bg_bits - 1))
    offs = np.uint64(dec_offset)
    m32 = np.uint64(0xFFFFFFFF)
    two32 = np.uint64(1) << np.uint64(32)

    acc = np.empty((B, 2, N), dtype=np.uint32)
    resid = np.empty((rows, N), dtype=np.uint64)
    accntt = np.empty((2, N), dtype=np.uint64)

    # acc <- test vector rotated by -round(b * 2N)
    for g in range(B):
        bbar = int((np.uint64(cts[g, n]) + radd) >> rshift) & (two_n - 1)
        k = (two_n - bbar) & (two_n - 1)
        for c in range(2):
            for j in range(N):
                m = (j - k) & (two_n - 1)
                if m < N:
                    acc[g, c, j] = tv[c, m]
                else:
                    acc[g, c, j] = np.uint32((two32 - np.uint64(tv[c, m - N])) & m32)

    for i in range(n):
        bk_i = bk_ntt[i]
        for g in range(B):
            abar = int((np.uint64(cts[g, i]) + radd) >> rshift) & (two_n - 1)
            # decompose acc * (X**abar - 1) straight into mod-Q residues
            for c in range(2):
                row = acc[g, c]
                for j in range(N):
                    m = (j - abar) & (two_n - 1)
                    if m < N:
                        rot = np.uint64(row[m])
                    else:
                        rot = (two32 - np.uint64(row[m - N])) & m32
                    buf = ((rot - np.uint64(row[j])) + offs) & m32
                    for lv in range(levels):
                        sh = np.uint64(32 - (lv + 1) * bg_bits)
                        dig = np.int64((buf >> sh) & base_mask) - half_base
                        if dig < 0:
                            resid[c * levels + lv, j] = _QU + np.uint64(dig)
                        else:
                            resid[c * levels + lv, j] = np.uint64(dig)
            for r in range(rows):
                _fwd_inplace(resid[r], psi_brv)
            counts[0] += rows
            for j in range(N):
                accntt[0, j] = np.uint64(0)
                accntt[1, j] = np.uint64(0)
            for r in range(rows):
                dr = resid[r]
                for c2 in range(2):
                    bkrow = bk_i[r, c2]
                    arow = accntt[c2]
                    for j in range(N):
                        arow[j] = _ma(arow[j], _mm(dr[j], bkrow[j]))
            for c2 in range(2):
                _inv_inplace(accntt[c2], ipsi_brv, n_inv)
                counts[1] += 1
                arow = accntt[c2]
                outrow = acc[g, c2]
                for j in range(N):
                    rr = arow[j]
                    tor = ((rr & m32) - (np.uint64(1) if rr > _QHALF else np.uint64(0))) & m32
                    outrow[j] = np.uint32((np.uint64(outrow[j]) + tor) & m32)
    return acc


@njit(cache=True, nogil=True)
def _keyswitch_kernel(exts, ksk, levels, gamma):
    B = exts.shape[0]
    N = ksk.shape[0]
    width = ksk.shape[3]
    tg = levels * gamma
    roff = np.uint64(1) << np.uint64(32 - tg - 1)
    rsh = np.uint64(32 - tg)
    dmask = np.uint64((1 << gamma) - 1)
    out = np.zeros((B, width), dtype=np.uint32)
    for g in range(B):
        orow = out[g]
        orow[width - 1] = exts[g, N]
        for i in range(N):
            u = (np.uint64(exts[g, i]) + roff) >> rsh
            for j in range(levels):
                sh = np.uint64((levels - 1 - j) * gamma)
                d = int((u >> sh) & dmask)
                if d != 0:
                    krow = ksk[i, j, d - 1]
                    for jj in range(width):
                        orow[jj] = orow[jj] - krow[jj]
    return out


def _extract_rows(acc: np.ndarray) -> np.ndarray:
    """Constant-coefficient extraction: (B, 2, N) accumulators to
    (B, N+1) LWE samples under the ring key's coefficient vector."""
    B, _, N = acc.shape
    out = np.empty((B, N + 1), dtype=np.uint32)
    out[:, 0] = acc[:, 0, 0]
    if N > 1:
        out[:, 1:N] = np.uint32(0) - acc[:, 0, :0:-1]
    out[:, N] = acc[:, 1, 0]
    return out


def _bootstrap_rows(lin: np.ndarray, ek: EvalKey,
                    counter: TransformCounter | None) -> np.ndarray:
    """Blind-rotate + extract + keyswitch a (B, n+1) batch of gate
    combinations; returns refreshed (B, n+1) samples."""
    p = ek.params
    tv = np.zeros((2, p.N), dtype=np.uint32)
    tv[1, :] = np.uint32(p.mu)
    counts = np.zeros(2, dtype=np.int64)
    acc = _blind_rotate_kernel(
        lin, tv, ek.bk.ntt, ek.tables.psi_brv, ek.tables.ipsi_brv,
        ek.tables.n_inv, ek.tables.log_n, p.Bg_bits, p.l,
        _decompose_offset(p.Bg_bits, p.l), counts,
    )
    exts = _extract_rows(acc)
    out = _keyswitch_kernel(exts, ek.ksk.data, p.ks_levels, p.ks_base_bits)
    if counter is not None:
        counter.ntt_forward += int(counts[0])
        counter.ntt_inverse += int(counts[1])
        if isinstance(counter, OpCounter):
            counter.bootstraps += lin.shape[0]
    return out


def blind_rotate(test_vector: TlweCiphertext, ct: LweCiphertext,
                 bk: BootstrappingKey, tables: NttTables,
                 counter: TransformCounter | None = None) -> TlweCiphertext:
    """Rotate the test vector by the discretized phase of ct.

    Every LWE position contributes one external product (2l forward, 2
    inverse transforms) whether or not its rounded coefficient is zero,
    so the tally is exactly n * 2l forward and n * 2 inverse.
    """
    if ct.dim != len(bk):
        raise DimensionError(f"sample dimension {ct.dim} != key length {len(bk)}")
    if test_vector.ring_dim != tables.n:
        raise DimensionError("test vector ring dimension != table size")
    counts = np.zeros(2, dtype=np.int64)
    acc = _blind_rotate_kernel(
        ct.vec[None, :], test_vector.data, bk.ntt, tables.psi_brv,
        tables.ipsi_brv, tables.n_inv, tables.log_n, bk.bg_bits,
        bk.data.shape[1] // 2, _decompose_offset(bk.bg_bits, bk.data.shape[1] // 2),
        counts,
    )
    if counter is not None:
        counter.ntt_forward += int(counts[0])
        counter.ntt_inverse += int(counts[1])
    return TlweCiphertext(acc[0])


def sample_extract(c: TlweCiphertext) -> LweCiphertext:
    """LWE sample of the constant coefficient under the coefficient key."""
    return LweCiphertext(_extract_rows(c.data[None, :, :])[0])


def keyswitch(ct: LweCiphertext, ksk: KeyswitchKey,
              counter: TransformCounter | None = None) -> LweCiphertext:
    """Switch a dimension-N sample to the small key, digit by digit."""
    if ct.dim != ksk.data.shape[0]:
        raise DimensionError(f"sample dimension {ct.dim} != keyswitch rows {ksk.data.shape[0]}")
    out = _keyswitch_kernel(ct.vec[None, :], ksk.data, ksk.levels, ksk.base_bits)
    return LweCiphertext(out[0])


def gate_bootstrap(ct: LweCiphertext, keys,
                   counter: TransformCounter | None = None) -> LweCiphertext:
    """Refresh a sample to the canonical +-mu levels: the sign of the
    input phase becomes the sign of the output message."""
    ek = _as_eval_key(keys)
    if ct.dim != ek.params.n:
        raise DimensionError(f"sample dimension {ct.dim} != parameter n {ek.params.n}")
    return LweCiphertext(_bootstrap_rows(ct.vec[None, :], ek, counter)[0])


# ---------------------------------------------------------------------------
# Gates.
# ---------------------------------------------------------------------------


def eval_gate_batch(kind: GateKind, operands: Sequence[np.ndarray], ek: EvalKey,
                    counter: TransformCounter | None = None,
                    count: int | None = None) -> np.ndarray:
    """Evaluate one gate kind over a batch: operands is one (B, n+1)
    matrix per input position.  Constant gates take count instead."""
    arity = GATE_ARITY[kind]
    if len(operands) != arity:
        raise DimensionError(f"{kind.value} takes {arity} operands, got {len(operands)}")
    p = ek.params
    mats = [np.ascontiguousarray(m, dtype=np.uint32) for m in operands]
    for m in mats:
        if m.ndim != 2 or m.shape[1] != p.n + 1:
            raise DimensionError(f"operand matrix must be (B, {p.n + 1}), got {m.shape}")
        if m.shape[0] != mats[0].shape[0]:
            raise DimensionError("operand batch sizes disagree")

    if kind in (GateKind.CONST0, GateKind.CONST1):
        if count is None:
            raise DimensionError("constant gates need an explicit count")
        body = p.mu if kind is GateKind.CONST1 else p.minus_mu
        out = np.zeros((count, p.n + 1), dtype=np.uint32)
        out[:, -1] = np.uint32(body)
        return out

    if kind is GateKind.COPY:
        return mats[0].copy()

    if kind is GateKind.NOT:
        # Negation flips the message sign; no bootstrap, no new noise.
        return np.uint32(0) - mats[0]

    if kind in TWO_INPUT_KINDS:
        c_mu, w1, w2 = _GATE_COMBO[kind]
        lin = mats[0].astype(np.int64) * w1 + mats[1].astype(np.int64) * w2
        lin[:, -1] += c_mu * p.mu
        lin = (lin & 0xFFFFFFFF).astype(np.uint32)
        return _bootstrap_rows(lin, ek, counter)

    if kind is GateKind.MUX:
        sel, a, b = (m.astype(np.int64) for m in mats)
        lin1 = sel + a
        lin2 = b - sel
        lin1[:, -1] -= p.mu
        lin2[:, -1] -= p.mu
        both = np.concatenate([lin1, lin2], axis=0)
        both = (both & 0xFFFFFFFF).astype(np.uint32)
        # One kernel call refreshes both internal products of the whole
        # batch; they recombine at the large dimension and keyswitch once.
        pcount = counter if isinstance(counter, OpCounter) else None
        tv = np.zeros((2, p.N), dtype=np.uint32)
        tv[1, :] = np.uint32(p.mu)
        counts = np.zeros(2, dtype=np.int64)
        acc = _blind_rotate_kernel(
            both, tv, ek.bk.ntt, ek.tables.psi_brv, ek.tables.ipsi_brv,
            ek.tables.n_inv, ek.tables.log_n, p.Bg_bits, p.l,
            _decompose_offset(p.Bg_bits, p.l), counts,
        )
        exts = _extract_rows(acc)
        B = mats[0].shape[0]
        pre = exts[:B] + exts[B:]
        pre[:, -1] += np.uint32(p.mu)
        out = _keyswitch_kernel(pre, ek.ksk.data, p.ks_levels, p.ks_base_bits)
        if counter is not None:
            counter.ntt_forward += int(counts[0])
            counter.ntt_inverse += int(counts[1])
            if pcount is not None:
                pcount.bootstraps += 2 * B
        return out

    raise DimensionError(f"unhandled gate kind {kind!r}")


def eval_gate(kind: GateKind, inputs: Sequence[LweCiphertext], keys,
              counter: TransformCounter | None = None) -> LweCiphertext:
    """Evaluate one gate on individual ciphertexts.

    NOT and COPY are free (no bootstrap); constants produce trivial
    samples; every other kind costs its bootstrap count and nothing else.
    """
    ek = _as_eval_key(keys)
    arity = GATE_ARITY[kind]
    if len(inputs) != arity:
        raise DimensionError(f"{kind.value} takes {arity} inputs, got {len(inputs)}")
    for ct in inputs:
        if ct.dim != ek.params.n:
            raise DimensionError(f"input dimension {ct.dim} != parameter n {ek.params.n}")
    mats = [ct.vec[None, :] for ct in inputs]
    out = eval_gate_batch(kind, mats, ek, counter, count=1)
    return LweCiphertext(out[0])
