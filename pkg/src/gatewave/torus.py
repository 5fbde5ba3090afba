"""Arithmetic over the discretized torus and the negacyclic NTT.

Torus elements are stored as uint32 raw values: the fraction raw / 2**32
in [0, 1).  Polynomial multiplication for the homomorphic gate pipeline
runs as an exact negacyclic convolution in Z_Q[X]/(X^N + 1) with
Q = 2**64 - 2**32 + 1, whose multiplicative group contains a 2N-th root
of unity for every power-of-two N up to 2**31.  All products appearing
in the pipeline are small enough (|value| < Q/2) that the mod-Q result
recovers the integer result exactly, so the torus convolution is exact
bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from llvmlite import ir
from numba import njit, types
from numba.core.extending import intrinsic

Q = 0xFFFFFFFF_00000001
GENERATOR = 12037493425763644479  # fixed generator of Z_Q*

_QU = np.uint64(Q)
_QHALF = np.uint64(Q // 2)
_MASK32 = np.uint64(0xFFFFFFFF)
_U32 = np.uint64(32)


class NttDomainError(ValueError):
    """Raised for transform sizes the modulus cannot support."""


@dataclass
class TransformCounter:
    """Tally of number-theoretic transforms actually executed."""

    ntt_forward: int = 0
    ntt_inverse: int = 0

    def merge(self, other: "TransformCounter") -> None:
        self.ntt_forward += other.ntt_forward
        self.ntt_inverse += other.ntt_inverse


# ---------------------------------------------------------------------------
# Scalar mod-Q arithmetic.
#
# 2**64 = 2**32 - 1 (mod Q), so a 128-bit product hi*2**64 + lo with
# hi = h_hi*2**32 + h_lo reduces to lo - h_hi + h_lo*(2**32 - 1).  The
# wrap corrections below add/subtract 2**64 mod Q = 0xFFFFFFFF.
# ---------------------------------------------------------------------------


@intrinsic
def _mul128(typingctx, a, b):
    """Full 64x64 -> 128 bit product as a (hi, lo) pair."""
    sig = types.UniTuple(types.uint64, 2)(types.uint64, types.uint64)

    def codegen(context, builder, signature, args):
        i64 = ir.IntType(64)
        i128 = ir.IntType(128)
        a128 = builder.zext(args[0], i128)
        b128 = builder.zext(args[1], i128)
        prod = builder.mul(a128, b128)
        lo = builder.trunc(prod, i64)
        hi = builder.trunc(builder.lshr(prod, ir.Constant(i128, 64)), i64)
        return context.make_tuple(builder, signature.return_type, [hi, lo])

    return sig, codegen


@njit(types.uint64(types.uint64, types.uint64), inline="always", cache=True)
def _mm(a, b):
    hi, lo = _mul128(a, b)
    h_hi = hi >> _U32
    h_lo = hi & _MASK32
    t = lo - h_hi
    if lo < h_hi:
        t -= _MASK32
    u = (h_lo << _U32) - h_lo
    s = t + u
    if s < t:
        s += _MASK32
    if s >= _QU:
        s -= _QU
    return s


@njit(types.uint64(types.uint64, types.uint64), inline="always", cache=True)
def _ma(a, b):
    s = a + b
    if s < a:
        s += _MASK32
    if s >= _QU:
        s -= _QU
    return s


@njit(types.uint64(types.uint64, types.uint64), inline="always", cache=True)
def _ms(a, b):
    d = a - b
    if a < b:
        d -= _MASK32
    return d


@njit(cache=True, nogil=True)
def _fwd_inplace(a, psi_brv):
    """Harvey-style forward transform, natural order in, bit-reversed out.

    The 2N-th root psi is folded into the twiddle table, so the input is
    the plain coefficient vector of the negacyclic representative.
    """
    n = a.shape[0]
    t = n
    m = 1
    while m < n:
        t >>= 1
        for i in range(m):
            w = psi_brv[m + i]
            j1 = 2 * i * t
            for j in range(j1, j1 + t):
                u = a[j]
                v = _mm(a[j + t], w)
                a[j] = _ma(u, v)
                a[j + t] = _ms(u, v)
        m <<= 1


@njit(cache=True, nogil=True)
def _inv_inplace(a, ipsi_brv, n_inv):
    """Gentleman-Sande inverse, bit-reversed order in, natural out."""
    n = a.shape[0]
    t = 1
    m = n
    while m > 1:
        h = m >> 1
        j1 = 0
        for i in range(h):
            w = ipsi_brv[h + i]
            for j in range(j1, j1 + t):
                u = a[j]
                v = a[j + t]
                a[j] = _ma(u, v)
                a[j + t] = _mm(_ms(u, v), w)
            j1 += 2 * t
        t <<= 1
        m = h
    for j in range(n):
        a[j] = _mm(a[j], n_inv)


@njit(cache=True, nogil=True)
def _fwd_rows(mat, psi_brv):
    for r in range(mat.shape[0]):
        _fwd_inplace(mat[r], psi_brv)


@njit(cache=True, nogil=True)
def _inv_rows(mat, ipsi_brv, n_inv):
    for r in range(mat.shape[0]):
        _inv_inplace(mat[r], ipsi_brv, n_inv)


@njit(cache=True, nogil=True)
def _pointwise_mul(a, b, out):
    for j in range(a.shape[0]):
        out[j] = _mm(a[j], b[j])


def mod_mul(a, b):
    """Product mod Q for uint64 scalars or arrays, no 128-bit division.

    Splits the 128-bit product into 32-bit limbs and folds them with
    2**64 = 2**32 - 1 (mod Q).  Results are fully reduced to [0, Q).
    """
    a_arr = np.atleast_1d(np.asarray(a, dtype=np.uint64))
    b_arr = np.atleast_1d(np.asarray(b, dtype=np.uint64))
    a_lo = a_arr & _MASK32
    a_hi = a_arr >> _U32
    b_lo = b_arr & _MASK32
    b_hi = b_arr >> _U32

    # 128-bit product limbs: lo64 = low half, hi64 = high half.
    ll = a_lo * b_lo
    lh = a_lo * b_hi
    hl = a_hi * b_lo
    hh = a_hi * b_hi
    mid = lh + hl
    mid_carry = (mid < lh).astype(np.uint64)  # wrapped past 2**64
    lo64 = ll + (mid << _U32)
    lo_carry = (lo64 < ll).astype(np.uint64)
    hi64 = hh + (mid >> _U32) + (mid_carry << _U32) + lo_carry

    h_hi = hi64 >> _U32
    h_lo = hi64 & _MASK32
    t = lo64 - h_hi
    t -= (lo64 < h_hi) * _MASK32
    u = (h_lo << _U32) - h_lo
    s = t + u
    s += (s < t) * _MASK32
    s -= (s >= _QU) * _QU

    if np.isscalar(a) and np.isscalar(b):
        return int(s[0])
    return s.reshape(np.broadcast(np.asarray(a), np.asarray(b)).shape)


def _bit_reverse(i: int, bits: int) -> int:
    r = 0
    for _ in range(bits):
        r = (r << 1) | (i & 1)
        i >>= 1
    return r


@dataclass(frozen=True, eq=False)
class NttTables:
    """Precomputed twiddle factors for one transform size."""

    n: int
    log_n: int
    psi: int
    psi_powers: np.ndarray = field(repr=False)   # psi**i, natural order
    omega_powers: np.ndarray = field(repr=False)  # psi**(2i), natural order
    psi_brv: np.ndarray = field(repr=False)       # psi**bitrev(i), fwd twiddles
    ipsi_brv: np.ndarray = field(repr=False)      # inverse twiddles
    n_inv: np.ndarray = field(repr=False)         # 0-d uint64, N**-1 mod Q


def build_ntt_tables(n: int) -> NttTables:
    """Tables for the size-n negacyclic transform.

    n must be a power of two with 2n dividing Q - 1 (any power of two
    up to 2**31 qualifies; larger sizes have no 2n-th root of unity).
    """
    if n < 1 or n & (n - 1):
        raise NttDomainError(f"transform size must be a power of two, got {n}")
    if (Q - 1) % (2 * n):
        raise NttDomainError(f"2*{n} does not divide Q - 1")
    log_n = n.bit_length() - 1
    psi = pow(GENERATOR, (Q - 1) // (2 * n), Q)
    ipsi = pow(psi, Q - 2, Q)

    psi_powers = np.empty(n, dtype=np.uint64)
    omega_powers = np.empty(n, dtype=np.uint64)
    psi_brv = np.empty(n, dtype=np.uint64)
    ipsi_brv = np.empty(n, dtype=np.uint64)
    acc = 1
    for i in range(n):
        psi_powers[i] = acc
        omega_powers[i] = (acc * acc) % Q
        acc = (acc * psi) % Q
    for i in range(n):
        r = _bit_reverse(i, log_n)
        psi_brv[i] = psi_powers[r]
        ipsi_brv[i] = pow(ipsi, r, Q)
    n_inv = np.uint64(pow(n, Q - 2, Q))
    return NttTables(
        n=n,
        log_n=log_n,
        psi=psi,
        psi_powers=psi_powers,
        omega_powers=omega_powers,
        psi_brv=psi_brv,
        ipsi_brv=ipsi_brv,
        n_inv=n_inv,
    )


def _as_rows(p, n: int, dtype) -> np.ndarray:
    arr = np.array(p, dtype=dtype, copy=True)
    if arr.ndim == 0 or arr.shape[-1] != n:
        raise ValueError(
            f"expected trailing dimension {n}, got shape {arr.shape}"
        )
    return arr


def ntt_forward(p, tables: NttTables, counter: TransformCounter | None = None):
    """Forward transform of residue vectors (trailing axis = n).

    Input coefficients must already be residues mod Q (uint64).  Returns
    a new array in the transform domain (bit-reversed index order); the
    input is not modified.
    """
    arr = _as_rows(p, tables.n, np.uint64)
    rows = arr.reshape(-1, tables.n)
    _fwd_rows(rows, tables.psi_brv)
    if counter is not None:
        counter.ntt_forward += rows.shape[0]
    return arr


def ntt_inverse(p, tables: NttTables, counter: TransformCounter | None = None):
    """Inverse of ntt_forward, returning natural-order residues."""
    arr = _as_rows(p, tables.n, np.uint64)
    rows = arr.reshape(-1, tables.n)
    _inv_rows(rows, tables.ipsi_brv, tables.n_inv)
    if counter is not None:
        counter.ntt_inverse += rows.shape[0]
    return arr


def lift_signed(p) -> np.ndarray:
    """Map small signed integer coefficients to residues mod Q."""
    arr = np.asarray(p, dtype=np.int64)
    lifted = arr.astype(np.uint64)
    # For negative x, uint64 holds x + 2**64; subtracting 2**32 - 1
    # yields x + Q without leaving uint64.
    return np.where(arr < 0, lifted - _MASK32, lifted)


def residue_to_torus(r) -> np.ndarray:
    """Map residues representing values in (-Q/2, Q/2) back to uint32.

    The representative is r itself when r <= Q/2 and r - Q otherwise;
    either way the answer mod 2**32 is the low word minus the borrow.
    """
    arr = np.asarray(r, dtype=np.uint64)
    low = (arr & _MASK32).astype(np.uint32)
    return low - (arr > _QHALF).astype(np.uint32)


_INT_COEFF_BOUND = 1 << 20


def negacyclic_mul(p, q, tables: NttTables,
                   counter: TransformCounter | None = None) -> np.ndarray:
    """Negacyclic product of an integer polynomial and a torus polynomial.

    p has small signed integer coefficients (|p_i| < 2**20 keeps every
    intermediate below Q/2, with room to spare for the gadget digit
    range actually used); q is a torus polynomial (uint32).  The result
    is the exact product in T_N[X], uint32 coefficients.
    """
    p_arr = np.asarray(p, dtype=np.int64)
    if p_arr.shape[-1:] != (tables.n,):
        raise ValueError(f"integer polynomial length != {tables.n}")
    if np.abs(p_arr).max(initial=0) >= _INT_COEFF_BOUND:
        raise ValueError("integer coefficients too large for exact convolution")
    q_arr = np.asarray(q, dtype=np.uint32)
    if q_arr.shape[-1:] != (tables.n,):
        raise ValueError(f"torus polynomial length != {tables.n}")

    fp = ntt_forward(lift_signed(p_arr), tables, counter)
    fq = ntt_forward(q_arr.astype(np.uint64), tables, counter)
    prod = mod_mul(fp, fq)
    return residue_to_torus(ntt_inverse(prod, tables, counter))


def negacyclic_mul_naive(p, q) -> np.ndarray:
    """Schoolbook negacyclic product, the reference oracle.

    Exact in int64: with |p_i| < 2**20 and q_i < 2**32 each folded
    coefficient stays below 2**63 for n up to 1024.
    """
    p_arr = np.asarray(p, dtype=np.int64)
    q_arr = np.asarray(q, dtype=np.uint32).astype(np.int64)
    n = p_arr.shape[0]
    if q_arr.shape[0] != n:
        raise ValueError("length mismatch")
    if n == 1:
        return (p_arr * q_arr % (1 << 32)).astype(np.uint32)
    full = np.convolve(p_arr, q_arr)
    wrap = np.concatenate([full[n:], np.zeros(1, dtype=np.int64)])
    return ((full[:n] - wrap) % (1 << 32)).astype(np.uint32)


def poly_rotate(q, k: int) -> np.ndarray:
    """Multiply a torus polynomial by X**k in T[X]/(X^n + 1).

    k may be any integer; rotation is 2n-periodic and X**n = -1.
    """
    q_arr = np.asarray(q, dtype=np.uint32)
    n = q_arr.shape[0]
    k %= 2 * n
    flip = False
    if k >= n:
        k -= n
        flip = True
    out = np.empty_like(q_arr)
    out[k:] = q_arr[: n - k]
    out[:k] = np.zeros(1, dtype=np.uint32) - q_arr[n - k:]
    if flip:
        out = np.zeros(1, dtype=np.uint32) - out
    return out


def torus_signed(x) -> np.ndarray:
    """Centered representative of torus values, as int32 in [-2**31, 2**31)."""
    return np.asarray(x, dtype=np.uint32).astype(np.int32)
