"""Binary file formats for keys and ciphertext bundles.

Every file starts with the magic "ARFX", a format version, and a kind
tag, followed by the full parameter block (so keys are self-describing)
or, for bundles, an 8-byte digest of that block.  A bundle whose digest
does not match the key's parameters is rejected outright: mixing
parameter sets produces garbage that still decrypts to *something*, so
it must never get that far.

All integers are little-endian.  Secret keys hold only the two secret
vectors; evaluation keys hold the bootstrapping and keyswitch material
with no secrets.  Bootstrapping-key polynomials are stored in the
coefficient domain and transformed once at load time.
"""

from __future__ import annotations

import hashlib
import struct
from typing import Mapping

import numpy as np

from .cggi import EvalKey, KeySet, ParamSet, SecretKey

MAGIC = b"ARFX"
FORMAT_VERSION = 1

KIND_SECRET = 1
KIND_EVAL = 2
KIND_BUNDLE = 3

_PARAMS_STRUCT = struct.Struct("<7I2d")
_HEADER_STRUCT = struct.Struct("<4sHH")


class FormatError(ValueError):
    """Structurally bad key/bundle file."""


class ParamsMismatchError(ValueError):
    """File was produced under different scheme parameters."""


def params_to_bytes(p: ParamSet) -> bytes:
    return _PARAMS_STRUCT.pack(
        p.n, p.N, p.Bg_bits, p.l, p.ks_base_bits, p.ks_levels, p.mu,
        p.lwe_noise_std, p.rlwe_noise_std,
    )


def params_from_bytes(buf: bytes) -> ParamSet:
    n, N, bg, l, gamma, t, mu, lwe_std, rlwe_std = _PARAMS_STRUCT.unpack(buf)
    return ParamSet(n=n, N=N, lwe_noise_std=lwe_std, rlwe_noise_std=rlwe_std,
                    Bg_bits=bg, l=l, ks_base_bits=gamma, ks_levels=t, mu=mu)


def params_digest(p: ParamSet) -> bytes:
    return hashlib.sha256(params_to_bytes(p)).digest()[:8]


def _read_exact(f, count: int, what: str) -> bytes:
    buf = f.read(count)
    if len(buf) != count:
        raise FormatError(f"truncated file while reading {what}")
    return buf


def _write_header(f, kind: int) -> None:
    f.write(_HEADER_STRUCT.pack(MAGIC, FORMAT_VERSION, kind))


def _read_header(f, expected_kind: int, what: str) -> None:
    magic, version, kind = _HEADER_STRUCT.unpack(
        _read_exact(f, _HEADER_STRUCT.size, "header"))
    if magic != MAGIC:
        raise FormatError(f"not a {what} file (bad magic)")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {version}")
    if kind != expected_kind:
        raise FormatError(f"expected {what} data, found kind {kind}")


def _read_params(f) -> ParamSet:
    return params_from_bytes(_read_exact(f, _PARAMS_STRUCT.size, "parameters"))


def _array_bytes(arr: np.ndarray, dtype: str) -> bytes:
    return np.ascontiguousarray(arr).astype(dtype, copy=False).tobytes()


def write_secret_key(path: str, key: SecretKey | KeySet) -> None:
    if isinstance(key, KeySet):
        key = key.secret_key()
    with open(path, "wb") as f:
        _write_header(f, KIND_SECRET)
        f.write(params_to_bytes(key.params))
        f.write(_array_bytes(key.lwe_sk, "u1"))
        f.write(_array_bytes(key.rlwe_sk, "u1"))


def read_secret_key(path: str) -> SecretKey:
    with open(path, "rb") as f:
        _read_header(f, KIND_SECRET, "secret-key")
        params = _read_params(f)
        lwe = np.frombuffer(_read_exact(f, params.n, "LWE secret"), dtype=np.uint8)
        rlwe = np.frombuffer(_read_exact(f, params.N, "ring secret"), dtype=np.uint8)
        if f.read(1):
            raise FormatError("trailing data after secret key")
    return SecretKey(params=params,
                     lwe_sk=lwe.astype(np.uint32),
                     rlwe_sk=rlwe.astype(np.uint32))


def write_eval_key(path: str, keys: KeySet | EvalKey) -> None:
    if isinstance(keys, KeySet):
        keys = keys.eval_key()
    with open(path, "wb") as f:
        _write_header(f, KIND_EVAL)
        f.write(params_to_bytes(keys.params))
        f.write(_array_bytes(keys.bk.data, "<u4"))
        f.write(_array_bytes(keys.ksk.data, "<u4"))


def read_eval_key(path: str) -> EvalKey:
    with open(path, "rb") as f:
        _read_header(f, KIND_EVAL, "evaluation-key")
        p = _read_params(f)
        bk_shape = (p.n, 2 * p.l, 2, p.N)
        ks_shape = (p.N, p.ks_levels, (1 << p.ks_base_bits) - 1, p.n + 1)
        bk_raw = _read_exact(f, 4 * int(np.prod(bk_shape)), "bootstrapping key")
        ks_raw = _read_exact(f, 4 * int(np.prod(ks_shape)), "keyswitch key")
        if f.read(1):
            raise FormatError("trailing data after evaluation key")
    bk = np.frombuffer(bk_raw, dtype="<u4").reshape(bk_shape)
    ks = np.frombuffer(ks_raw, dtype="<u4").reshape(ks_shape)
    return EvalKey.build(p, bk, ks)


def write_bundle(path: str, params: ParamSet,
                 wires: Mapping[int, np.ndarray]) -> None:
    """Ciphertext bundle: wire-id-sorted (id, sample) records."""
    width = params.n + 1
    with open(path, "wb") as f:
        _write_header(f, KIND_BUNDLE)
        f.write(params_digest(params))
        f.write(struct.pack("<I", len(wires)))
        for wire in sorted(wires):
            row = np.asarray(wires[wire], dtype=np.uint32)
            if row.shape != (width,):
                raise FormatError(
                    f"wire {wire}: sample has shape {row.shape}, expected ({width},)"
                )
            f.write(struct.pack("<I", wire))
            f.write(_array_bytes(row, "<u4"))


def read_bundle(path: str, params: ParamSet) -> dict[int, np.ndarray]:
    width = params.n + 1
    expected = params_digest(params)
    with open(path, "rb") as f:
        _read_header(f, KIND_BUNDLE, "ciphertext-bundle")
        digest = _read_exact(f, 8, "parameter digest")
        if digest != expected:
            raise ParamsMismatchError(
                "bundle was produced under a different parameter set"
            )
        (count,) = struct.unpack("<I", _read_exact(f, 4, "record count"))
        wires: dict[int, np.ndarray] = {}
        for _ in range(count):
            (wire,) = struct.unpack("<I", _read_exact(f, 4, "wire id"))
            if wire in wires:
                raise FormatError(f"duplicate wire {wire} in bundle")
            row = np.frombuffer(_read_exact(f, 4 * width, f"wire {wire} sample"),
                                dtype="<u4")
            wires[wire] = row.astype(np.uint32, copy=True)
        if f.read(1):
            raise FormatError("trailing data after bundle records")
    return wires
