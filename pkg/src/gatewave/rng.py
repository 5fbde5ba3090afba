"""Deterministic randomness for key generation and encryption.

All draws come from a single ChaCha20 keystream, so a (seed, draw
sequence) pair fully determines every key and ciphertext.  Gaussian
noise is produced by the Box-Muller transform over keystream words and
rounded to the torus grid.
"""

from __future__ import annotations

import hashlib
import os

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher
from cryptography.hazmat.primitives.ciphers.algorithms import ChaCha20

_TWO32 = float(1 << 32)


class SeededRng:
    """ChaCha20-keystream randomness with torus-aware draw helpers."""

    def __init__(self, seed: bytes | int | None = None):
        if seed is None:
            key = os.urandom(32)
        elif isinstance(seed, int):
            key = hashlib.sha256(seed.to_bytes(32, "little", signed=True)).digest()
        elif isinstance(seed, (bytes, bytearray)):
            key = hashlib.sha256(bytes(seed)).digest()
        else:
            raise TypeError(f"seed must be bytes, int or None, not {type(seed)!r}")
        cipher = Cipher(ChaCha20(key, b"\x00" * 16), mode=None)
        self._stream = cipher.encryptor()

    def raw(self, nbytes: int) -> bytes:
        return self._stream.update(b"\x00" * nbytes)

    def uniform_u32(self, shape) -> np.ndarray:
        """Uniform torus elements (uint32)."""
        count = int(np.prod(shape, dtype=np.int64)) if not isinstance(shape, int) else shape
        out = np.frombuffer(self.raw(4 * count), dtype="<u4")
        return out.reshape(shape).copy()

    def bits(self, count: int) -> np.ndarray:
        """Uniform binary vector (uint32 entries in {0, 1})."""
        words = np.frombuffer(self.raw(count), dtype=np.uint8)
        return (words & 1).astype(np.uint32)

    def normal(self, count: int) -> np.ndarray:
        """Standard normal samples via Box-Muller."""
        pairs = (count + 1) // 2
        words = np.frombuffer(self.raw(16 * pairs), dtype="<u8").reshape(pairs, 2)
        # 53-bit mantissas; u1 shifted into (0, 1] so log() is finite.
        u1 = ((words[:, 0] >> np.uint64(11)) + np.uint64(1)) / float(1 << 53)
        u2 = (words[:, 1] >> np.uint64(11)) / float(1 << 53)
        radius = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        z = np.concatenate([radius * np.cos(theta), radius * np.sin(theta)])
        return z[:count]

    def normal_torus(self, std: float, shape) -> np.ndarray:
        """Gaussian torus noise with standard deviation std (as a fraction
        of the torus), rounded to the uint32 grid."""
        count = int(np.prod(shape, dtype=np.int64)) if not isinstance(shape, int) else shape
        z = np.rint(self.normal(count) * (std * _TWO32)).astype(np.int64)
        return z.astype(np.uint32).reshape(shape)
