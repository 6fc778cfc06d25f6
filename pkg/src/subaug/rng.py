"""Counter-based, splittable random streams.

Every random draw in the package comes from a :class:`Stream`. A stream is
identified by a *domain* tag and a tuple of non-negative integers (the
path), e.g. ``Stream.root(seed, "mask").child(epoch, batch, sub, view)``.
Nothing is stateful: the same (domain, path) always yields the same numbers,
so draws can be computed out of order or in parallel.

Key-to-stream mapping
---------------------

1. The path components are packed as little-endian unsigned 64-bit
   integers and hashed with BLAKE2b (``digest_size=8``, ``person`` = the
   domain tag encoded as ASCII, padded with NUL bytes to 16 bytes by
   hashlib). The 8-byte digest, read little-endian, gives a 64-bit key;
   its low 32 bits are key word 0 and its high 32 bits key word 1.
2. Block ``i`` of the stream is Philox4x32-10 applied to the counter
   ``(i & 0xFFFFFFFF, i >> 32, 0, 0)`` under that key. Each block yields
   four 32-bit words; the stream's word sequence is the concatenation of
   the blocks' words in order.
3. ``uniform(n)`` maps the first ``n`` words ``w`` to ``(w + 0.5) / 2**32``,
   which lies strictly inside (0, 1).

Mask draws use domain ``"mask"`` and path
``(master_seed, epoch, batch_index, subgraph_index, view_index)``.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

PHILOX_M0 = np.uint64(0xD2511F53)
PHILOX_M1 = np.uint64(0xCD9E8D57)
PHILOX_W0 = 0x9E3779B9
PHILOX_W1 = 0xBB67AE85
MASK32 = np.uint64(0xFFFFFFFF)

_U64_MAX = (1 << 64) - 1


def philox4x32(counters: np.ndarray, key: tuple[int, int], rounds: int = 10) -> np.ndarray:
    """Vectorized Philox4x32 over an ``(n, 4)`` array of counter words."""
    ctr = np.asarray(counters, dtype=np.uint64) & MASK32
    c0, c1, c2, c3 = (ctr[:, i].copy() for i in range(4))
    k0, k1 = key[0] & 0xFFFFFFFF, key[1] & 0xFFFFFFFF
    for _ in range(rounds):
        p0 = c0 * PHILOX_M0
        p1 = c2 * PHILOX_M1
        hi0, lo0 = p0 >> np.uint64(32), p0 & MASK32
        hi1, lo1 = p1 >> np.uint64(32), p1 & MASK32
        c0, c1, c2, c3 = (
            hi1 ^ c1 ^ np.uint64(k0),
            lo1,
            hi0 ^ c3 ^ np.uint64(k1),
            lo0,
        )
        k0 = (k0 + PHILOX_W0) & 0xFFFFFFFF
        k1 = (k1 + PHILOX_W1) & 0xFFFFFFFF
    return np.stack([c0, c1, c2, c3], axis=1).astype(np.uint32)


def derive_key(domain: str, path: tuple[int, ...]) -> tuple[int, int]:
    for part in path:
        if not 0 <= part <= _U64_MAX:
            raise ValueError(f"stream path component out of range: {part}")
    data = struct.pack(f"<{len(path)}Q", *path)
    digest = hashlib.blake2b(data, digest_size=8, person=domain.encode("ascii")).digest()
    k = int.from_bytes(digest, "little")
    return k & 0xFFFFFFFF, k >> 32


@dataclass(frozen=True)
class Stream:
    domain: str
    path: tuple[int, ...]

    @classmethod
    def root(cls, seed: int, domain: str) -> "Stream":
        return cls(domain, (int(seed),))

    def child(self, *parts: int) -> "Stream":
        return Stream(self.domain, self.path + tuple(int(p) for p in parts))

    @property
    def key(self) -> tuple[int, int]:
        return derive_key(self.domain, self.path)

    def words(self, n: int) -> np.ndarray:
        """First ``n`` 32-bit words of the stream."""
        if n <= 0:
            return np.zeros(0, dtype=np.uint32)
        nblocks = (n + 3) // 4
        idx = np.arange(nblocks, dtype=np.uint64)
        ctr = np.zeros((nblocks, 4), dtype=np.uint64)
        ctr[:, 0] = idx & MASK32
        ctr[:, 1] = idx >> np.uint64(32)
        return philox4x32(ctr, self.key).reshape(-1)[:n]

    def uniform(self, n: int) -> np.ndarray:
        return (self.words(n).astype(np.float64) + 0.5) / 4294967296.0

    def normal(self, n: int) -> np.ndarray:
        """Standard normals via Box-Muller on consecutive uniform pairs."""
        m = (n + 1) // 2
        u = self.uniform(2 * m)
        r = np.sqrt(-2.0 * np.log(u[0::2]))
        theta = 2.0 * np.pi * u[1::2]
        return np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]

    def permutation(self, n: int) -> np.ndarray:
        return np.argsort(self.uniform(n), kind="stable")

    def integers(self, n: int, high: int) -> np.ndarray:
        """``n`` integers in ``[0, high)`` (floor of scaled uniforms)."""
        return np.minimum((self.uniform(n) * high).astype(np.int64), high - 1)
