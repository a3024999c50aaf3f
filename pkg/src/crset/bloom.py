"""Single-hash Bloom filter with salted, level-indexed SHA-256 hashing.

Every element is hashed as the 66-byte string::

    id (32 bytes) || level (2 bytes, big-endian) || salt (32 bytes)

and the bit position is the first 8 digest bytes, read big-endian, modulo the
filter length. The level index varies the hash between cascade levels; the
salt is drawn once per cascade.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "ID_BYTES",
    "SALT_BYTES",
    "BloomFilter",
    "HashInput",
    "bit_index",
    "bit_indices",
    "filter_size_for",
]

ID_BYTES = 32
SALT_BYTES = 32
MAX_LEVEL = 0xFFFF

_sha256 = hashlib.sha256


@dataclass(frozen=True)
class HashInput:
    id: bytes
    level: int
    salt: bytes

    def __post_init__(self) -> None:
        if len(self.id) != ID_BYTES:
            raise ValueError(f"id must be {ID_BYTES} bytes, got {len(self.id)}")
        if len(self.salt) != SALT_BYTES:
            raise ValueError(f"salt must be {SALT_BYTES} bytes, got {len(self.salt)}")
        if not 0 <= self.level <= MAX_LEVEL:
            raise ValueError(f"level out of range: {self.level}")

    def encode(self) -> bytes:
        return self.id + _suffix(self.level, self.salt)


def _suffix(level: int, salt: bytes) -> bytes:
    return level.to_bytes(2, "big") + salt


def filter_size_for(n_entries: int, p_target: float) -> int:
    """Smallest bit length whose single-hash false-positive rate is <= p_target.

    With one hash function and ``n`` inserted elements the expected rate is
    ``1 - exp(-n/m)``, so ``m = ceil(-n / ln(1 - p))``.
    """
    if isinstance(n_entries, bool) or not isinstance(n_entries, int) or n_entries < 1:
        raise ValueError(f"n_entries must be a positive integer, got {n_entries!r}")
    p = float(p_target)
    if not math.isfinite(p) or not 0.0 < p < 1.0:
        raise ValueError(f"p_target must be in (0, 1), got {p_target!r}")
    exact = -n_entries / math.log1p(-p)
    # absorb float noise so that exact integer solutions are not bumped up
    return max(1, math.ceil(exact * (1.0 - 1e-12)))


def bit_index(item: HashInput, m: int) -> int:
    if m < 1:
        raise ValueError("m must be >= 1")
    digest = _sha256(item.encode()).digest()
    return int.from_bytes(digest[:8], "big") % m


def bit_indices(ids: Sequence[bytes], level: int, salt: bytes, m: int) -> np.ndarray:
    """Vectorised :func:`bit_index` over many ids sharing one level and salt."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if not ids:
        return np.empty(0, dtype=np.int64)
    suffix = _suffix(level, salt)
    digests = b"".join([_sha256(i + suffix).digest() for i in ids])
    prefixes = np.frombuffer(digests, dtype=">u8")[::4]
    return (prefixes % np.uint64(m)).astype(np.int64)


@dataclass(eq=False)
class BloomFilter:
    """Bit array of length ``m`` probed by one hash.

    ``bits`` is a boolean numpy array; bit ``i`` lives in byte ``i // 8`` at
    position ``7 - i % 8`` once packed.
    """

    bits: np.ndarray

    def __post_init__(self) -> None:
        self.bits = np.asarray(self.bits, dtype=bool)
        if self.bits.ndim != 1 or self.bits.size < 1:
            raise ValueError("a Bloom filter needs at least one bit")

    @classmethod
    def empty(cls, m: int) -> BloomFilter:
        if m < 1:
            raise ValueError("m must be >= 1")
        return cls(np.zeros(m, dtype=bool))

    @classmethod
    def from_bytes(cls, data: bytes, m: int) -> BloomFilter:
        raw = np.frombuffer(data, dtype=np.uint8)
        return cls(np.unpackbits(raw, count=m, bitorder="big").astype(bool))

    @property
    def m(self) -> int:
        return int(self.bits.size)

    def to_bytes(self) -> bytes:
        return np.packbits(self.bits, bitorder="big").tobytes()

    def popcount(self) -> int:
        return int(np.count_nonzero(self.bits))

    def insert(self, item: HashInput) -> BloomFilter:
        self.bits[bit_index(item, self.m)] = True
        return self

    def contains(self, item: HashInput) -> bool:
        return bool(self.bits[bit_index(item, self.m)])

    def insert_many(self, ids: Sequence[bytes], level: int, salt: bytes) -> BloomFilter:
        self.bits[bit_indices(ids, level, salt, self.m)] = True
        return self

    def contains_many(self, ids: Sequence[bytes], level: int, salt: bytes) -> np.ndarray:
        return self.bits[bit_indices(ids, level, salt, self.m)]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BloomFilter):
            return NotImplemented
        return self.m == other.m and bool(np.array_equal(self.bits, other.bits))

    def __repr__(self) -> str:
        return f"BloomFilter(m={self.m}, set={self.popcount()})"


def build_filter(ids: Iterable[bytes], level: int, salt: bytes, m: int) -> BloomFilter:
    return BloomFilter.empty(m).insert_many(list(ids), level, salt)
