"""Wire format for filter cascades and fixed-size blob packing.

Cascade layout, all integers big-endian::

    b"CRST" | version u8 (=1) | salt 32B | n_max u64 | level_count u16
    then per level: bit_length u64 | ceil(bit_length / 8) bytes

Bits are packed MSB-first; unused low bits of a level's last byte are zero.

Blob bundles frame the payload with a u64 length prefix, zero-pad it to a
multiple of ``blob_size`` and cut it into equal blobs.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .bloom import BloomFilter
from .cascade import FilterCascade
from .errors import CorruptPayload, FormatOverflow, UnsupportedFormat

__all__ = [
    "DEFAULT_BLOB_SIZE",
    "MAGIC",
    "VERSION",
    "BlobBundle",
    "deserialize",
    "pack_blobs",
    "serialize",
    "unpack_blobs",
]

MAGIC = b"CRST"
VERSION = 1
DEFAULT_BLOB_SIZE = 131072
MIN_BLOB_SIZE = 64

_HEADER = struct.Struct(">4sB32sQH")
_LEVEL = struct.Struct(">Q")
_LENGTH = struct.Struct(">Q")

HEADER_SIZE = _HEADER.size


def serialize(cascade: FilterCascade) -> bytes:
    if len(cascade.levels) > 0xFFFF:
        raise FormatOverflow(f"{len(cascade.levels)} levels exceed the u16 level count")
    if not 0 <= cascade.n_max < 1 << 64:
        raise FormatOverflow("n_max does not fit in u64")
    parts = [_HEADER.pack(MAGIC, VERSION, cascade.salt, cascade.n_max, len(cascade.levels))]
    for bf in cascade.levels:
        parts.append(_LEVEL.pack(bf.m))
        parts.append(bf.to_bytes())
    return b"".join(parts)


def iter_levels(data: bytes):
    """Yield ``(salt, n_max, level_count)``, then ``(bit_length, body)`` per level."""
    if data[:4] != MAGIC[: len(data)]:
        raise UnsupportedFormat(f"bad magic {bytes(data[:4])!r}")
    if len(data) > 4 and data[4] != VERSION:
        raise UnsupportedFormat(f"unsupported version {data[4]}")
    if len(data) < HEADER_SIZE:
        raise CorruptPayload("truncated header")
    _, _, salt, n_max, count = _HEADER.unpack_from(data)
    yield salt, n_max, count
    view = memoryview(data)
    offset = HEADER_SIZE
    for _ in range(count):
        if offset + _LEVEL.size > len(data):
            raise CorruptPayload("truncated level header")
        (m,) = _LEVEL.unpack_from(data, offset)
        offset += _LEVEL.size
        if m < 1:
            raise CorruptPayload("zero-length level")
        nbytes = (m + 7) // 8
        if offset + nbytes > len(data):
            raise CorruptPayload("truncated level body")
        body = view[offset : offset + nbytes]
        if m % 8 and body[-1] & (0xFF >> (m % 8)):
            raise CorruptPayload("non-zero padding bits in level")
        offset += nbytes
        yield m, body
    if offset != len(data):
        raise CorruptPayload(f"{len(data) - offset} trailing bytes")


def deserialize(data: bytes) -> FilterCascade:
    it = iter_levels(bytes(data))
    salt, n_max, _ = next(it)
    levels = [BloomFilter.from_bytes(body, m) for m, body in it]
    if n_max < 1:
        raise CorruptPayload("n_max must be >= 1")
    return FilterCascade(levels, salt, n_max)


@dataclass(frozen=True)
class BlobBundle:
    blobs: tuple[bytes, ...]
    blob_size: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "blobs", tuple(bytes(b) for b in self.blobs))

    def __len__(self) -> int:
        return len(self.blobs)

    def concat(self) -> bytes:
        return b"".join(self.blobs)


def pack_blobs(data: bytes, blob_size: int = DEFAULT_BLOB_SIZE) -> BlobBundle:
    if blob_size < MIN_BLOB_SIZE:
        raise ValueError(f"blob_size must be >= {MIN_BLOB_SIZE}")
    framed = _LENGTH.pack(len(data)) + bytes(data)
    n_blobs = -(-len(framed) // blob_size)
    framed += bytes(n_blobs * blob_size - len(framed))
    return BlobBundle(
        tuple(framed[i : i + blob_size] for i in range(0, len(framed), blob_size)),
        blob_size,
    )


def unpack_blobs(bundle: BlobBundle) -> bytes:
    if not bundle.blobs:
        raise CorruptPayload("empty blob bundle")
    if bundle.blob_size < MIN_BLOB_SIZE:
        raise CorruptPayload(f"blob_size {bundle.blob_size} below minimum")
    for i, blob in enumerate(bundle.blobs):
        if len(blob) != bundle.blob_size:
            raise CorruptPayload(f"blob {i} has {len(blob)} bytes, expected {bundle.blob_size}")
    raw = bundle.concat()
    (length,) = _LENGTH.unpack_from(raw)
    end = _LENGTH.size + length
    if end > len(raw):
        raise CorruptPayload("length prefix exceeds bundle content")
    if len(raw) - end >= bundle.blob_size:
        raise CorruptPayload("bundle carries a surplus blob")
    if np.any(np.frombuffer(raw, dtype=np.uint8, offset=end)):
        raise CorruptPayload("non-zero padding bytes")
    return raw[_LENGTH.size : end]


def serialized_size(cascade: FilterCascade) -> int:
    return HEADER_SIZE + sum(_LEVEL.size + (bf.m + 7) // 8 for bf in cascade.levels)

