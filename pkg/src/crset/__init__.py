"""Padded Bloom filter cascades for credential revocation that hide issuer activity."""

__version__ = "0.1.0"

from .bloom import BloomFilter, HashInput, bit_index, filter_size_for
from .cascade import (
    CascadeParams,
    FilterCascade,
    IdSets,
    build_cascade,
    estimate_size_bits,
    level_count_bound,
    pad_with_random_ids,
    padding_targets,
    random_id,
    test_id,
    test_ids,
)
from .codec import BlobBundle, deserialize, pack_blobs, serialize, unpack_blobs
from .errors import *  # noqa: F401,F403
from .registry import IssuerAccount, Registry, Status, StatusEntry

