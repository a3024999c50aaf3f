"""Padded Bloom filter cascade: construction, membership test, size math.

Level 0 encodes the padded valid set. Each later level encodes the false
positives that the previous level produced over the opposite working set,
with the roles of the two sets swapping every level, until no false
positives remain. Lookup walks the levels and stops at the first one that
does not contain the id; an id missing first at an odd level is valid.
"""

from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass, field
from typing import AbstractSet, Iterable

from .bloom import ID_BYTES, SALT_BYTES, BloomFilter, HashInput, filter_size_for
from .errors import BuildDiverged, CapacityExceeded

__all__ = [
    "BITS_PER_CAPACITY",
    "CascadeParams",
    "FilterCascade",
    "IdSets",
    "build_cascade",
    "estimate_size_bits",
    "level_count_bound",
    "pad_with_random_ids",
    "padding_targets",
    "random_id",
    "test_id",
]

log = logging.getLogger(__name__)

BITS_PER_CAPACITY = 5.64
DEFAULT_P = 0.5
EMPIRICAL_P = 0.53
MIN_FILTER_ENTRIES = 1024
MAX_RESTARTS = 8


def random_id(rng: random.Random) -> bytes:
    return rng.getrandbits(8 * ID_BYTES).to_bytes(ID_BYTES, "big")


def default_rng() -> random.Random:
    return random.SystemRandom()


def level_count_bound(n_max: int) -> int:
    """Default ``max_levels`` guard; deliberately loose."""
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    return max(16, 4 * math.ceil(math.log2(max(n_max, 2))))


def estimate_size_bits(n_max: int) -> float:
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    return BITS_PER_CAPACITY * n_max


def padding_targets(n_max: int) -> tuple[int, int]:
    """Padded sizes of the (valid, revoked) sets: ``n_max`` and ``2 * n_max``."""
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    return n_max, 2 * n_max


@dataclass(frozen=True)
class CascadeParams:
    n_max: int
    p: float = DEFAULT_P
    p0: float | None = None
    min_filter_entries: int = MIN_FILTER_ENTRIES
    max_levels: int | None = None
    max_restarts: int = MAX_RESTARTS

    def __post_init__(self) -> None:
        if self.n_max < 1:
            raise ValueError("n_max must be >= 1")
        if not 0.0 < self.p < 1.0:
            raise ValueError("p must be in (0, 1)")
        if self.p0 is None:
            object.__setattr__(self, "p0", math.sqrt(self.p) / 2)
        elif not 0.0 < self.p0 < 1.0:
            raise ValueError("p0 must be in (0, 1)")
        if self.max_levels is None:
            object.__setattr__(self, "max_levels", level_count_bound(self.n_max))
        if self.min_filter_entries < 1:
            raise ValueError("min_filter_entries must be >= 1")
        if self.max_levels < 2:
            raise ValueError("max_levels must be >= 2")
        if self.max_restarts < 1:
            raise ValueError("max_restarts must be >= 1")

    def level_fpr(self, level: int) -> float:
        return self.p0 if level == 0 else self.p

    def level_bits(self, level: int, n_entries: int) -> int:
        return filter_size_for(max(n_entries, self.min_filter_entries), self.level_fpr(level))


@dataclass(frozen=True)
class IdSets:
    valid: frozenset[bytes] = frozenset()
    revoked: frozenset[bytes] = frozenset()

    def __post_init__(self) -> None:
        object.__setattr__(self, "valid", frozenset(self.valid))
        object.__setattr__(self, "revoked", frozenset(self.revoked))
        if self.valid & self.revoked:
            raise ValueError("valid and revoked sets must be disjoint")


@dataclass(eq=False)
class FilterCascade:
    levels: list[BloomFilter]
    salt: bytes
    n_max: int
    restarts: int = field(default=0, compare=False)

    def __post_init__(self) -> None:
        if len(self.salt) != SALT_BYTES:
            raise ValueError(f"salt must be {SALT_BYTES} bytes")

    def __len__(self) -> int:
        return len(self.levels)

    def __contains__(self, rid: bytes) -> bool:
        return test_id(self, rid)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FilterCascade):
            return NotImplemented
        return (
            self.salt == other.salt
            and self.n_max == other.n_max
            and self.levels == other.levels
        )

    @property
    def size_bits(self) -> int:
        return sum(f.m for f in self.levels)


def pad_with_random_ids(
    ids: AbstractSet[bytes],
    target: int,
    exclusions: AbstractSet[bytes] = frozenset(),
    rng: random.Random | None = None,
) -> set[bytes]:
    """Return a superset of ``ids`` of exactly ``target`` elements.

    Added ids are uniform 256-bit values distinct from ``ids`` and from
    ``exclusions``.
    """
    if len(ids) > target:
        raise CapacityExceeded(f"{len(ids)} ids exceed padded size {target}")
    rng = rng or default_rng()
    out = set(ids)
    while len(out) < target:
        candidate = random_id(rng)
        if candidate not in exclusions:
            out.add(candidate)
    return out


def _try_build(
    included: list[bytes], excluded: list[bytes], salt: bytes, params: CascadeParams
) -> list[BloomFilter] | None:
    levels: list[BloomFilter] = []
    level = 0
    while included:
        if level >= params.max_levels:
            return None
        bf = BloomFilter.empty(params.level_bits(level, len(included)))
        bf.insert_many(included, level, salt)
        hits = bf.contains_many(excluded, level, salt)
        false_positives = [rid for rid, hit in zip(excluded, hits) if hit]
        levels.append(bf)
        included, excluded = false_positives, included
        level += 1
    return levels


def build_cascade(
    sets: IdSets,
    params: CascadeParams,
    rng: random.Random | None = None,
    *,
    pad: bool = True,
) -> FilterCascade:
    """Build a padded cascade answering exactly on ``sets.valid | sets.revoked``.

    With ``pad=False`` the working sets are the raw inputs; this exists only
    to measure what padding hides and must not be used for publication.
    """
    rng = rng or default_rng()
    v_target, r_target = padding_targets(params.n_max)
    if len(sets.valid) > v_target:
        raise CapacityExceeded(f"|V| = {len(sets.valid)} exceeds n_max = {v_target}")
    if len(sets.revoked) > r_target:
        raise CapacityExceeded(f"|R| = {len(sets.revoked)} exceeds 2*n_max = {r_target}")

    salt = rng.getrandbits(8 * SALT_BYTES).to_bytes(SALT_BYTES, "big")
    if pad:
        known = sets.valid | sets.revoked
        included = pad_with_random_ids(sets.valid, v_target, known, rng)
        excluded = pad_with_random_ids(sets.revoked, r_target, known | included, rng)
    else:
        included, excluded = set(sets.valid), set(sets.revoked)
    # sorted so that the build is reproducible regardless of set iteration order
    inc, exc = sorted(included), sorted(excluded)

    for attempt in range(params.max_restarts + 1):
        if attempt:
            salt = rng.getrandbits(8 * SALT_BYTES).to_bytes(SALT_BYTES, "big")
            log.info("cascade did not converge, restarting with new salt (%d)", attempt)
        levels = _try_build(inc, exc, salt, params)
        if levels is not None:
            return FilterCascade(levels, salt, params.n_max, restarts=attempt)
    raise BuildDiverged(
        f"no convergence within {params.max_levels} levels after {params.max_restarts} restarts"
    )


def test_id(cascade: FilterCascade, rid: bytes) -> bool:
    """True if ``rid`` is valid (unrevoked).

    Only meaningful for ids the issuer actually minted; anything else gets an
    arbitrary answer.
    """
    for level, bf in enumerate(cascade.levels):
        if not bf.contains(HashInput(rid, level, cascade.salt)):
            return level % 2 == 1
    return len(cascade.levels) % 2 == 1


test_id.__test__ = False  # keep pytest from collecting the name


def test_ids(cascade: FilterCascade, rids: Iterable[bytes]) -> list[bool]:
    """Batch form of :func:`test_id`."""
    rids = list(rids)
    answer = [len(cascade.levels) % 2 == 1] * len(rids)
    pending = list(range(len(rids)))
    for level, bf in enumerate(cascade.levels):
        if not pending:
            break
        hits = bf.contains_many([rids[i] for i in pending], level, cascade.salt)
        still = []
        for i, hit in zip(pending, hits):
            if hit:
                still.append(i)
            else:
                answer[i] = level % 2 == 1
        pending = still
    return answer


test_ids.__test__ = False

