"""Empirical privacy evaluation of published cascades.

Two harnesses:

* a regression attack that tries to predict valid/revoked counts from
  structural features of a serialized cascade (total size, level count, the
  bit lengths and popcounts of the first three levels), fitted with ridge
  regression on standard-scaled features and scored on a held-out 20%;
* a chosen-count indistinguishability game in which an adversary picks two
  plausible count histories, the challenger realises one of them as ID sets
  and publishes the matching cascades, and the adversary guesses which.

Both measure concrete adversaries only. A win rate near 1/2 for one
adversary says nothing about adversaries that were not tried.
"""

from __future__ import annotations

import csv
import random
from dataclasses import astuple, dataclass, fields
from typing import Callable, Protocol, Sequence, TextIO

import numpy as np

from .cascade import CascadeParams, IdSets, build_cascade, random_id
from .codec import iter_levels, serialize
from .errors import DegenerateDesign, ImplausibleSeries

__all__ = [
    "AttackReport",
    "CascadeFeatures",
    "CountSeries",
    "DatasetRow",
    "FeatureRegressionAdversary",
    "RandomGuessAdversary",
    "RidgeModel",
    "crset_create",
    "extract_features",
    "fit_ridge",
    "generate_dataset",
    "run_ccig",
    "synthesize_history",
    "write_dataset_csv",
]

_POPCOUNT = np.array([bin(i).count("1") for i in range(256)], dtype=np.int64)


@dataclass(frozen=True)
class CascadeFeatures:
    total_size: int
    filter_count: int
    size0: int
    size1: int
    size2: int
    setbits0: int
    setbits1: int
    setbits2: int

    @classmethod
    def names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def as_vector(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)


def extract_features(data: bytes) -> CascadeFeatures:
    it = iter_levels(bytes(data))
    _, _, count = next(it)
    sizes, setbits = [0, 0, 0], [0, 0, 0]
    for i, (m, body) in enumerate(it):
        if i < 3:
            sizes[i] = m
            setbits[i] = int(_POPCOUNT[np.frombuffer(body, dtype=np.uint8)].sum())
    return CascadeFeatures(len(data), count, *sizes, *setbits)


def crset_create(
    sets: IdSets, n: int, rng: random.Random, *, padded: bool = True, p: float = 0.5
) -> bytes:
    """The public output of one publication: the serialized cascade."""
    return serialize(build_cascade(sets, CascadeParams(n, p=p), rng, pad=padded))


def _fresh_ids(k: int, rng: random.Random) -> list[bytes]:
    out: dict[bytes, None] = {}  # insertion-ordered, so seeded runs repeat across processes
    while len(out) < k:
        out[random_id(rng)] = None
    return list(out)


# -- regression attack ----------------------------------------------------


@dataclass(frozen=True)
class DatasetRow:
    features: CascadeFeatures
    valid_count: int
    revoked_count: int


def generate_dataset(
    n_samples: int,
    n_max: int,
    padded: bool = True,
    count_range: tuple[int, int] | None = None,
    rng: random.Random | None = None,
    p: float = 0.5,
) -> list[DatasetRow]:
    """Build ``n_samples`` cascades with uniformly drawn counts and featurise them.

    Valid and revoked counts are drawn independently from ``count_range``
    (inclusive, default ``[0, n_max]``). Unpadded builds use the raw sets as
    working sets.
    """
    rng = rng or random.Random()
    lo, hi = count_range if count_range is not None else (0, n_max)
    if not 0 <= lo <= hi <= n_max:
        raise ValueError(f"count_range {lo, hi} must lie within [0, {n_max}]")
    rows = []
    for _ in range(n_samples):
        n_valid, n_revoked = rng.randint(lo, hi), rng.randint(lo, hi)
        ids = _fresh_ids(n_valid + n_revoked, rng)
        sets = IdSets(frozenset(ids[:n_valid]), frozenset(ids[n_valid:]))
        data = crset_create(sets, n_max, rng, padded=padded, p=p)
        rows.append(DatasetRow(extract_features(data), n_valid, n_revoked))
    return rows


def write_dataset_csv(rows: Sequence[DatasetRow], out: TextIO) -> None:
    writer = csv.writer(out)
    writer.writerow(CascadeFeatures.names() + ["valid_count", "revoked_count"])
    for row in rows:
        writer.writerow([*astuple(row.features), row.valid_count, row.revoked_count])


@dataclass(frozen=True)
class AttackReport:
    r2: float
    mse: float
    baseline_variance: float
    n_samples: int


@dataclass
class RidgeModel:
    """Linear model on standard-scaled features with an unpenalised intercept."""

    columns: np.ndarray
    mean: np.ndarray
    scale: np.ndarray
    coef: np.ndarray
    intercept: float

    @classmethod
    def fit(cls, X: np.ndarray, y: np.ndarray, l2: float = 1.0) -> RidgeModel:
        if l2 < 0:
            raise ValueError("l2 must be >= 0")
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        mean, scale = X.mean(axis=0), X.std(axis=0)
        columns = np.flatnonzero(scale > 1e-12 * np.maximum(1.0, np.abs(mean)))
        if columns.size == 0:
            raise DegenerateDesign("every feature column is constant")
        Z = (X[:, columns] - mean[columns]) / scale[columns]
        y_mean = y.mean()
        gram = Z.T @ Z + l2 * np.eye(columns.size)
        # lstsq tolerates a singular Gram matrix when l2 == 0
        coef = np.linalg.lstsq(gram, Z.T @ (y - y_mean), rcond=None)[0]
        return cls(columns, mean[columns], scale[columns], coef, float(y_mean))

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return (X[:, self.columns] - self.mean) / self.scale @ self.coef + self.intercept


def fit_ridge(
    features: np.ndarray | Sequence[CascadeFeatures],
    labels: Sequence[float],
    l2: float = 1.0,
    rng: random.Random | None = None,
    train_fraction: float = 0.8,
) -> tuple[AttackReport, RidgeModel]:
    """Fit on a random 80% split and score MSE and R^2 on the remaining 20%.

    Scaling statistics come from the training split only.
    """
    X = _as_matrix(features)
    y = np.asarray(labels, dtype=float)
    n = len(y)
    if n < 10 or X.shape[0] != n:
        raise ValueError("need at least 10 samples with one label each")
    rng = rng or random.Random()
    order = np.array(rng.sample(range(n), n))
    cut = int(round(train_fraction * n))
    train, test = order[:cut], order[cut:]
    model = RidgeModel.fit(X[train], y[train], l2)
    resid = model.predict(X[test]) - y[test]
    mse = float(np.mean(resid**2))
    variance = float(np.var(y[test]))
    r2 = 1.0 - mse / variance if variance > 0 else float("nan")
    return AttackReport(r2, mse, variance, n), model


def _as_matrix(features) -> np.ndarray:
    if len(features) and isinstance(features[0], CascadeFeatures):
        return np.vstack([f.as_vector() for f in features])
    return np.atleast_2d(np.asarray(features, dtype=float))


# -- chosen-count indistinguishability game --------------------------------


@dataclass(frozen=True)
class CountSeries:
    valid_counts: tuple[int, ...]
    revoked_counts: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "valid_counts", tuple(self.valid_counts))
        object.__setattr__(self, "revoked_counts", tuple(self.revoked_counts))

    def __len__(self) -> int:
        return len(self.valid_counts)

    def issued(self) -> list[int]:
        return [v + r for v, r in zip(self.valid_counts, self.revoked_counts)]

    def check(self, l: int, n: int) -> None:
        """Raise :class:`ImplausibleSeries` unless this is a valid history of length ``l``."""
        if len(self.valid_counts) != l or len(self.revoked_counts) != l:
            raise ImplausibleSeries(f"series must have exactly {l} steps")
        counts = self.valid_counts + self.revoked_counts
        if any(c < 0 or c >= n for c in counts):
            raise ImplausibleSeries(f"every count must lie in [0, {n})")
        issued = self.issued()
        if any(b < a for a, b in zip(issued, issued[1:])):
            raise ImplausibleSeries("issued total decreases: credentials never expire")
        revoked = self.revoked_counts
        if any(b < a for a, b in zip(revoked, revoked[1:])):
            raise ImplausibleSeries("revoked count decreases: revocation is permanent")


def synthesize_history(series: CountSeries, rng: random.Random) -> list[IdSets]:
    """Realise a count series as ID sets with a plausible life cycle.

    At each step the new credentials are issued first, then the required
    number of revocations is drawn uniformly from everything currently valid.
    """
    valid: set[bytes] = set()
    revoked: set[bytes] = set()
    history = []
    for n_valid, n_revoked in zip(series.valid_counts, series.revoked_counts):
        new = n_valid + n_revoked - len(valid) - len(revoked)
        valid.update(_fresh_ids(new, rng))
        to_revoke = rng.sample(sorted(valid), n_revoked - len(revoked))
        valid.difference_update(to_revoke)
        revoked.update(to_revoke)
        history.append(IdSets(frozenset(valid), frozenset(revoked)))
    return history


def check_history(history: Sequence[IdSets]) -> None:
    for prev, cur in zip(history, history[1:]):
        if not prev.revoked <= cur.revoked:
            raise RuntimeError("a revoked id became valid again")
        if not prev.valid | prev.revoked <= cur.valid | cur.revoked:
            raise RuntimeError("an issued id disappeared")


CreateFn = Callable[[IdSets, int, random.Random], bytes]


class Adversary(Protocol):
    def choose(self, create: CreateFn, l: int, n: int, rng: random.Random) -> tuple[CountSeries, CountSeries]: ...

    def guess(self, outputs: Sequence[bytes]) -> int: ...


class RandomGuessAdversary:
    def __init__(self, rng: random.Random | None = None) -> None:
        self.rng = rng or random.Random()

    def choose(self, create, l, n, rng):
        low = CountSeries([1] * l, [0] * l)
        high = CountSeries([n - 1] * l, [0] * l)
        return low, high

    def guess(self, outputs):
        return self.rng.getrandbits(1)


def separated_series(l: int, n: int) -> tuple[CountSeries, CountSeries]:
    """Two slowly growing histories, one small issuer and one large."""
    lo_valid = [min(100 + 25 * i, n - 1) for i in range(l)]
    hi_valid = [min(3000 * n // 4096 + 50 * i, n - 1) for i in range(l)]
    lo_rev = [min(5 * i, n - 1) for i in range(l)]
    hi_rev = [min(40 * i, n - 1) for i in range(l)]
    return CountSeries(lo_valid, lo_rev), CountSeries(hi_valid, hi_rev)


class FeatureRegressionAdversary:
    """Learns counts from features, then picks the series closer to its predictions.

    Training data comes from calling ``create`` itself on random counts, the
    one capability the game grants every adversary.
    """

    def __init__(self, training_samples: int = 200, l2: float = 1.0, series=None) -> None:
        self.training_samples = training_samples
        self.l2 = l2
        self.series = series
        self._models: tuple[RidgeModel, RidgeModel] | None = None
        self._choice: tuple[CountSeries, CountSeries] | None = None

    def choose(self, create, l, n, rng):
        self._choice = self.series or separated_series(l, n)
        X, yv, yr = [], [], []
        for _ in range(self.training_samples):
            n_valid = rng.randrange(n)
            n_revoked = rng.randrange(n - n_valid)
            ids = _fresh_ids(n_valid + n_revoked, rng)
            sets = IdSets(frozenset(ids[:n_valid]), frozenset(ids[n_valid:]))
            X.append(extract_features(create(sets, n, rng)).as_vector())
            yv.append(n_valid)
            yr.append(n_revoked)
        X = np.vstack(X)
        self._models = (RidgeModel.fit(X, yv, self.l2), RidgeModel.fit(X, yr, self.l2))
        return self._choice

    def guess(self, outputs):
        X = np.vstack([extract_features(s).as_vector() for s in outputs])
        pv, pr = (m.predict(X) for m in self._models)
        errors = []
        for series in self._choice:
            errors.append(
                np.sum((pv - series.valid_counts) ** 2) + np.sum((pr - series.revoked_counts) ** 2)
            )
        return int(errors[1] < errors[0])


def run_ccig(
    adversary: Adversary,
    l: int,
    n: int,
    trials: int,
    rng: random.Random | None = None,
    *,
    padded: bool = True,
) -> float:
    """Play ``trials`` rounds of the game and return the adversary's win rate."""
    if trials < 1 or l < 1 or n < 1:
        raise ValueError("trials, l and n must be >= 1")
    rng = rng or random.Random()

    def create(sets: IdSets, cap: int, r: random.Random) -> bytes:
        return crset_create(sets, cap, r, padded=padded)

    s0, s1 = adversary.choose(create, l, n, rng)
    for s in (s0, s1):
        s.check(l, n)
    if s0 == s1:
        raise ImplausibleSeries("the two series must differ")
    wins = 0
    for _ in range(trials):
        b = rng.getrandbits(1)
        history = synthesize_history((s0, s1)[b], rng)
        check_history(history)
        outputs = [create(sets, n, rng) for sets in history]
        wins += adversary.guess(outputs) == b
    return wins / trials
