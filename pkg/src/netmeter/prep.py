"""Feature assembly, stratified 2:1 split, min-max scaling, ADASYN balancing."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .attacks import AttackTrace
from .core_types import (
    CMAX,
    DAY,
    IRRADIANCE,
    N_FEATURES,
    READINGS,
    SEASON,
    SYNTHETIC,
    TEMPERATURE,
    ADASYN,
    CustomerProfile,
    DaySeries,
    Label,
    Provenance,
    SampleSet,
    WeatherDay,
    encode_day_season,
    profile_index,
)
from .rng import substream


class PrepError(ValueError):
    pass


def assemble_samples(
    items: Sequence[DaySeries | AttackTrace],
    weather: Iterable[WeatherDay] | Mapping[tuple, WeatherDay],
    profiles: Iterable[CustomerProfile] | Mapping[str, CustomerProfile],
    benign_provenance: Provenance = SYNTHETIC,
) -> SampleSet:
    """One 75-value sample per item; attack traces are labelled malicious."""
    wx = weather if isinstance(weather, Mapping) else {w.key: w for w in weather}
    index = profile_index(profiles)
    X = np.empty((len(items), N_FEATURES))
    y = np.empty(len(items), dtype=np.int64)
    prov = np.empty(len(items), dtype=object)
    missing = []
    for i, item in enumerate(items):
        if isinstance(item, AttackTrace):
            day, label, p = item.reported, Label.MALICIOUS, Provenance.attack(item.attack_id)
        else:
            day, label, p = item, Label.BENIGN, benign_provenance
        profile = index[day.customer_id]
        w = wx.get((profile.location_id, day.date))
        if w is None:
            missing.append(f"{profile.location_id}@{day.date.isoformat()}")
            continue
        X[i, READINGS] = day.readings
        X[i, IRRADIANCE] = w.irradiance
        X[i, TEMPERATURE] = w.temperature
        X[i, CMAX] = profile.c_max
        X[i, DAY], X[i, SEASON] = encode_day_season(day.date)
        y[i] = label
        prov[i] = str(p)
    if missing:
        shown = sorted(set(missing))
        raise PrepError(f"no weather for {len(shown)} (location, date) keys: {', '.join(shown[:20])}")
    return SampleSet(X, y, prov)


@dataclass(frozen=True)
class SplitConfig:
    train_fraction: float = 2 / 3
    stratify_by_label: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must be in (0, 1)")


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def split(samples: SampleSet, config: SplitConfig = SplitConfig()) -> tuple[SampleSet, SampleSet]:
    """Random partition with round(f * n) training samples per label stratum.

    Both parts keep the input order.
    """
    rng = substream(config.seed, "split")
    strata = [np.flatnonzero(samples.y == lab) for lab in np.unique(samples.y)]
    if not config.stratify_by_label:
        strata = [np.arange(len(samples))]
    train_idx = []
    for idx in strata:
        if idx.size < 3:
            raise PrepError(f"stratum with {idx.size} samples is too small to split (need >= 3)")
        n_train = _round_half_up(config.train_fraction * idx.size)
        train_idx.append(rng.permutation(idx)[:n_train])
    mask = np.zeros(len(samples), dtype=bool)
    mask[np.concatenate(train_idx)] = True
    return samples.subset(np.flatnonzero(mask)), samples.subset(np.flatnonzero(~mask))


@dataclass(frozen=True, eq=False)
class Normalizer:
    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self):
        if self.mins.shape != (N_FEATURES,) or self.maxs.shape != (N_FEATURES,):
            raise ValueError("a normalizer holds 75 (min, max) pairs")
        if (self.mins > self.maxs).any():
            raise ValueError("min > max for some feature")

    @classmethod
    def fit(cls, X) -> "Normalizer":
        X = np.asarray(X, dtype=np.float64)
        if len(X) == 0:
            raise PrepError("cannot fit a normalizer on an empty set")
        return cls(X.min(axis=0), X.max(axis=0))

    @property
    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.mins, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.maxs, dtype="<f8").tobytes())
        return h.hexdigest()[:16]

    def transform_array(self, X) -> np.ndarray:
        span = self.maxs - self.mins
        safe = np.where(span > 0, span, 1.0)
        out = (np.asarray(X, dtype=np.float64) - self.mins) / safe
        out[:, span == 0] = 0.0
        return out

    def transform(self, samples: SampleSet) -> SampleSet:
        if samples.norm_fingerprint is not None:
            raise PrepError("samples are already normalized")
        return SampleSet(self.transform_array(samples.X), samples.y, samples.provenance, self.fingerprint)

    def to_dict(self) -> dict:
        return {
            "fingerprint": self.fingerprint,
            "pairs": [[float(a), float(b)] for a, b in zip(self.mins, self.maxs)],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Normalizer":
        pairs = np.asarray(d["pairs"], dtype=np.float64)
        norm = cls(pairs[:, 0].copy(), pairs[:, 1].copy())
        if "fingerprint" in d and d["fingerprint"] != norm.fingerprint:
            raise ValueError("normalizer fingerprint does not match its parameters")
        return norm

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "Normalizer":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def fit_transform_normalize(train: SampleSet, test: SampleSet) -> tuple[SampleSet, SampleSet, Normalizer]:
    """Scale both sets with min/max taken from ``train`` only; test values are not clipped."""
    norm = Normalizer.fit(train.X)
    return norm.transform(train), norm.transform(test), norm


@dataclass(frozen=True)
class AdasynConfig:
    k_neighbors: int = 5
    target_ratio: float = 1.0
    seed: int = 0
    snap_columns: tuple[int, ...] = (DAY, SEASON)

    def __post_init__(self):
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be >= 1")
        if not 0 < self.target_ratio <= 1:
            raise ValueError("target_ratio must be in (0, 1]")


def knn_indices(queries: np.ndarray, points: np.ndarray, k: int, exclude=None, chunk: int = 1024) -> np.ndarray:
    """Indices of the k nearest ``points`` (Euclidean) for each query row.

    ``exclude[i]`` is an index into ``points`` never returned for query i
    (used to drop the query itself).  Neighbours are ordered by distance,
    ties by index.
    """
    pn = np.einsum("ij,ij->i", points, points)
    out = np.empty((len(queries), k), dtype=np.int64)
    for lo in range(0, len(queries), chunk):
        q = queries[lo : lo + chunk]
        d2 = pn[None, :] - 2.0 * (q @ points.T) + np.einsum("ij,ij->i", q, q)[:, None]
        if exclude is not None:
            d2[np.arange(len(q)), exclude[lo : lo + chunk]] = np.inf
        part = np.argpartition(d2, k - 1, axis=1)[:, :k] if k < d2.shape[1] else np.tile(np.arange(d2.shape[1]), (len(q), 1))
        dist = np.take_along_axis(d2, part, axis=1)
        order = np.lexsort((part, dist), axis=1)
        out[lo : lo + chunk] = np.take_along_axis(part, order, axis=1)
    return out


@dataclass
class AdasynDetail:
    """Everything needed to audit the synthetic samples."""

    minority_label: int
    base: np.ndarray  # index into train of x_i for each synthetic sample
    partner: np.ndarray  # index into train of x_z
    lam: np.ndarray
    raw: np.ndarray  # synthetic features before day/season snapping
    allocation: np.ndarray  # g_i per minority point (aligned with minority_idx)
    minority_idx: np.ndarray
    weights: np.ndarray  # majority fraction r_i per minority point


def _largest_remainder(total: int, weights: np.ndarray) -> np.ndarray:
    share = total * weights / weights.sum()
    alloc = np.floor(share).astype(np.int64)
    short = total - int(alloc.sum())
    if short > 0:
        rem = share - alloc
        order = np.lexsort((np.arange(len(rem)), -rem))
        alloc[order[:short]] += 1
    return alloc


def adasyn_detail(train: SampleSet, config: AdasynConfig = AdasynConfig()) -> AdasynDetail:
    labels, counts = np.unique(train.y, return_counts=True)
    if labels.size != 2:
        raise PrepError(f"ADASYN needs exactly two classes, got {labels.size}")
    minority = int(labels[np.argmin(counts)])
    min_idx = np.flatnonzero(train.y == minority)
    n_min, n_maj = int(counts.min()), int(counts.max())
    k = config.k_neighbors
    if n_min <= k:
        raise PrepError(f"minority class has {n_min} samples; needs more than k={k}")
    G = _round_half_up((n_maj - n_min) * config.target_ratio)

    nbrs = knn_indices(train.X[min_idx], train.X, k, exclude=min_idx)
    is_min = train.y[nbrs] == minority
    weights = 1.0 - is_min.mean(axis=1)
    eligible = weights * is_min.any(axis=1)
    if G > 0 and not eligible.sum() > 0:
        raise PrepError("no minority point has both majority and minority neighbours; cannot allocate")
    alloc = _largest_remainder(G, eligible) if G > 0 else np.zeros(n_min, dtype=np.int64)

    rng = substream(config.seed, "adasyn")
    owner = np.repeat(np.arange(n_min), alloc)
    n_min_nbrs = is_min.sum(axis=1)
    pick = rng.integers(0, n_min_nbrs[owner]) if owner.size else np.empty(0, dtype=np.int64)
    lam = rng.uniform(0.0, 1.0, owner.size)
    # column j of the sorted mask: position of the pick-th minority neighbour
    ranks = np.cumsum(is_min, axis=1) - 1
    partner_col = np.argmax((ranks[owner] == pick[:, None]) & is_min[owner], axis=1)
    partner = nbrs[owner, partner_col]
    base = min_idx[owner]
    raw = train.X[base] + lam[:, None] * (train.X[partner] - train.X[base])
    return AdasynDetail(minority, base, partner, lam, raw, alloc, min_idx, weights)


def snap_to_codes(values: np.ndarray, codes: np.ndarray) -> np.ndarray:
    codes = np.unique(codes)
    pos = np.clip(np.searchsorted(codes, values), 1, len(codes) - 1) if len(codes) > 1 else np.zeros(len(values), dtype=int)
    if len(codes) == 1:
        return np.full_like(values, codes[0])
    lo, hi = codes[pos - 1], codes[pos]
    return np.where(values - lo <= hi - values, lo, hi)


def adasyn(train: SampleSet, config: AdasynConfig = AdasynConfig()) -> SampleSet:
    """Append ADASYN samples of the minority class; originals are untouched and keep their order."""
    detail = adasyn_detail(train, config)
    synth = detail.raw.copy()
    for col in config.snap_columns:
        synth[:, col] = snap_to_codes(synth[:, col], train.X[:, col])
    extra = SampleSet(
        synth,
        np.full(len(synth), detail.minority_label),
        np.full(len(synth), str(ADASYN), dtype=object),
        train.norm_fingerprint,
    )
    return SampleSet.concat([train, extra])
