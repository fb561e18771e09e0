"""Shared domain vocabulary: profiles, day series, weather, feature samples."""

from __future__ import annotations

import datetime as dt
import json
import os
import re
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Iterable, Iterator, Sequence

import numpy as np
import pandas as pd

N_SLOTS = 24
N_FEATURES = 75

READINGS = slice(0, 24)
IRRADIANCE = slice(24, 48)
TEMPERATURE = slice(48, 72)
CMAX = 72
DAY = 73
SEASON = 74

FEATURE_COLUMNS = [f"f{i}" for i in range(N_FEATURES)]


class Label(IntEnum):
    BENIGN = 0
    MALICIOUS = 1

    def __str__(self) -> str:
        return "Benign" if self is Label.BENIGN else "Malicious"

    @classmethod
    def parse(cls, text: str) -> "Label":
        key = text.strip().lower()
        if key in ("benign", "0"):
            return cls.BENIGN
        if key in ("malicious", "1"):
            return cls.MALICIOUS
        raise ValueError(f"unknown label {text!r}")


class ProvenanceKind(Enum):
    REAL = "Real"
    SYNTHETIC = "Synthetic"
    ATTACK = "AttackInjected"
    ADASYN = "AdasynGenerated"


_ATTACK_RE = re.compile(r"^AttackInjected\((\d)\)$")


@dataclass(frozen=True)
class Provenance:
    kind: ProvenanceKind
    attack_id: int | None = None

    def __post_init__(self):
        if (self.kind is ProvenanceKind.ATTACK) != (self.attack_id is not None):
            raise ValueError("attack_id is required for, and only for, AttackInjected")

    def __str__(self) -> str:
        if self.kind is ProvenanceKind.ATTACK:
            return f"AttackInjected({self.attack_id})"
        return self.kind.value

    @classmethod
    def parse(cls, text: str) -> "Provenance":
        text = text.strip()
        m = _ATTACK_RE.match(text)
        if m:
            return cls(ProvenanceKind.ATTACK, int(m.group(1)))
        return cls(ProvenanceKind(text))

    @classmethod
    def attack(cls, attack_id: int) -> "Provenance":
        return cls(ProvenanceKind.ATTACK, int(attack_id))


REAL = Provenance(ProvenanceKind.REAL)
SYNTHETIC = Provenance(ProvenanceKind.SYNTHETIC)
ADASYN = Provenance(ProvenanceKind.ADASYN)


def _frozen_array(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, copy=True).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class CustomerProfile:
    customer_id: str
    c_max: float
    location_id: str

    def __post_init__(self):
        if not self.c_max >= 0:
            raise ValueError(f"c_max must be non-negative, got {self.c_max}")


@dataclass(frozen=True, eq=False)
class DaySeries:
    """24 hourly net readings (kWh, consumption minus generation)."""

    customer_id: str
    date: dt.date
    readings: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "readings", _frozen_array(self.readings))

    def __eq__(self, other):
        if not isinstance(other, DaySeries):
            return NotImplemented
        return (
            self.customer_id == other.customer_id
            and self.date == other.date
            and np.array_equal(self.readings, other.readings)
        )

    def __hash__(self):
        return hash((self.customer_id, self.date, self.readings.tobytes()))

    @property
    def key(self) -> tuple[str, dt.date]:
        return (self.customer_id, self.date)


@dataclass(frozen=True, eq=False)
class WeatherDay:
    location_id: str
    date: dt.date
    irradiance: np.ndarray
    temperature: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "irradiance", _frozen_array(self.irradiance))
        object.__setattr__(self, "temperature", _frozen_array(self.temperature))
        if self.irradiance.size != N_SLOTS or self.temperature.size != N_SLOTS:
            raise ValueError("weather vectors must have 24 hourly values")
        if (self.irradiance < 0).any():
            raise ValueError("irradiance must be non-negative")

    def __eq__(self, other):
        if not isinstance(other, WeatherDay):
            return NotImplemented
        return (
            self.location_id == other.location_id
            and self.date == other.date
            and np.array_equal(self.irradiance, other.irradiance)
            and np.array_equal(self.temperature, other.temperature)
        )

    def __hash__(self):
        return hash((self.location_id, self.date))

    @property
    def key(self) -> tuple[str, dt.date]:
        return (self.location_id, self.date)


@dataclass(frozen=True, eq=False)
class FeatureSample:
    """One detector input: readings | irradiance | temperature | c_max | day | season."""

    features: np.ndarray
    label: Label
    provenance: Provenance

    def __post_init__(self):
        feats = _frozen_array(self.features)
        if feats.size != N_FEATURES:
            raise ValueError(f"a feature sample has {N_FEATURES} values, got {feats.size}")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "label", Label(self.label))

    def __eq__(self, other):
        if not isinstance(other, FeatureSample):
            return NotImplemented
        return (
            self.label == other.label
            and self.provenance == other.provenance
            and np.array_equal(self.features, other.features)
        )

    __hash__ = None


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self):
        for name in ("tp", "tn", "fp", "fn"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


ValidationReport = list  # list[str]; empty iff the day is admissible


def validate_day(series: DaySeries, profile: CustomerProfile) -> list[str]:
    """Return the list of violated invariants (empty when admissible)."""
    if series.customer_id != profile.customer_id:
        raise ValueError(
            f"day belongs to {series.customer_id!r} but profile is {profile.customer_id!r}"
        )
    problems = []
    r = series.readings
    if r.size != N_SLOTS:
        problems.append(f"length != 24 (got {r.size})")
    finite = np.isfinite(r)
    if not finite.all():
        problems.append(f"non-finite readings at slots {np.flatnonzero(~finite).tolist()}")
    below = np.flatnonzero(finite & (r < -profile.c_max))
    if below.size:
        problems.append(f"reading below -c_max at slots {below.tolist()}")
    return problems


def encode_day_season(date: dt.date) -> tuple[int, int]:
    """(weekday with Monday=0, Southern-Hemisphere meteorological season).

    Seasons: Dec-Feb summer=0, Mar-May autumn=1, Jun-Aug winter=2, Sep-Nov spring=3.
    """
    return date.weekday(), (date.month % 12) // 3


class SampleSet:
    """Column-oriented collection of feature samples.

    ``norm_fingerprint`` is set when the features have been min-max scaled,
    and identifies the normalizer that produced them.
    """

    def __init__(self, X, y, provenance, norm_fingerprint: str | None = None):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != N_FEATURES:
            raise ValueError(f"expected an (N, {N_FEATURES}) matrix, got {X.shape}")
        self.X = X
        self.y = np.asarray(y, dtype=np.int64).reshape(-1)
        self.provenance = np.asarray(provenance, dtype=object).reshape(-1)
        if not (len(self.y) == len(self.provenance) == len(X)):
            raise ValueError("X, y and provenance lengths differ")
        self.norm_fingerprint = norm_fingerprint

    def __len__(self):
        return len(self.y)

    def __getitem__(self, i: int) -> FeatureSample:
        return FeatureSample(self.X[i], Label(int(self.y[i])), Provenance.parse(self.provenance[i]))

    def __iter__(self) -> Iterator[FeatureSample]:
        for i in range(len(self)):
            yield self[i]

    def subset(self, idx) -> "SampleSet":
        idx = np.asarray(idx)
        return SampleSet(self.X[idx], self.y[idx], self.provenance[idx], self.norm_fingerprint)

    def counts(self) -> dict[Label, int]:
        return {lab: int((self.y == lab).sum()) for lab in Label}

    @classmethod
    def from_samples(cls, samples: Iterable[FeatureSample], norm_fingerprint=None) -> "SampleSet":
        samples = list(samples)
        if not samples:
            return cls.empty(norm_fingerprint)
        return cls(
            np.stack([s.features for s in samples]),
            [int(s.label) for s in samples],
            [str(s.provenance) for s in samples],
            norm_fingerprint,
        )

    @classmethod
    def empty(cls, norm_fingerprint=None) -> "SampleSet":
        return cls(np.empty((0, N_FEATURES)), [], [], norm_fingerprint)

    @classmethod
    def concat(cls, parts: Sequence["SampleSet"]) -> "SampleSet":
        fps = {p.norm_fingerprint for p in parts}
        if len(fps) > 1:
            raise ValueError("cannot concatenate sample sets scaled by different normalizers")
        return cls(
            np.concatenate([p.X for p in parts]),
            np.concatenate([p.y for p in parts]),
            np.concatenate([p.provenance for p in parts]),
            fps.pop() if fps else None,
        )


def _meta_path(path) -> str:
    return os.fspath(path) + ".meta.json"


def write_samples_csv(path, samples: SampleSet | Iterable[FeatureSample]) -> None:
    """Write the ``label,provenance,f0..f74`` interchange CSV.

    Floats use the shortest repr that round-trips exactly.  A sidecar
    ``<path>.meta.json`` records the normalizer fingerprint, if any.
    """
    if not isinstance(samples, SampleSet):
        samples = SampleSet.from_samples(samples)
    names = {int(lab): str(lab) for lab in Label}
    with open(path, "w", newline="") as fh:
        fh.write(",".join(["label", "provenance"] + FEATURE_COLUMNS) + "\n")
        for label, prov, row in zip(samples.y, samples.provenance, samples.X.tolist()):
            fh.write(f"{names[int(label)]},{prov}," + ",".join(map(repr, row)) + "\n")
    meta = {"n_samples": len(samples), "norm_fingerprint": samples.norm_fingerprint}
    with open(_meta_path(path), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)


def read_samples_csv(path) -> SampleSet:
    frame = pd.read_csv(path, dtype={"label": str, "provenance": str}, float_precision="round_trip")
    expected = ["label", "provenance"] + FEATURE_COLUMNS
    if list(frame.columns) != expected:
        raise ValueError(f"{path}: header does not match label,provenance,f0..f74")
    y = [int(Label.parse(v)) for v in frame["label"]]
    for text in set(frame["provenance"]):
        Provenance.parse(text)
    fingerprint = None
    if os.path.exists(_meta_path(path)):
        with open(_meta_path(path)) as fh:
            fingerprint = json.load(fh).get("norm_fingerprint")
    return SampleSet(
        frame[FEATURE_COLUMNS].to_numpy(dtype=np.float64),
        y,
        frame["provenance"].to_numpy(dtype=object),
        fingerprint,
    )


def write_days_csv(path, days: Iterable[DaySeries], extra: dict[str, Sequence] | None = None) -> None:
    """Hourly day-series CSV: ``customer_id,date,[extra...],r00..r23``."""
    days = list(days)
    frame = pd.DataFrame(
        np.stack([d.readings for d in days]) if days else np.empty((0, N_SLOTS)),
        columns=[f"r{h:02d}" for h in range(N_SLOTS)],
    )
    for name, values in reversed(list((extra or {}).items())):
        frame.insert(0, name, list(values))
    frame.insert(0, "date", [d.date.isoformat() for d in days])
    frame.insert(0, "customer_id", [d.customer_id for d in days])
    frame.to_csv(path, index=False, float_format="%.17g")


def read_days_csv(path) -> tuple[list[DaySeries], pd.DataFrame]:
    """Inverse of :func:`write_days_csv`; also returns any extra columns."""
    frame = pd.read_csv(path, dtype={"customer_id": str, "date": str}, float_precision="round_trip")
    cols = [f"r{h:02d}" for h in range(N_SLOTS)]
    missing = [c for c in ["customer_id", "date"] + cols if c not in frame.columns]
    if missing:
        raise ValueError(f"{path}: missing columns {missing}")
    values = frame[cols].to_numpy(dtype=np.float64)
    days = [
        DaySeries(cid, dt.date.fromisoformat(d), values[i])
        for i, (cid, d) in enumerate(zip(frame["customer_id"], frame["date"]))
    ]
    extra = frame.drop(columns=["customer_id", "date"] + cols)
    return days, extra


def write_profiles_csv(path, profiles: Iterable[CustomerProfile]) -> None:
    rows = [(p.customer_id, repr(float(p.c_max)), p.location_id) for p in profiles]
    with open(path, "w") as fh:
        fh.write("customer_id,c_max,location_id\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def read_profiles_csv(path) -> dict[str, CustomerProfile]:
    frame = pd.read_csv(path, dtype=str)
    if list(frame.columns) != ["customer_id", "c_max", "location_id"]:
        raise ValueError(f"{path}: header must be customer_id,c_max,location_id")
    return {
        cid: CustomerProfile(cid, float(cmax), loc)
        for cid, cmax, loc in zip(frame["customer_id"], frame["c_max"], frame["location_id"])
    }


def profile_index(profiles: Iterable[CustomerProfile] | dict) -> dict[str, CustomerProfile]:
    if isinstance(profiles, dict):
        return profiles
    out: dict[str, CustomerProfile] = {}
    for p in profiles:
        if p.customer_id in out:
            raise ValueError(f"duplicate customer_id {p.customer_id!r}")
        out[p.customer_id] = p
    return out
