"""Ausgrid-style meter CSVs and weather CSVs: load, clean, net, aggregate.

Meter schema::

    customer_id,c_max,category,date,h00a,h00b,...,h23a,h23b

``category`` is ``Consumption`` or ``Generation`` (the Ausgrid codes ``GC``
and ``GG`` are accepted as aliases).  Empty half-hour cells are read as
missing (NaN) and left for :func:`clean` to drop.

Weather schema::

    location_id,date,ghi00..ghi23,temp00..temp23
"""

from __future__ import annotations

import csv
import datetime as dt
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

import numpy as np

from .core_types import N_SLOTS, CustomerProfile, DaySeries, WeatherDay

HALF_HOURS = [f"h{h:02d}{s}" for h in range(N_SLOTS) for s in "ab"]
METER_HEADER = ["customer_id", "c_max", "category", "date"] + HALF_HOURS
WEATHER_HEADER = (
    ["location_id", "date"]
    + [f"ghi{h:02d}" for h in range(N_SLOTS)]
    + [f"temp{h:02d}" for h in range(N_SLOTS)]
)


class IngestError(ValueError):
    """Structural problem with an input file (bad header, unreadable file)."""


class Category(Enum):
    CONSUMPTION = "Consumption"
    GENERATION = "Generation"


_CATEGORY_ALIASES = {
    "consumption": Category.CONSUMPTION,
    "gc": Category.CONSUMPTION,
    "generation": Category.GENERATION,
    "gg": Category.GENERATION,
}


@dataclass(frozen=True, eq=False)
class RawMeterRow:
    customer_id: str
    category: Category
    date: dt.date
    values: np.ndarray  # 48 half-hour kWh values, NaN where missing
    c_max: float

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64).reshape(-1)
        if vals.size != 2 * N_SLOTS:
            raise ValueError(f"expected 48 values, got {vals.size}")
        if np.isinf(vals).any():
            raise ValueError("infinite meter value")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __eq__(self, other):
        if not isinstance(other, RawMeterRow):
            return NotImplemented
        return (
            (self.customer_id, self.category, self.date, self.c_max)
            == (other.customer_id, other.category, other.date, other.c_max)
            and np.array_equal(self.values, other.values, equal_nan=True)
        )

    __hash__ = None

    @property
    def day_key(self) -> tuple[str, dt.date]:
        return (self.customer_id, self.date)


@dataclass(frozen=True)
class Reject:
    line: int
    reason: str


def _parse_float(text: str) -> float:
    text = text.strip()
    if text == "":
        return math.nan
    return float(text)


def _read_rows(path, header: list[str]):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            first = next(reader)
        except StopIteration:
            raise IngestError(f"{path}: line 1: missing header") from None
        if [c.strip() for c in first] != header:
            raise IngestError(
                f"{path}: line 1: header does not match schema "
                f"({len(first)} columns, expected {len(header)})"
            )
        for record in reader:
            if not record or all(not c.strip() for c in record):
                continue
            yield reader.line_num, record


def load_meter_csv(path) -> tuple[list[RawMeterRow], list[Reject]]:
    """Rows in file order plus a rejects report for malformed lines."""
    rows: list[RawMeterRow] = []
    rejects: list[Reject] = []
    seen: set[tuple] = set()
    for line, rec in _read_rows(path, METER_HEADER):
        n_values = len(rec) - 4
        if n_values != 2 * N_SLOTS:
            rejects.append(Reject(line, f"expected 48 values, got {max(n_values, 0)}"))
            continue
        cid, cmax_text, cat_text, date_text = (c.strip() for c in rec[:4])
        try:
            category = _CATEGORY_ALIASES[cat_text.lower()]
        except KeyError:
            rejects.append(Reject(line, f"unknown category {cat_text!r}"))
            continue
        try:
            date = dt.date.fromisoformat(date_text)
            c_max = float(cmax_text)
            values = [_parse_float(v) for v in rec[4:]]
        except ValueError as exc:
            rejects.append(Reject(line, f"unparseable field: {exc}"))
            continue
        if not (math.isfinite(c_max) and c_max >= 0):
            rejects.append(Reject(line, "c_max must be a non-negative number"))
            continue
        if any(math.isinf(v) for v in values):
            rejects.append(Reject(line, "infinite value"))
            continue
        key = (cid, category, date)
        if key in seen:
            rejects.append(Reject(line, "duplicate (customer, category, date)"))
            continue
        seen.add(key)
        rows.append(RawMeterRow(cid, category, date, values, c_max))
    return rows, rejects


def load_weather_csv(path) -> tuple[list[WeatherDay], list[Reject]]:
    days: list[WeatherDay] = []
    rejects: list[Reject] = []
    seen: set[tuple] = set()
    for line, rec in _read_rows(path, WEATHER_HEADER):
        n_values = len(rec) - 2
        if n_values != 2 * N_SLOTS:
            rejects.append(Reject(line, f"expected 48 values, got {max(n_values, 0)}"))
            continue
        loc, date_text = rec[0].strip(), rec[1].strip()
        try:
            date = dt.date.fromisoformat(date_text)
            values = np.array([float(v) for v in rec[2:]])
        except ValueError as exc:
            rejects.append(Reject(line, f"unparseable field: {exc}"))
            continue
        if not np.isfinite(values).all():
            rejects.append(Reject(line, "non-finite value"))
            continue
        if (values[:N_SLOTS] < 0).any():
            rejects.append(Reject(line, "negative irradiance"))
            continue
        if (loc, date) in seen:
            rejects.append(Reject(line, "duplicate (location, date)"))
            continue
        seen.add((loc, date))
        days.append(WeatherDay(loc, date, values[:N_SLOTS], values[N_SLOTS:]))
    return days, rejects


@dataclass(frozen=True)
class CleanRules:
    negative_generation: bool = True
    generation_exceeds_cap: bool = True
    missing_slot: bool = True
    zero_consumption: bool = True


RULE_NAMES = {
    "negative_generation": "negative generation",
    "generation_exceeds_cap": "generation exceeds c_max",
    "missing_slot": "missing slot",
    "zero_consumption": "zero consumption",
}


@dataclass
class CleanResult:
    rows: list[RawMeterRow]
    drop_counts: dict[str, int] = field(default_factory=dict)


def _day_violation(cons: RawMeterRow | None, gen: RawMeterRow | None, rules: CleanRules) -> str | None:
    if rules.missing_slot:
        if cons is None or gen is None:
            return RULE_NAMES["missing_slot"]
        if np.isnan(cons.values).any() or np.isnan(gen.values).any():
            return RULE_NAMES["missing_slot"]
    if gen is not None:
        g = gen.values
        if rules.negative_generation and (g < 0).any():
            return RULE_NAMES["negative_generation"]
        if rules.generation_exceeds_cap:
            hourly = g[0::2] + g[1::2]
            if (hourly > gen.c_max).any():
                return RULE_NAMES["generation_exceeds_cap"]
    if cons is not None and rules.zero_consumption:
        c = cons.values
        if np.all(np.nan_to_num(c) == 0):
            return RULE_NAMES["zero_consumption"]
    return None


def clean(rows: Iterable[RawMeterRow], rules: CleanRules = CleanRules()) -> CleanResult:
    """Drop whole customer-days that break any enabled rule.

    Each dropped day is counted once, under the first rule it breaks
    (order: missing slot, negative generation, cap exceeded, zero consumption).
    """
    rows = list(rows)
    by_day: dict[tuple, dict[Category, RawMeterRow]] = defaultdict(dict)
    for r in rows:
        by_day[r.day_key][r.category] = r
    counts = Counter({name: 0 for name in RULE_NAMES.values()})
    dropped = set()
    for key in sorted(by_day):
        pair = by_day[key]
        reason = _day_violation(pair.get(Category.CONSUMPTION), pair.get(Category.GENERATION), rules)
        if reason is not None:
            counts[reason] += 1
            dropped.add(key)
    kept = [r for r in rows if r.day_key not in dropped]
    return CleanResult(kept, dict(counts))


def net_and_aggregate(consumption: RawMeterRow, generation: RawMeterRow) -> DaySeries:
    """Hourly net energy: (c[2k] + c[2k+1]) - (g[2k] + g[2k+1])."""
    if consumption.day_key != generation.day_key:
        raise ValueError(
            f"consumption row {consumption.day_key} does not match generation row {generation.day_key}"
        )
    if consumption.category is not Category.CONSUMPTION or generation.category is not Category.GENERATION:
        raise ValueError("expected one consumption row and one generation row")
    c, g = consumption.values, generation.values
    hourly = (c[0::2] + c[1::2]) - (g[0::2] + g[1::2])
    return DaySeries(consumption.customer_id, consumption.date, hourly)


def build_day_series(
    rows: Iterable[RawMeterRow], locations: dict[str, str] | None = None
) -> tuple[list[CustomerProfile], list[DaySeries]]:
    """Pair cleaned rows into net day-series, sorted by (customer, date).

    ``locations`` maps customer ids to weather location keys; customers
    without an entry use their own id as location.
    """
    by_day: dict[tuple, dict[Category, RawMeterRow]] = defaultdict(dict)
    c_max: dict[str, float] = {}
    for r in rows:
        by_day[r.day_key][r.category] = r
        prev = c_max.setdefault(r.customer_id, r.c_max)
        if prev != r.c_max:
            raise ValueError(f"inconsistent c_max for customer {r.customer_id!r}")
    days = []
    for key in sorted(by_day):
        pair = by_day[key]
        if len(pair) == 2:
            days.append(net_and_aggregate(pair[Category.CONSUMPTION], pair[Category.GENERATION]))
    locations = locations or {}
    profiles = [
        CustomerProfile(cid, c_max[cid], locations.get(cid, cid)) for cid in sorted(c_max)
    ]
    return profiles, days


def write_meter_csv(path, rows: Iterable[RawMeterRow]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(METER_HEADER) + "\n")
        for r in rows:
            vals = ["" if math.isnan(v) else repr(v) for v in r.values.tolist()]
            fh.write(",".join([r.customer_id, repr(float(r.c_max)), r.category.value, r.date.isoformat()] + vals) + "\n")


def hourly_to_rows(profile: CustomerProfile, date: dt.date, consumption, generation) -> list[RawMeterRow]:
    """Split hourly energy evenly into half-hour rows (exact under re-aggregation)."""
    rows = []
    for cat, hourly in ((Category.CONSUMPTION, consumption), (Category.GENERATION, generation)):
        halves = np.repeat(np.asarray(hourly, dtype=np.float64) / 2.0, 2)
        rows.append(RawMeterRow(profile.customer_id, cat, date, halves, profile.c_max))
    return rows


def write_weather_csv(path, weather: Iterable[WeatherDay]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(WEATHER_HEADER) + "\n")
        for w in weather:
            vals = [repr(v) for v in w.irradiance.tolist() + w.temperature.tolist()]
            fh.write(",".join([w.location_id, w.date.isoformat()] + vals) + "\n")
