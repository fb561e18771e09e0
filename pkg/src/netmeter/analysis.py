"""Autocorrelation and cross-correlation of net readings with weather series."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core_types import CustomerProfile, DaySeries, WeatherDay


class StatisticsError(ValueError):
    pass


@dataclass(frozen=True)
class AcfResult:
    lags: np.ndarray
    values: np.ndarray
    ci_halfwidth: float
    n: int

    def significant(self, lag: int) -> bool:
        return abs(self.values[lag]) > self.ci_halfwidth


def acf(series, max_lag: int) -> AcfResult:
    """Biased sample autocorrelation up to ``max_lag`` with a +/-1.96/sqrt(N) band.

    ``values[k] = sum_t (x_t - m)(x_{t+k} - m) / sum_t (x_t - m)^2``.
    """
    x = np.asarray(series, dtype=np.float64).reshape(-1)
    n = x.size
    if max_lag < 0:
        raise StatisticsError("max_lag must be non-negative")
    if n <= max_lag:
        raise StatisticsError(f"series length {n} must exceed max_lag {max_lag}")
    d = x - x.mean()
    denom = float(d @ d)
    if not denom > 0:
        raise StatisticsError("ACF undefined for constant series")
    # zero-padded FFT gives the full linear autocovariance in O(N log N)
    size = 1 << int(np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(d, size)
    acov = np.fft.irfft(f * np.conj(f), size)[: max_lag + 1]
    values = acov / denom
    values[0] = 1.0
    return AcfResult(np.arange(max_lag + 1), values, 1.96 / np.sqrt(n), n)


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.size != y.size:
        raise StatisticsError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise StatisticsError("need at least two observations")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0 or syy == 0:
        raise StatisticsError("correlation undefined for a constant series")
    r = float(dx @ dy) / np.sqrt(sxx * syy)
    return float(np.clip(r, -1.0, 1.0))


@dataclass(frozen=True)
class PatternReport:
    customer_id: str
    acf: AcfResult
    lag24: float
    daily_pattern: bool  # lag-24 autocorrelation positive and outside the band


def customer_series(days: Iterable[DaySeries], customer_id: str) -> np.ndarray:
    own = sorted((d for d in days if d.customer_id == customer_id), key=lambda d: d.date)
    if not own:
        return np.empty(0)
    return np.concatenate([d.readings for d in own])


def daily_pattern_report(days: Sequence[DaySeries], max_lag: int = 72) -> PatternReport:
    """ACF of one customer's concatenated days; flags a significant lag-24 correlation."""
    ids = {d.customer_id for d in days}
    if len(ids) != 1:
        raise StatisticsError(f"expected the days of exactly one customer, got {len(ids)}")
    cid = ids.pop()
    res = acf(customer_series(days, cid), max_lag)
    lag24 = float(res.values[24]) if max_lag >= 24 else float("nan")
    return PatternReport(cid, res, lag24, bool(lag24 > res.ci_halfwidth))


def weather_series(
    days: Sequence[DaySeries], weather: Mapping[tuple, WeatherDay], profile: CustomerProfile, attr: str
) -> np.ndarray:
    own = sorted(days, key=lambda d: d.date)
    return np.concatenate([getattr(weather[(profile.location_id, d.date)], attr) for d in own])


def correlation_table(
    days: Sequence[DaySeries], weather: Iterable[WeatherDay], profiles: Iterable[CustomerProfile]
) -> list[tuple[str, str, float]]:
    """(customer_id, target, coefficient) for irradiance and temperature."""
    wx = {w.key: w for w in weather}
    rows = []
    for p in sorted(profiles, key=lambda p: p.customer_id):
        own = sorted((d for d in days if d.customer_id == p.customer_id), key=lambda d: d.date)
        if len(own) == 0:
            continue
        readings = np.concatenate([d.readings for d in own])
        for target in ("irradiance", "temperature"):
            rows.append((p.customer_id, target, pearson(readings, weather_series(own, wx, p, target))))
    return rows


def write_acf_csv(path, result: AcfResult) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lag", "value", "ci"])
        for lag, v in zip(result.lags.tolist(), result.values.tolist()):
            w.writerow([lag, repr(v), repr(float(result.ci_halfwidth))])


def write_corr_csv(path, rows: Iterable[tuple[str, str, float]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["customer_id", "target", "coefficient"])
        for cid, target, r in rows:
            w.writerow([cid, target, repr(float(r))])


def render_acf_svg(path, results: Mapping[str, AcfResult]) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 3.5))
    for name, res in results.items():
        ax.plot(res.lags, res.values, lw=1, label=name)
    band = max(r.ci_halfwidth for r in results.values())
    ax.axhspan(-band, band, color="tab:blue", alpha=0.15, lw=0)
    ax.set_xlabel("lag (hours)")
    ax.set_ylabel("autocorrelation")
    ax.legend(fontsize="small", ncol=2)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def render_scatter_svg(path, x, y, xlabel: str, ylabel: str, title: str = "") -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(4, 3.5))
    ax.scatter(x, y, s=2, alpha=0.3)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title, fontsize="small")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
