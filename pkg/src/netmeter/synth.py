"""Synthetic benign net-metering data: weather, PV generation, household load.

Weather is drawn per (location, date), households per (customer, date);
each draw uses its own keyed substream (see :mod:`netmeter.rng`), so output
is independent of iteration order.
"""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass

import numpy as np

from .core_types import N_SLOTS, CustomerProfile, DaySeries, WeatherDay, encode_day_season
from .rng import substream

SLOT_MID = np.arange(N_SLOTS) + 0.5
SOLAR_NOON = 12.5
SUMMER_SOLSTICE_DOY = 355  # ~21 December


@dataclass(frozen=True)
class SynthConfig:
    n_customers: int = 31
    n_days: int = 365
    start_date: dt.date = dt.date(2010, 7, 1)
    seed: int = 0
    c_max_range: tuple[float, float] = (1.0, 4.0)
    temp_coefficient: float = -0.004
    stc_irradiance: float = 1000.0
    n_locations: int = 8

    def __post_init__(self):
        lo, hi = self.c_max_range
        if not 0 <= lo <= hi:
            raise ValueError("c_max_range must satisfy 0 <= low <= high")
        if self.n_customers < 1 or self.n_days < 1 or self.n_locations < 1:
            raise ValueError("n_customers, n_days and n_locations must be >= 1")
        if not self.stc_irradiance > 0:
            raise ValueError("stc_irradiance must be positive")

    @property
    def dates(self) -> list[dt.date]:
        return [self.start_date + dt.timedelta(days=i) for i in range(self.n_days)]


def _seasonal_phase(date: dt.date) -> float:
    """+1 at the southern summer solstice, -1 at the winter solstice."""
    doy = date.timetuple().tm_yday
    return math.cos(2 * math.pi * (doy - SUMMER_SOLSTICE_DOY) / 365.25)


def _location_climate(seed: int, location_id: str) -> tuple[float, float]:
    rng = substream(seed, "climate", location_id)
    return float(rng.normal(0.0, 1.0)), float(rng.uniform(0.9, 1.05))


def synth_weather(config: SynthConfig, location_id: str, date: dt.date) -> WeatherDay:
    """Clear-sky half-sine irradiance times a daily cloudiness factor; seasonal temperature."""
    phase = _seasonal_phase(date)
    temp_offset, sky_clarity = _location_climate(config.seed, location_id)
    rng = substream(config.seed, "weather", location_id, date.isoformat())

    day_length = 12.0 + 2.2 * phase  # ~14.2 h in December, ~9.8 h in June (Sydney)
    sunrise = SOLAR_NOON - day_length / 2
    peak = (780.0 + 220.0 * phase) * sky_clarity
    cloudiness = 0.3 + 0.7 * rng.beta(2.2, 0.9)

    frac = (SLOT_MID - sunrise) / day_length
    daylight = (frac > 0) & (frac < 1)
    irradiance = np.where(daylight, peak * np.sin(np.pi * np.clip(frac, 0, 1)), 0.0) * cloudiness

    base = 18.0 + 5.0 * phase + temp_offset + rng.normal(0.0, 2.0)
    swing = 2.5 + 5.0 * (cloudiness - 0.3)
    temperature = (
        base
        + swing * np.cos(2 * np.pi * (SLOT_MID - 15.0) / 24.0)
        + rng.normal(0.0, 0.6, N_SLOTS)
    )
    return WeatherDay(location_id, date, irradiance, temperature)


def synth_generation(weather: WeatherDay, profile: CustomerProfile, config: SynthConfig) -> np.ndarray:
    """Hourly PV output in kWh, derated linearly with cell temperature and capped at c_max."""
    g = weather.irradiance / config.stc_irradiance
    derate = 1.0 + config.temp_coefficient * (weather.temperature - 25.0)
    return np.clip(profile.c_max * g * derate, 0.0, profile.c_max)


@dataclass(frozen=True)
class _Lifestyle:
    scale: float
    base: float
    morning: float
    evening: float
    daytime: float
    evening_center: float


def _lifestyle(seed: int, customer_id: str) -> _Lifestyle:
    rng = substream(seed, "lifestyle", customer_id)
    return _Lifestyle(
        scale=float(rng.lognormal(0.0, 0.25)),
        base=float(rng.uniform(0.25, 0.45)),
        morning=float(rng.uniform(0.4, 0.8)),
        evening=float(rng.uniform(0.9, 1.6)),
        daytime=float(rng.uniform(0.05, 0.3)),
        evening_center=float(rng.uniform(18.5, 19.5)),
    )


# heating in winter, some cooling in summer
SEASON_LOAD = (1.10, 1.0, 1.25, 1.0)
STANDBY_KWH = 0.05
PV_SIZING = 1.6


def synth_consumption(profile: CustomerProfile, date: dt.date, seed: int) -> np.ndarray:
    """Hourly household consumption (kWh) with morning/evening peaks; never below 0.05."""
    life = _lifestyle(seed, profile.customer_id)
    day, season = encode_day_season(date)
    rng = substream(seed, "consumption", profile.customer_id, date.isoformat())

    t = SLOT_MID
    load = np.full(N_SLOTS, life.base)
    load += life.morning * np.exp(-0.5 * ((t - 7.5) / 0.9) ** 2)
    load += life.evening * np.exp(-0.5 * ((t - life.evening_center) / 1.6) ** 2)
    daytime = (t > 9) & (t < 17)
    weekend = day >= 5
    load[daytime] += life.daytime * (1.6 if weekend else 1.0)
    if weekend:
        load[6:9] *= 0.8  # later, flatter mornings
    load *= life.scale * SEASON_LOAD[season]
    load *= rng.lognormal(0.0, 0.08)  # day-to-day level
    load *= rng.lognormal(0.0, 0.12, N_SLOTS)
    return np.maximum(load, STANDBY_KWH)


def synth_profiles(config: SynthConfig) -> list[CustomerProfile]:
    width = max(2, len(str(config.n_customers)))
    out = []
    for i in range(config.n_customers):
        cid = f"C{i + 1:0{width}d}"
        rng = substream(config.seed, "profile", cid)
        lo, hi = config.c_max_range
        # systems are sized to the household: at least PV_SIZING x its load scale
        c_max = max(float(rng.uniform(lo, hi)), PV_SIZING * _lifestyle(config.seed, cid).scale)
        c_max = min(c_max, hi)
        out.append(CustomerProfile(cid, round(c_max, 3), f"L{i % config.n_locations + 1:02d}"))
    return out


def synth_components(config: SynthConfig):
    """Profiles, weather days, and per-customer-day (consumption, generation) pairs.

    Returns ``(profiles, weather, parts)`` with ``parts`` mapping
    ``(customer_id, date)`` to the two hourly vectors.
    """
    profiles = synth_profiles(config)
    dates = config.dates
    locations = sorted({p.location_id for p in profiles})
    weather = {(loc, d): synth_weather(config, loc, d) for loc in locations for d in dates}
    parts = {}
    for p in profiles:
        for d in dates:
            cons = synth_consumption(p, d, config.seed)
            gen = synth_generation(weather[(p.location_id, d)], p, config)
            parts[(p.customer_id, d)] = (cons, gen)
    return profiles, [weather[k] for k in sorted(weather)], parts


def synth_benign_dataset(config: SynthConfig):
    """(profiles, day-series sorted by (customer, date), weather days sorted by (location, date))."""
    profiles, weather, parts = synth_components(config)
    days = [DaySeries(cid, d, cons - gen) for (cid, d), (cons, gen) in sorted(parts.items())]
    return profiles, days, weather
