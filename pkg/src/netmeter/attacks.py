"""False-reading attacks on net-metering day series.

Attack ids:

1. intermittent: inside a random window, positive readings are scaled down
   by ``b_t`` and negative readings become ``-max(p_t * c_max, |TR_t|)``.
2. fixed scaling: positives times ``alpha``, negatives ``-min(|beta * TR_t|, c_max)``.
3. time-varying scaling: as 2 with per-slot ``alpha_t``, ``beta_t``.
4. history-based: positives ``M1_t * min(PR, TR_t)``, negatives
   ``-M2_t * max(|NR|, |TR_t|)`` (capped at c_max), where PR/NR are the last
   reported positive/negative values.

Zero readings pass through unchanged.  Random draws happen in a fixed order
per attack (window first, then whole 24-slot vectors), so a slot-by-slot
reimplementation consuming the same generator reproduces results bitwise.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core_types import N_SLOTS, CustomerProfile, DaySeries, profile_index, validate_day
from .rng import substream

ATTACK_IDS = (1, 2, 3, 4)
ATTACK_NAMES = {1: "intermittent", 2: "fixed scaling", 3: "time scaling", 4: "history"}


class AttackInvariantError(RuntimeError):
    """A generated trace does not give the attacker a financial gain, or is inadmissible."""


@dataclass(frozen=True)
class AttackParams:
    attack_id: int = 1
    b_range: tuple[float, float] = (0.1, 0.8)
    p_range: tuple[float, float] = (0.7, 1.0)
    alpha: float = 0.5
    beta: float = 1.5
    alpha_range: tuple[float, float] = (0.1, 0.8)
    beta_range: tuple[float, float] = (1.2, 2.0)
    m1_range: tuple[float, float] = (0.95, 0.999)
    m2_range: tuple[float, float] = (1.001, 1.05)
    min_window_hours: int = 4

    def __post_init__(self):
        if self.attack_id not in ATTACK_IDS:
            raise ValueError(f"attack_id must be one of {ATTACK_IDS}")
        _check_range("b_range", self.b_range, 0.0, 1.0, hi_open=True)
        _check_range("p_range", self.p_range, 0.0, 1.0, lo_open=True)
        _check_range("alpha_range", self.alpha_range, 0.0, 1.0, hi_open=True)
        _check_range("m1_range", self.m1_range, 0.95, 1.0, hi_open=True)
        _check_range("m2_range", self.m2_range, 1.0, 1.05, lo_open=True)
        if not 0 <= self.alpha < 1:
            raise ValueError("alpha must satisfy 0 <= alpha < 1")
        if not self.beta > 1:
            raise ValueError("beta must be > 1")
        lo, hi = self.beta_range
        if not 1 < lo <= hi:
            raise ValueError("beta_range must lie in (1, beta_max]")
        if not 1 <= self.min_window_hours <= N_SLOTS:
            raise ValueError("min_window_hours must be in [1, 24]")


def _check_range(name, rng, lo, hi, lo_open=False, hi_open=False):
    a, b = rng
    ok_lo = a > lo if lo_open else a >= lo
    ok_hi = b < hi if hi_open else b <= hi
    if not (ok_lo and ok_hi and a <= b):
        lb = "(" if lo_open else "["
        rb = ")" if hi_open else "]"
        raise ValueError(f"{name}={rng} must be an ordered pair within {lb}{lo}, {hi}{rb}")


def default_params() -> dict[int, AttackParams]:
    return {a: AttackParams(attack_id=a) for a in ATTACK_IDS}


@dataclass(frozen=True, eq=False)
class AttackTrace:
    original: DaySeries
    reported: DaySeries
    attack_id: int
    record: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        rec = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in self.record.items()}
        return {
            "customer_id": self.original.customer_id,
            "date": self.original.date.isoformat(),
            "attack_id": self.attack_id,
            "true": self.original.readings.tolist(),
            "reported": self.reported.readings.tolist(),
            "params": rec,
        }


def _uniform(rng: np.random.Generator, bounds: tuple[float, float]) -> np.ndarray:
    return rng.uniform(bounds[0], bounds[1], N_SLOTS)


def _draw_window(rng: np.random.Generator, min_len: int) -> tuple[int, int]:
    length = int(rng.integers(min_len, N_SLOTS + 1))
    start = int(rng.integers(0, N_SLOTS - length + 1))
    return start, start + length - 1


def _trace(day, reported, attack_id, record) -> AttackTrace:
    return AttackTrace(day, DaySeries(day.customer_id, day.date, reported), attack_id, record)


def attack1_intermittent(day: DaySeries, profile: CustomerProfile, params: AttackParams, rng) -> AttackTrace:
    tr = day.readings
    t_s, t_e = _draw_window(rng, params.min_window_hours)
    b = _uniform(rng, params.b_range)
    p = _uniform(rng, params.p_range)
    inside = np.zeros(N_SLOTS, dtype=bool)
    inside[t_s : t_e + 1] = True
    out = tr.copy()
    pos = inside & (tr > 0)
    neg = inside & (tr < 0)
    out[pos] = b[pos] * tr[pos]
    out[neg] = -np.maximum(p[neg] * profile.c_max, np.abs(tr[neg]))
    return _trace(day, out, 1, {"t_s": t_s, "t_e": t_e, "b": b, "p": p})


def _scale(tr: np.ndarray, alpha, beta, c_max: float) -> np.ndarray:
    out = tr.copy()
    pos = tr > 0
    neg = tr < 0
    alpha = np.broadcast_to(alpha, tr.shape)
    beta = np.broadcast_to(beta, tr.shape)
    out[pos] = alpha[pos] * tr[pos]
    out[neg] = -np.minimum(np.abs(beta[neg] * tr[neg]), c_max)
    return out


def attack2_fixed_scaling(day: DaySeries, profile: CustomerProfile, params: AttackParams, rng=None) -> AttackTrace:
    out = _scale(day.readings, params.alpha, params.beta, profile.c_max)
    return _trace(day, out, 2, {"alpha": params.alpha, "beta": params.beta})


def attack3_time_scaling(day: DaySeries, profile: CustomerProfile, params: AttackParams, rng) -> AttackTrace:
    alpha = _uniform(rng, params.alpha_range)
    beta = _uniform(rng, params.beta_range)
    out = _scale(day.readings, alpha, beta, profile.c_max)
    return _trace(day, out, 3, {"alpha_t": alpha, "beta_t": beta})


def attack4_history(day: DaySeries, profile: CustomerProfile, params: AttackParams, rng) -> AttackTrace:
    m1 = _uniform(rng, params.m1_range)
    m2 = _uniform(rng, params.m2_range)
    tr = day.readings.tolist()
    out = list(tr)
    last_pos, last_neg = float("inf"), 0.0
    for t, v in enumerate(tr):
        if v > 0:
            last_pos = out[t] = float(m1[t]) * min(last_pos, v)
        elif v < 0:
            last_neg = out[t] = -min(float(m2[t]) * max(abs(last_neg), abs(v)), profile.c_max)
    return _trace(day, np.array(out), 4, {"m1_t": m1, "m2_t": m2})


ATTACKS = {
    1: attack1_intermittent,
    2: attack2_fixed_scaling,
    3: attack3_time_scaling,
    4: attack4_history,
}


def attack_rng(seed: int, customer_id: str, date, attack_id: int) -> np.random.Generator:
    return substream(seed, "attack", customer_id, date.isoformat(), attack_id)


def bill(readings, tariff: float = 1.0) -> float:
    """Net-metering bill: consumption charged and export credited at one tariff."""
    return float(tariff * np.sum(readings))


def gain_violations(trace: AttackTrace, c_max: float) -> list[str]:
    """Slots where the reported value does not favour the attacker, plus capacity breaches."""
    tr = trace.original.readings
    rep = trace.reported.readings
    problems = []
    worse = np.flatnonzero(rep > tr)
    if worse.size:
        problems.append(f"reported above truth at slots {worse.tolist()}")
    over = np.flatnonzero(rep < -c_max)
    if over.size:
        problems.append(f"reported below -c_max at slots {over.tolist()}")
    if trace.attack_id in (2, 3, 4) and np.any(tr != 0) and not bill(rep) < bill(tr):
        problems.append("bill not strictly reduced")
    return problems


def build_malicious_dataset(
    benign_days: Sequence[DaySeries],
    profiles: Iterable[CustomerProfile] | Mapping[str, CustomerProfile],
    params_per_attack: Mapping[int, AttackParams] | None = None,
    seed: int = 0,
) -> list[AttackTrace]:
    """Four traces per benign day, ordered day-major then by attack id."""
    index = profile_index(profiles)
    params = dict(default_params())
    if params_per_attack:
        params.update({a: replace(p, attack_id=a) for a, p in params_per_attack.items()})
    traces = []
    for day in benign_days:
        profile = index[day.customer_id]
        for a in ATTACK_IDS:
            rng = attack_rng(seed, day.customer_id, day.date, a)
            trace = ATTACKS[a](day, profile, params[a], rng)
            problems = gain_violations(trace, profile.c_max) + validate_day(trace.reported, profile)
            if problems:
                raise AttackInvariantError(
                    f"attack {a} on {day.customer_id} {day.date}: {'; '.join(problems)}\n"
                    f"true={day.readings.tolist()}\nreported={trace.reported.readings.tolist()}"
                )
            traces.append(trace)
    return traces


def write_audit_log(path, traces: Iterable[AttackTrace]) -> None:
    """JSON Lines: one object per trace with true/reported readings and per-slot parameters."""
    with open(path, "w") as fh:
        for t in traces:
            fh.write(json.dumps(t.to_json(), sort_keys=True) + "\n")


def params_to_dict(p: AttackParams) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(p).items()}
