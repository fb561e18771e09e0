import datetime as dt
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from netmeter.attacks import (
    AttackInvariantError,
    AttackParams,
    attack1_intermittent,
    attack2_fixed_scaling,
    attack3_time_scaling,
    attack4_history,
    attack_rng,
    bill,
    build_malicious_dataset,
    gain_violations,
    write_audit_log,
)
from netmeter.core_types import CustomerProfile, DaySeries, validate_day

D = dt.date(2011, 2, 3)


def _day(values, cid="C1"):
    v = np.zeros(24)
    v[: len(values)] = values
    return DaySeries(cid, D, v)


def _prof(c_max=3.0):
    return CustomerProfile("C1", c_max, "L1")


class _Fixed:
    """rng stand-in returning preset uniform draws."""

    def __init__(self, integers=(), uniforms=()):
        self._ints = list(integers)
        self._unis = list(uniforms)

    def integers(self, lo, hi):
        return self._ints.pop(0)

    def uniform(self, lo, hi, size):
        return np.full(size, self._unis.pop(0), dtype=float)


def test_params_validation():
    AttackParams()
    for bad in (dict(alpha=1.0), dict(beta=1.0), dict(m1_range=(0.9, 0.99)), dict(m2_range=(1.0, 1.01)),
                dict(b_range=(0.5, 0.4)), dict(min_window_hours=0), dict(beta_range=(1.0, 2.0)), dict(attack_id=5)):
        with pytest.raises(ValueError):
            AttackParams(**bad)


def test_attack1_window_examples():
    # window of length 4 starting at slot 0; p_t = 0.9, b_t = 0.5
    rng = _Fixed(integers=[4, 0], uniforms=[0.5, 0.9])
    tr = [-1.0, -2.9, 2.0, 0.0] + [1.7] * 20
    out = attack1_intermittent(_day(tr), _prof(3.0), AttackParams(), rng)
    rep = out.reported.readings
    assert rep[0] == -max(0.9 * 3.0, 1.0)  # -2.7
    assert rep[1] == -2.9
    assert rep[2] == 1.0 and rep[3] == 0.0
    assert np.all(rep[4:] == 1.7)
    assert (out.record["t_s"], out.record["t_e"]) == (0, 3)


def test_attack1_never_reports_less_than_truth():
    rng = _Fixed(integers=[24, 0], uniforms=[0.5, 0.5])
    out = attack1_intermittent(_day([-2.9]), _prof(3.0), AttackParams(), rng)
    assert out.reported.readings[0] == -2.9


@given(st.integers(0, 2**32 - 1), st.integers(1, 24))
def test_attack1_identity_outside_window(seed, min_w):
    tr = np.random.default_rng(seed).normal(0, 1, 24)
    out = attack1_intermittent(DaySeries("C1", D, tr), _prof(5.0), AttackParams(min_window_hours=min_w), np.random.default_rng(seed))
    t_s, t_e = out.record["t_s"], out.record["t_e"]
    assert t_e - t_s + 1 >= min_w and 0 <= t_s <= t_e <= 23
    outside = np.ones(24, bool)
    outside[t_s : t_e + 1] = False
    assert np.array_equal(out.reported.readings[outside], tr[outside])


def test_attack2_examples():
    p = AttackParams(attack_id=2, alpha=0.5, beta=2.0)
    out = attack2_fixed_scaling(_day([2.0, -3.0, 0.0]), _prof(4.0), p).reported.readings
    assert out[0] == 1.0 and out[1] == -4.0 and out[2] == 0.0
    zero = attack2_fixed_scaling(_day([5.0]), _prof(), AttackParams(attack_id=2, alpha=0.0)).reported.readings
    assert zero[0] == 0.0


def test_attack3_examples():
    tr = np.random.default_rng(0).normal(0, 1, 24)
    day = DaySeries("C1", D, tr)
    degenerate = AttackParams(attack_id=3, alpha_range=(0.3, 0.3), beta_range=(1.5, 1.5))
    a3 = attack3_time_scaling(day, _prof(5.0), degenerate, np.random.default_rng(1)).reported.readings
    a2 = attack2_fixed_scaling(day, _prof(5.0), AttackParams(attack_id=2, alpha=0.3, beta=1.5)).reported.readings
    assert np.array_equal(a3, a2)
    one = attack3_time_scaling(_day([-1.0]), _prof(5.0), degenerate, np.random.default_rng(0)).reported.readings
    assert one[0] == -1.5
    r1 = attack3_time_scaling(day, _prof(), AttackParams(attack_id=3), np.random.default_rng(1)).record["alpha_t"]
    r2 = attack3_time_scaling(day, _prof(), AttackParams(attack_id=3), np.random.default_rng(2)).record["alpha_t"]
    assert not np.array_equal(r1, r2)


def test_attack4_hand_traces():
    ones = _Fixed(uniforms=[1.0, 1.0])
    out = attack4_history(_day([3.0, 2.0, 4.0]), _prof(5.0), AttackParams(attack_id=4), ones).reported.readings
    assert out[:3].tolist() == [3.0, 2.0, 2.0]
    ones = _Fixed(uniforms=[1.0, 1.0])
    out = attack4_history(_day([-1.0, -2.0, -0.5]), _prof(5.0), AttackParams(attack_id=4), ones).reported.readings
    assert out[:3].tolist() == [-1.0, -2.0, -2.0]
    first = attack4_history(_day([2.0]), _prof(5.0), AttackParams(attack_id=4), _Fixed(uniforms=[0.99, 1.01]))
    assert first.reported.readings[0] == pytest.approx(1.98, abs=1e-15)


def test_attack4_clamped_at_cmax():
    out = attack4_history(_day([-1.9, -2.0]), _prof(2.0), AttackParams(attack_id=4), _Fixed(uniforms=[0.97, 1.05]))
    assert out.reported.readings[1] == -2.0


day_values = st.lists(
    st.one_of(st.just(0.0), st.floats(-3.0, 5.0, allow_nan=False)), min_size=24, max_size=24
)


@given(day_values, st.integers(0, 10**6))
def test_production_matches_naive_reference(values, seed):
    tr = np.array(values)
    day, prof = DaySeries("C1", D, tr), _prof(3.0)
    p = {a: AttackParams(attack_id=a) for a in (1, 2, 3, 4)}
    got = attack1_intermittent(day, prof, p[1], np.random.default_rng(seed)).reported.readings.tolist()
    assert got == oracles.attack1_naive(tr, 3.0, p[1].b_range, p[1].p_range, p[1].min_window_hours, np.random.default_rng(seed))
    got = attack2_fixed_scaling(day, prof, p[2]).reported.readings.tolist()
    assert got == oracles.attack2_naive(tr, 3.0, p[2].alpha, p[2].beta)
    got = attack3_time_scaling(day, prof, p[3], np.random.default_rng(seed)).reported.readings.tolist()
    assert got == oracles.attack3_naive(tr, 3.0, p[3].alpha_range, p[3].beta_range, np.random.default_rng(seed))
    got = attack4_history(day, prof, p[4], np.random.default_rng(seed)).reported.readings.tolist()
    assert got == oracles.attack4_naive(tr, 3.0, p[4].m1_range, p[4].m2_range, np.random.default_rng(seed))


@given(day_values, st.integers(0, 10**6), st.sampled_from([1, 2, 3, 4]))
def test_financial_gain_and_capacity(values, seed, aid):
    fns = {1: attack1_intermittent, 2: attack2_fixed_scaling, 3: attack3_time_scaling, 4: attack4_history}
    tr = np.array(values)
    trace = fns[aid](DaySeries("C1", D, tr), _prof(3.0), AttackParams(attack_id=aid), np.random.default_rng(seed))
    assert gain_violations(trace, 3.0) == []
    assert bill(trace.reported.readings) <= bill(tr)


def test_gain_violations_detects_problems():
    day = _day([1.0, -1.0])
    from netmeter.attacks import AttackTrace

    bad = AttackTrace(day, _day([1.5, -9.0]), 2)
    problems = gain_violations(bad, 3.0)
    assert any("above truth" in p for p in problems) and any("-c_max" in p for p in problems)
    assert any("not strictly" in p for p in gain_violations(AttackTrace(day, day, 3), 3.0))


def test_bill():
    assert bill([1.0, -0.5, 2.0], tariff=2.0) == 5.0


def test_dataset_counts_order_and_determinism(small_world, tmp_path):
    _, profiles, days, _ = small_world
    subset = days[:25]
    traces = build_malicious_dataset(subset, profiles, seed=4)
    assert len(traces) == 4 * len(subset)
    assert [t.attack_id for t in traces[:4]] == [1, 2, 3, 4]
    assert all(t.original is subset[i // 4] for i, t in enumerate(traces))
    index = {p.customer_id: p for p in profiles}
    assert all(validate_day(t.reported, index[t.reported.customer_id]) == [] for t in traces)
    again = build_malicious_dataset(subset, profiles, seed=4)
    write_audit_log(tmp_path / "a.jsonl", traces)
    write_audit_log(tmp_path / "b.jsonl", again)
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    first = json.loads((tmp_path / "a.jsonl").read_text().splitlines()[0])
    assert set(first) == {"customer_id", "date", "attack_id", "true", "reported", "params"}


def test_one_day_gives_four_attacks(small_world):
    _, profiles, days, _ = small_world
    assert sorted(t.attack_id for t in build_malicious_dataset(days[:1], profiles)) == [1, 2, 3, 4]


def test_rng_substreams_are_keyed():
    a = attack_rng(0, "C1", D, 1).uniform(size=3)
    assert np.array_equal(a, attack_rng(0, "C1", D, 1).uniform(size=3))
    assert not np.array_equal(a, attack_rng(0, "C1", D, 3).uniform(size=3))
    assert not np.array_equal(a, attack_rng(0, "C2", D, 1).uniform(size=3))


def test_invariant_breach_aborts():
    # a benign day already below -c_max cannot yield an admissible trace
    day = DaySeries("C1", D, np.full(24, -4.0))
    with pytest.raises(AttackInvariantError):
        build_malicious_dataset([day], [_prof(3.0)])
