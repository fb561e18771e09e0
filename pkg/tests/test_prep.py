import datetime as dt

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from netmeter.attacks import build_malicious_dataset
from netmeter.core_types import (
    CMAX,
    DAY,
    SEASON,
    CustomerProfile,
    DaySeries,
    Label,
    SampleSet,
    encode_day_season,
)
from netmeter.prep import (
    AdasynConfig,
    Normalizer,
    PrepError,
    SplitConfig,
    adasyn,
    adasyn_detail,
    assemble_samples,
    fit_transform_normalize,
    knn_indices,
    split,
)


def _set(X, y):
    X = np.asarray(X, float)
    return SampleSet(X, np.asarray(y), np.full(len(y), "Synthetic", dtype=object))


def test_assemble_layout_and_labels(small_world):
    _, profiles, days, weather = small_world
    benign = days[:5]
    attacked = build_malicious_dataset(benign, profiles, seed=1)
    s = assemble_samples(list(benign) + attacked, weather, profiles)
    assert len(s) == 25
    assert s.y.tolist() == [0] * 5 + [1] * 20
    assert s.provenance[5] == "AttackInjected(1)" and s.provenance[0] == "Synthetic"
    wx = {w.key: w for w in weather}
    prof = {p.customer_id: p for p in profiles}
    for i, d in enumerate(benign):
        w = wx[(prof[d.customer_id].location_id, d.date)]
        assert np.array_equal(s.X[i, :24], d.readings)
        assert np.array_equal(s.X[i, 24:48], w.irradiance)
        assert all(s.X[i, 48 + h] == w.temperature[h] for h in range(24))
        assert s.X[i, CMAX] == prof[d.customer_id].c_max
        assert tuple(s.X[i, [DAY, SEASON]]) == encode_day_season(d.date)


def test_assemble_missing_weather_names_date(small_world):
    _, profiles, days, weather = small_world
    late = DaySeries(days[0].customer_id, dt.date(2030, 5, 17), days[0].readings)
    with pytest.raises(PrepError, match="2030-05-17"):
        assemble_samples([late], weather, profiles)


def test_split_single_stratum_nine():
    s = _set(np.arange(9 * 75).reshape(9, 75), [0] * 9)
    train, test = split(s, SplitConfig(seed=1))
    assert (len(train), len(test)) == (6, 3)
    assert sorted(np.concatenate([train.X[:, 0], test.X[:, 0]]).tolist()) == sorted(s.X[:, 0].tolist())
    again = split(s, SplitConfig(seed=1))
    assert np.array_equal(train.X, again[0].X)


def test_split_counts_at_paper_scale():
    y = np.array([0] * 33_976 + [1] * 135_904)
    s = SampleSet(np.zeros((len(y), 75)), y, np.full(len(y), "Real", dtype=object))
    train, test = split(s)
    assert (len(train), len(test)) == (113_254, 56_626)
    assert train.counts()[Label.BENIGN] == 22_651 and train.counts()[Label.MALICIOUS] == 90_603


def test_split_errors():
    with pytest.raises(PrepError):
        split(_set(np.zeros((5, 75)), [0, 0, 0, 1, 1]))
    with pytest.raises(ValueError):
        SplitConfig(train_fraction=1.0)


def test_normalizer_examples():
    X = np.zeros((2, 75))
    X[:, 0] = [-2.0, 2.0]
    X[:, 1] = [0.0, 2.0]
    X[:, 2] = 7.0
    n = Normalizer.fit(X)
    probe = np.zeros((1, 75))
    probe[0, :3] = [0.0, 3.0, 7.0]
    out = n.transform_array(probe)
    assert out[0, 0] == 0.5 and out[0, 1] == 1.5 and out[0, 2] == 0.0
    assert Normalizer.from_dict(n.to_dict()).fingerprint == n.fingerprint


def test_normalizer_rejects_double_transform():
    s = _set(np.random.default_rng(0).normal(size=(4, 75)), [0, 1, 0, 1])
    tr, _, n = fit_transform_normalize(s, s)
    with pytest.raises(PrepError):
        n.transform(tr)


@given(st.integers(0, 10**6), st.floats(-50, 50))
def test_normalizer_depends_on_train_only(seed, shift):
    rng = np.random.default_rng(seed)
    train, test = _set(rng.normal(size=(20, 75)), [0, 1] * 10), _set(rng.normal(size=(8, 75)), [0, 1] * 4)
    moved = _set(test.X + shift, test.y)
    a = fit_transform_normalize(train, test)
    b = fit_transform_normalize(train, moved)
    assert a[2].fingerprint == b[2].fingerprint
    assert np.array_equal(a[0].X, b[0].X)


def _imbalanced(n_min, n_maj, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(0, 1, (n_min + n_maj, 75))
    X[:, DAY] = rng.integers(0, 7, len(X)) / 6
    X[:, SEASON] = rng.integers(0, 4, len(X)) / 3
    y = np.array([0] * n_min + [1] * n_maj)
    return _set(X, y)


def test_adasyn_balance_arithmetic():
    train = _imbalanced(10, 40)
    out = adasyn(train)
    assert len(out) - len(train) == 30
    assert out.counts() == {Label.BENIGN: 40, Label.MALICIOUS: 40}
    assert np.array_equal(out.X[:50], train.X) and np.array_equal(out.y[:50], train.y)
    assert set(out.provenance[50:]) == {"AdasynGenerated"}
    half = adasyn(train, AdasynConfig(target_ratio=0.5))
    assert len(half) - len(train) == 15


@given(st.integers(0, 10**6))
def test_adasyn_betweenness_before_rounding(seed):
    train = _imbalanced(12, 30, seed)
    d = adasyn_detail(train, AdasynConfig(seed=seed))
    lo = np.minimum(train.X[d.base], train.X[d.partner])
    hi = np.maximum(train.X[d.base], train.X[d.partner])
    assert np.all(d.raw >= lo - 1e-12) and np.all(d.raw <= hi + 1e-12)
    assert np.all(train.y[d.partner] == d.minority_label)
    assert np.all((d.lam >= 0) & (d.lam < 1))
    out = adasyn(train, AdasynConfig(seed=seed))
    assert set(np.unique(out.X[:, DAY])) <= set(np.unique(train.X[:, DAY]))
    assert set(np.unique(out.X[:, SEASON])) <= set(np.unique(train.X[:, SEASON]))


def test_adasyn_zero_weight_point():
    # a tight minority cluster far from the rest gets no allocation
    rng = np.random.default_rng(0)
    X = np.vstack([rng.normal(0, 0.01, (6, 75)) + 10, rng.normal(0, 1, (6, 75)), rng.normal(0, 1, (30, 75))])
    y = np.array([0] * 12 + [1] * 30)
    d = adasyn_detail(_set(X, y), AdasynConfig(k_neighbors=5))
    assert np.all(d.weights[:6] == 0) and np.all(d.allocation[:6] == 0)
    assert d.allocation.sum() == 18


def test_adasyn_errors():
    with pytest.raises(PrepError):
        adasyn(_imbalanced(5, 20))
    with pytest.raises(PrepError):
        adasyn(_set(np.zeros((10, 75)), [0] * 10))
    with pytest.raises(ValueError):
        AdasynConfig(k_neighbors=0)
    with pytest.raises(ValueError):
        AdasynConfig(target_ratio=0.0)


def test_knn_matches_brute_force():
    rng = np.random.default_rng(4)
    P = rng.normal(size=(40, 5))
    got = knn_indices(P, P, 3, exclude=np.arange(40), chunk=7)
    for i in range(40):
        d = np.linalg.norm(P - P[i], axis=1)
        d[i] = np.inf
        assert got[i].tolist() == np.argsort(d, kind="stable")[:3].tolist()
