import numpy as np
import pytest

import netmeter.detector as detector_mod
from netmeter.core_types import FeatureSample, Label, SampleSet
from netmeter.detector import (
    BASELINE_LAYERS,
    STAGE_LAYERS,
    Architecture,
    BaselineSpec,
    DetectorConfig,
    NormalizationError,
    SpecError,
    StageSpec,
    TrainedDetector,
    baseline_proba,
    build_baseline,
    build_stage,
    predict,
    train_model,
    train_pipeline,
)
from netmeter.nn import TrainConfig
from netmeter.prep import Normalizer


def _conv_params(cin, f, k=3):
    return k * cin * f + f


def _gru_params(i, h):
    # input and recurrent kernels plus two bias vectors (reset applied after the matmul)
    return 3 * h * (i + h) + 2 * 3 * h


def _dense_params(i, o):
    return i * o + o


def test_stage1_parameter_count_closed_form():
    expected = _conv_params(1, 64) + _conv_params(64, 64) + _gru_params(64, 64) + _dense_params(64, 2)
    assert build_stage(StageSpec.default(1)).n_params == expected == 37_698


def test_stage2_and_stage3_parameter_counts():
    s2 = _gru_params(4, 128) + _gru_params(128, 64) + _gru_params(64, 128) + _dense_params(128, 2)
    s3 = _dense_params(5, 128) + 2 * _dense_params(128, 128) + _dense_params(128, 64) + _dense_params(64, 2)
    assert build_stage(StageSpec.default(2)).n_params == s2
    assert build_stage(StageSpec.default(3)).n_params == s3


def test_stage2_input_arity():
    model = build_stage(StageSpec.default(2))
    assert model(np.zeros((1, 24, 4))).shape == (1, 2)
    with pytest.raises(ValueError):
        model(np.zeros((1, 24, 3)))
    with pytest.raises(SpecError):
        build_stage(StageSpec(2, STAGE_LAYERS[2], (24, 3)))
    assert StageSpec.default(2, upstream_dim=64).input_shape == (24, 66)


def test_stage_table_mismatch_rejected():
    with pytest.raises(SpecError):
        build_stage(StageSpec(1, STAGE_LAYERS[1][:2], (24, 1)))
    with pytest.raises(SpecError):
        build_stage(StageSpec(1, STAGE_LAYERS[1], (24, 2)))
    with pytest.raises(SpecError):
        StageSpec.default(4)
    with pytest.raises(SpecError):
        build_baseline(BaselineSpec(Architecture.GRU, BASELINE_LAYERS[Architecture.CNN_GRU], (24, 1)))


def test_zero_weights_give_half():
    m = build_stage(StageSpec.default(3), init="zeros")
    assert m(np.zeros((1, 5))).data.tolist() == [[0.5, 0.5]]
    det = TrainedDetector({k: build_stage(StageSpec.default(k), init="zeros") for k in (1, 2, 3)})
    sample = FeatureSample(np.random.default_rng(0).uniform(size=75), Label.BENIGN, "Synthetic")
    assert predict(det, sample) == (0.5, 0.5)


def test_baseline_tables():
    dense = [l for l in BASELINE_LAYERS[Architecture.MLP] if l.kind == "dense"]
    mlp = build_baseline(BaselineSpec.default("MLP"))
    # six hidden dense layers and the softmax output: seven dense layers in all
    assert len(dense) == 6 and sum(c["kind"] == "dense" for c in mlp.config()["layers"]) == 7
    assert [l.units for l in dense] == [128, 128, 128, 256, 256, 256]
    assert [l.activation for l in dense] == ["linear", "sigmoid", "sigmoid", "sigmoid", "relu", "elu"]
    assert [l.units for l in BASELINE_LAYERS[Architecture.CNN_GRU]] == [64, 32, 32]
    assert [l.units for l in BASELINE_LAYERS[Architecture.GRU]] == [64, 128]
    cnn = [l for l in BASELINE_LAYERS[Architecture.CNN] if l.kind != "flatten"]
    assert [(l.kind, l.units) for l in cnn[:2]] == [("conv1d", 128), ("conv1d", 64)] and len(cnn) == 8
    for arch in Architecture:
        m = build_baseline(BaselineSpec.default(arch))
        p = baseline_proba(m, np.random.default_rng(0).uniform(size=(3, 75)))
        assert p.shape == (3, 2) and np.allclose(p.sum(axis=1), 1.0, atol=1e-12)


def _toy(n=256, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(0.0, 0.2, (n, 75))
    y = np.arange(n) % 2
    X[y == 1, :24] *= 4.0
    return SampleSet(X, y, np.full(n, "Synthetic", dtype=object))


def test_stage1_loss_decreases_on_toy_set():
    data = _toy()
    model = build_stage(StageSpec.default(1), seed=1)
    hist = train_model(model, data.X[:, :24, None], data.y, TrainConfig(batch_size=32, max_epochs=5, val_fraction=0.0), 1)
    losses = hist.train_loss
    assert len(losses) == 5 and all(b < a for a, b in zip(losses, losses[1:]))


def _small_config(seed=0):
    tc = TrainConfig(batch_size=64, max_epochs=2, patience=2)
    return DetectorConfig((tc, tc, tc), val_fraction=0.2, seed=seed)


def test_freeze_and_determinism(monkeypatch):
    snapshots = {}
    real = detector_mod.train_model

    def recording(model, *args, **kw):
        hist = real(model, *args, **kw)
        snapshots[model.name] = model.get_flat().copy()
        return hist

    monkeypatch.setattr(detector_mod, "train_model", recording)
    data = _toy(160)
    det = train_pipeline(data, _small_config())
    assert set(snapshots) == {"stage1", "stage2", "stage3"}
    assert np.array_equal(det.stages[1].get_flat(), snapshots["stage1"])
    assert np.array_equal(det.stages[2].get_flat(), snapshots["stage2"])
    again = train_pipeline(data, _small_config())
    assert np.array_equal(det.predict_proba(data.X), again.predict_proba(data.X))


def test_penultimate_forwarding():
    tc = TrainConfig(batch_size=64, max_epochs=1)
    det = train_pipeline(_toy(96), DetectorConfig((tc, tc, tc), forward="penultimate", val_fraction=0.0))
    assert det.stages[2].input_shape == (24, 66) and det.stages[3].input_shape == (131,)
    p = det.predict_proba(_toy(10, seed=5).X)
    assert np.allclose(p.sum(axis=1), 1.0, atol=1e-9)


def _random_detector(normalizer=None):
    return TrainedDetector({k: build_stage(StageSpec.default(k), seed=k) for k in (1, 2, 3)}, normalizer=normalizer)


def test_checkpoint_round_trip(tmp_path):
    X = np.random.default_rng(0).uniform(size=(100, 75))
    norm = Normalizer.fit(np.random.default_rng(1).normal(size=(20, 75)))
    det = _random_detector(norm)
    det.save(tmp_path / "det")
    back = TrainedDetector.load(tmp_path / "det")
    assert back.norm_fingerprint == norm.fingerprint
    for stage in (1, 2, 3):
        assert np.abs(back.predict_proba(X, stage) - det.predict_proba(X, stage)).max() <= 1e-12


def test_predict_purity_fingerprint_and_sums():
    raw = np.random.default_rng(2).normal(size=(30, 75))
    norm = Normalizer.fit(raw)
    det = _random_detector(norm)
    before = [det.stages[k].get_flat().copy() for k in (1, 2, 3)]
    scaled = norm.transform(SampleSet(raw, np.zeros(30, dtype=int), np.full(30, "Real", dtype=object)))
    probs = predict(det, scaled)
    assert probs.shape == (30, 2) and np.abs(probs.sum(axis=1) - 1).max() <= 1e-9
    for stage in (1, 2):
        assert np.abs(predict(det, scaled, stage=stage).sum(axis=1) - 1).max() <= 1e-9
    assert all(np.array_equal(b, det.stages[k].get_flat()) for b, k in zip(before, (1, 2, 3)))
    unscaled = SampleSet(raw, np.zeros(30, dtype=int), np.full(30, "Real", dtype=object))
    with pytest.raises(NormalizationError):
        predict(det, unscaled)
    with pytest.raises(NormalizationError):
        predict(det, scaled[0], fingerprint="0" * 16)
    assert np.allclose(predict(det, unscaled, normalize=True), probs, atol=1e-12)
    p0 = predict(det, scaled[0], fingerprint=norm.fingerprint)
    assert p0 == pytest.approx(tuple(probs[0]), abs=1e-12)


def test_pipeline_rejects_foreign_normalizer():
    data = _toy(40)
    with pytest.raises(NormalizationError):
        train_pipeline(data, _small_config(), normalizer=Normalizer.fit(data.X))
