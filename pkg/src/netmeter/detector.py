"""Three-stage multi-source detector and the single-source baselines.

Stage 1 sees only the 24 net readings, stage 2 the weather sequence plus the
stage-1 verdict, stage 3 the trusted scalars (C_max, day, season) plus the
stage-2 verdict.  Stages are trained one after another; earlier stages are
frozen while later ones learn.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Sequence

import numpy as np

from .core_types import CMAX, DAY, IRRADIANCE, N_SLOTS, READINGS, SEASON, TEMPERATURE, FeatureSample, SampleSet
from .nn import (
    GRU,
    Conv1D,
    Dense,
    Flatten,
    History,
    Sequential,
    TrainConfig,
    TrainingDivergence,
    fit,
    load_checkpoint,
    no_grad,
    predict_proba,
    save_checkpoint,
)
from .nn.layers import Layer
from .prep import Normalizer, SplitConfig, split
from .rng import substream

log = logging.getLogger(__name__)

N_CLASSES = 2
FORWARD_MODES = ("probabilities", "penultimate")


class SpecError(ValueError):
    """A stage or baseline layer list does not match its reference table."""


class NormalizationError(ValueError):
    """Features were not scaled by the detector's normalizer."""


@dataclass(frozen=True)
class LayerSpec:
    kind: str  # dense | conv1d | gru | flatten
    units: int = 0
    activation: str = "linear"
    return_sequences: bool = False


def _dense(units, act):
    return LayerSpec("dense", units, act)


def _conv(filters, act):
    return LayerSpec("conv1d", filters, act)


def _gru(units, act, seq=False):
    return LayerSpec("gru", units, act, seq)


FLATTEN = LayerSpec("flatten")

# Hidden layers only; every model gets a 2-unit softmax head on top.
STAGE_LAYERS: dict[int, tuple[LayerSpec, ...]] = {
    1: (_conv(64, "relu"), _conv(64, "relu"), _gru(64, "sigmoid")),
    2: (_gru(128, "tanh", True), _gru(64, "tanh", True), _gru(128, "tanh")),
    3: (_dense(128, "relu"), _dense(128, "relu"), _dense(128, "relu"), _dense(64, "relu")),
}


class Architecture(str, Enum):
    MLP = "MLP"
    GRU = "GRU"
    CNN = "CNN"
    CNN_GRU = "CnnGru"


BASELINE_LAYERS: dict[Architecture, tuple[LayerSpec, ...]] = {
    Architecture.MLP: (
        _dense(128, "linear"),
        _dense(128, "sigmoid"),
        _dense(128, "sigmoid"),
        _dense(256, "sigmoid"),
        _dense(256, "relu"),
        _dense(256, "elu"),
    ),
    Architecture.GRU: (_gru(64, "sigmoid", True), _gru(128, "relu")),
    Architecture.CNN: (
        _conv(128, "relu"),
        _conv(64, "tanh"),
        FLATTEN,
        _dense(256, "sigmoid"),
        _dense(128, "elu"),
        _dense(128, "tanh"),
        _dense(256, "sigmoid"),
        _dense(512, "relu"),
        _dense(128, "tanh"),
    ),
    Architecture.CNN_GRU: (_conv(64, "relu"), _conv(32, "relu"), _gru(32, "relu")),
}

BASELINE_INPUT = {
    Architecture.MLP: (N_SLOTS,),
    Architecture.GRU: (N_SLOTS, 1),
    Architecture.CNN: (N_SLOTS, 1),
    Architecture.CNN_GRU: (N_SLOTS, 1),
}


@dataclass(frozen=True)
class StageSpec:
    stage_id: int
    layers: tuple[LayerSpec, ...]
    input_shape: tuple[int, ...]

    @classmethod
    def default(cls, stage_id: int, upstream_dim: int = N_CLASSES) -> "StageSpec":
        """Reference spec; ``upstream_dim`` is the width forwarded by the previous stage."""
        if stage_id not in STAGE_LAYERS:
            raise SpecError(f"stage_id must be 1, 2 or 3, got {stage_id}")
        shape = {1: (N_SLOTS, 1), 2: (N_SLOTS, 2 + upstream_dim), 3: (3 + upstream_dim,)}[stage_id]
        return cls(stage_id, STAGE_LAYERS[stage_id], shape)


@dataclass(frozen=True)
class BaselineSpec:
    architecture: Architecture
    layers: tuple[LayerSpec, ...]
    input_shape: tuple[int, ...]

    @classmethod
    def default(cls, architecture) -> "BaselineSpec":
        arch = Architecture(architecture)
        return cls(arch, BASELINE_LAYERS[arch], BASELINE_INPUT[arch])


def build_model(
    layers: Sequence[LayerSpec],
    input_shape: tuple[int, ...],
    name: str,
    seed: int = 0,
    init: str = "glorot",
) -> Sequential:
    """Instantiate hidden layers plus a softmax head, threading shapes through."""
    rng = substream(seed, "init", name)
    built: list[Layer] = []
    shape = (1,) + tuple(input_shape)
    for spec in layers:
        width = shape[-1]
        if spec.kind == "dense":
            if len(shape) != 2:
                raise SpecError(f"{name}: dense layer needs flat input, got {shape[1:]}")
            layer = Dense(width, spec.units, spec.activation, rng=rng, init=init)
        elif spec.kind == "conv1d":
            if len(shape) != 3:
                raise SpecError(f"{name}: conv1d needs sequence input, got {shape[1:]}")
            layer = Conv1D(width, spec.units, 3, spec.activation, rng=rng, init=init)
        elif spec.kind == "gru":
            if len(shape) != 3:
                raise SpecError(f"{name}: gru needs sequence input, got {shape[1:]}")
            layer = GRU(width, spec.units, spec.activation, spec.return_sequences, rng=rng, init=init)
        elif spec.kind == "flatten":
            layer = Flatten()
        else:
            raise SpecError(f"{name}: unknown layer kind {spec.kind!r}")
        built.append(layer)
        shape = layer.output_shape(shape)
    if len(shape) != 2:
        raise SpecError(f"{name}: last hidden layer must produce a flat vector, got {shape[1:]}")
    built.append(Dense(shape[-1], N_CLASSES, "softmax", rng=rng, init=init))
    return Sequential(built, input_shape, name)


def build_stage(spec: StageSpec, seed: int = 0, init: str = "glorot") -> Sequential:
    if spec.stage_id not in STAGE_LAYERS:
        raise SpecError(f"stage_id must be 1, 2 or 3, got {spec.stage_id}")
    if tuple(spec.layers) != STAGE_LAYERS[spec.stage_id]:
        raise SpecError(f"stage {spec.stage_id} layers do not match the reference table")
    shape = tuple(spec.input_shape)
    expected_rank = 1 if spec.stage_id == 3 else 2
    if len(shape) != expected_rank or (expected_rank == 2 and shape[0] != N_SLOTS):
        raise SpecError(f"stage {spec.stage_id}: bad input shape {shape}")
    if spec.stage_id == 1 and shape != (N_SLOTS, 1):
        raise SpecError(f"stage 1 input must be ({N_SLOTS}, 1), got {shape}")
    # later stages see their own inputs plus at least the 2 upstream probabilities
    own = {2: 2, 3: 3}.get(spec.stage_id, 0)
    if spec.stage_id > 1 and shape[-1] < own + N_CLASSES:
        raise SpecError(f"stage {spec.stage_id} input needs {own} features plus the upstream output, got {shape}")
    return build_model(spec.layers, shape, f"stage{spec.stage_id}", seed, init)


def build_baseline(spec: BaselineSpec, seed: int = 0, init: str = "glorot") -> Sequential:
    arch = Architecture(spec.architecture)
    if tuple(spec.layers) != BASELINE_LAYERS[arch]:
        raise SpecError(f"{arch.value} layers do not match the reference table")
    if tuple(spec.input_shape) != BASELINE_INPUT[arch]:
        raise SpecError(f"{arch.value} input must be {BASELINE_INPUT[arch]}, got {tuple(spec.input_shape)}")
    return build_model(spec.layers, spec.input_shape, arch.value, seed, init)


# ---------------------------------------------------------------------------
# input assembly


def readings_input(X: np.ndarray, flat: bool = False) -> np.ndarray:
    r = X[:, READINGS]
    return r if flat else r[:, :, None]


def stage2_input(X: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """(N, 24, 2 + k): irradiance_t, temperature_t, then the stage-1 output on every step."""
    n = len(X)
    up = np.broadcast_to(upstream[:, None, :], (n, N_SLOTS, upstream.shape[1]))
    return np.concatenate([X[:, IRRADIANCE, None], X[:, TEMPERATURE, None], up], axis=2)


def stage3_input(X: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    return np.concatenate([X[:, [CMAX, DAY, SEASON]], upstream], axis=1)


def _forward(model: Sequential, x: np.ndarray, mode: str, batch_size: int = 1024) -> np.ndarray:
    if mode == "probabilities":
        return predict_proba(model, x, batch_size)
    with no_grad():
        parts = [model.features(x[i : i + batch_size]).data for i in range(0, len(x), batch_size)]
    return np.concatenate(parts)


# ---------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class DetectorConfig:
    stage_train: tuple[TrainConfig, TrainConfig, TrainConfig] = (TrainConfig(), TrainConfig(), TrainConfig())
    forward: str = "probabilities"
    val_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.forward not in FORWARD_MODES:
            raise ValueError(f"forward must be one of {FORWARD_MODES}")
        if not 0 <= self.val_fraction < 1:
            raise ValueError("val_fraction must be in [0, 1)")


@dataclass
class TrainedDetector:
    stages: dict[int, Sequential]
    forward: str = "probabilities"
    normalizer: Normalizer | None = None
    histories: dict[int, History] = field(default_factory=dict)

    @property
    def norm_fingerprint(self) -> str | None:
        return self.normalizer.fingerprint if self.normalizer is not None else None

    def stage_inputs(self, X: np.ndarray, upto: int) -> list[np.ndarray]:
        """Inputs of stages 1..upto for feature matrix X."""
        x1 = readings_input(X)
        inputs = [x1]
        if upto >= 2:
            inputs.append(stage2_input(X, _forward(self.stages[1], x1, self.forward)))
        if upto >= 3:
            inputs.append(stage3_input(X, _forward(self.stages[2], inputs[1], self.forward)))
        return inputs

    def predict_proba(self, X: np.ndarray, stage: int = 3) -> np.ndarray:
        if stage not in (1, 2, 3):
            raise ValueError(f"stage must be 1, 2 or 3, got {stage}")
        x = self.stage_inputs(np.asarray(X, dtype=np.float64), stage)[-1]
        return predict_proba(self.stages[stage], x)

    def save(self, prefix, extra: dict | None = None) -> None:
        meta = {
            "forward": self.forward,
            "normalizer": self.normalizer.to_dict() if self.normalizer is not None else None,
            "histories": {str(k): _history_dict(h) for k, h in self.histories.items()},
        }
        meta.update(extra or {})
        save_checkpoint(prefix, {f"stage{k}": m for k, m in sorted(self.stages.items())}, meta)

    @classmethod
    def load(cls, prefix) -> "TrainedDetector":
        models, extra = load_checkpoint(prefix)
        stages = {int(k[5:]): m for k, m in models.items() if k.startswith("stage")}
        norm = extra.get("normalizer")
        hist = {int(k): History(**v) for k, v in extra.get("histories", {}).items()}
        return cls(stages, extra.get("forward", "probabilities"), Normalizer.from_dict(norm) if norm else None, hist)


def _history_dict(h: History) -> dict:
    return {
        "train_loss": list(h.train_loss),
        "val_loss": list(h.val_loss),
        "best_epoch": h.best_epoch,
        "stopped_early": h.stopped_early,
    }


def validation_split(train: SampleSet, fraction: float, seed: int) -> tuple[SampleSet, SampleSet | None]:
    if fraction <= 0:
        return train, None
    fit_part, val_part = split(train, SplitConfig(1.0 - fraction, True, seed))
    return fit_part, val_part


def _stage_train_config(cfg: TrainConfig, seed: int, name: str) -> TrainConfig:
    return replace(cfg, seed=int(substream(seed, "shuffle", name).integers(2**62)))


def train_model(
    model: Sequential,
    x: np.ndarray,
    y: np.ndarray,
    config: TrainConfig,
    seed: int,
    x_val: np.ndarray | None = None,
    y_val: np.ndarray | None = None,
) -> History:
    return fit(model, x, y, _stage_train_config(config, seed, model.name), x_val, y_val)


def train_pipeline(
    train: SampleSet,
    config: DetectorConfig = DetectorConfig(),
    normalizer: Normalizer | None = None,
    on_divergence=None,
) -> TrainedDetector:
    """Freeze-train stage 1, then 2, then 3.

    ``on_divergence(detector)`` is called with the partially trained detector
    (diverged stage rolled back to its last finite weights) before the
    TrainingDivergence propagates.
    """
    if normalizer is not None and train.norm_fingerprint != normalizer.fingerprint:
        raise NormalizationError("training set was not scaled by the supplied normalizer")
    fit_set, val_set = validation_split(train, config.val_fraction, config.seed)
    det = TrainedDetector({}, config.forward, normalizer)
    Xf, yf = fit_set.X, fit_set.y
    Xv = val_set.X if val_set is not None else None
    yv = val_set.y if val_set is not None else None
    upstream_dim = N_CLASSES
    fit_in = [readings_input(Xf)]
    val_in = [readings_input(Xv)] if Xv is not None else [None]
    for stage_id in (1, 2, 3):
        model = build_stage(StageSpec.default(stage_id, upstream_dim), config.seed)
        if stage_id > 1:
            prev = det.stages[stage_id - 1]
            assemble = stage2_input if stage_id == 2 else stage3_input
            fit_in.append(assemble(Xf, _forward(prev, fit_in[-1], config.forward)))
            val_in.append(assemble(Xv, _forward(prev, val_in[-1], config.forward)) if Xv is not None else None)
        det.stages[stage_id] = model
        log.info("training stage %d on %d samples (%d parameters)", stage_id, len(yf), model.n_params)
        try:
            det.histories[stage_id] = train_model(
                model, fit_in[-1], yf, config.stage_train[stage_id - 1], config.seed, val_in[-1], yv
            )
        except TrainingDivergence as exc:
            if exc.last_good is not None:
                model.set_flat(exc.last_good)
            if on_divergence is not None:
                on_divergence(det)
            raise
        if config.forward == "penultimate":
            upstream_dim = model.layers[-1].in_features
    return det


def train_baseline(
    architecture,
    train: SampleSet,
    config: TrainConfig = TrainConfig(),
    val_fraction: float = 0.1,
    seed: int = 0,
) -> tuple[Sequential, History]:
    arch = Architecture(architecture)
    model = build_baseline(BaselineSpec.default(arch), seed)
    fit_set, val_set = validation_split(train, val_fraction, seed)
    flat = arch is Architecture.MLP
    xv = readings_input(val_set.X, flat) if val_set is not None else None
    yv = val_set.y if val_set is not None else None
    log.info("training %s baseline (%d parameters)", arch.value, model.n_params)
    hist = train_model(model, readings_input(fit_set.X, flat), fit_set.y, config, seed, xv, yv)
    return model, hist


def baseline_proba(model: Sequential, X: np.ndarray) -> np.ndarray:
    flat = len(model.input_shape) == 1
    return predict_proba(model, readings_input(np.asarray(X, dtype=np.float64), flat))


# ---------------------------------------------------------------------------
# inference


def _check_fingerprint(detector: TrainedDetector, fingerprint: str | None) -> None:
    expected = detector.norm_fingerprint
    if expected is not None and fingerprint != expected:
        got = "unnormalized features" if fingerprint is None else f"normalizer {fingerprint}"
        raise NormalizationError(f"detector expects features scaled by normalizer {expected}, got {got}")


def predict(
    detector: TrainedDetector,
    samples: SampleSet | FeatureSample,
    stage: int = 3,
    fingerprint: str | None = None,
    normalize: bool = False,
):
    """Class probabilities (p_benign, p_malicious).

    A SampleSet carries its own normalizer fingerprint; a lone FeatureSample
    needs ``fingerprint``.  With ``normalize=True`` raw features are scaled by
    the detector's embedded normalizer first.  Stage 3 is the operational
    output; stages 1 and 2 exist for comparison.
    """
    single = isinstance(samples, FeatureSample)
    if single:
        X = np.asarray(samples.features, dtype=np.float64)[None, :]
    else:
        X, fingerprint = samples.X, samples.norm_fingerprint
    if normalize and fingerprint is None and detector.normalizer is not None:
        X = detector.normalizer.transform_array(X)
        fingerprint = detector.norm_fingerprint
    _check_fingerprint(detector, fingerprint)
    probs = detector.predict_proba(X, stage)
    if single:
        return float(probs[0, 0]), float(probs[0, 1])
    return probs
