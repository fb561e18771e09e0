"""Mini-batch training with Adam and early stopping on validation loss."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .layers import Sequential
from .optim import Adam
from .tensor import NonFiniteError, Tensor, no_grad, softmax_array, softmax_cross_entropy

log = logging.getLogger(__name__)


class TrainingDivergence(RuntimeError):
    """Loss became non-finite.  ``last_good`` holds the last finite parameter vector."""

    def __init__(self, message: str, last_good: np.ndarray | None = None):
        super().__init__(message)
        self.last_good = last_good


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    max_epochs: int = 100
    patience: int = 10
    min_delta: float = 0.0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    val_fraction: float = 0.1
    seed: int = 0
    restore_best: bool = True

    def __post_init__(self):
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ValueError("batch_size, max_epochs and patience must be >= 1")
        if not 0 <= self.val_fraction < 1:
            raise ValueError("val_fraction must be in [0, 1)")


@dataclass
class History:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = -1
    stopped_early: bool = False


def one_hot(y: np.ndarray, n_classes: int = 2) -> np.ndarray:
    out = np.zeros((len(y), n_classes))
    out[np.arange(len(y)), np.asarray(y, dtype=np.int64)] = 1.0
    return out


def predict_proba(model: Sequential, X: np.ndarray, batch_size: int = 1024) -> np.ndarray:
    with no_grad():
        parts = [softmax_array(model.logits(X[i : i + batch_size]).data) for i in range(0, len(X), batch_size)]
    return np.concatenate(parts) if parts else np.empty((0, model.output_dim))


def evaluate_loss(model: Sequential, X: np.ndarray, y: np.ndarray, batch_size: int = 1024) -> float:
    """Mean cross-entropy (log-softmax form) over the set."""
    total = 0.0
    with no_grad():
        for i in range(0, len(X), batch_size):
            yb = one_hot(y[i : i + batch_size], model.output_dim)
            total += float(softmax_cross_entropy(model.logits(X[i : i + batch_size]), yb).data) * len(yb)
    return total / max(len(X), 1)


def fit(
    model: Sequential,
    X: np.ndarray,
    y: np.ndarray,
    config: TrainConfig = TrainConfig(),
    X_val: np.ndarray | None = None,
    y_val: np.ndarray | None = None,
) -> History:
    """Train in place.  Batches are drawn from a seeded permutation each epoch."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([config.seed, 0x7EA1])))
    opt = Adam(model.params(), config.lr, config.beta1, config.beta2, config.eps)
    hist = History()
    best = np.inf
    best_params = model.get_flat()
    bad_epochs = 0
    n = len(X)
    for epoch in range(config.max_epochs):
        order = rng.permutation(n)
        running = 0.0
        for lo in range(0, n, config.batch_size):
            idx = order[lo : lo + config.batch_size]
            model.zero_grad()
            try:
                loss = softmax_cross_entropy(model.logits(Tensor(X[idx])), one_hot(y[idx], model.output_dim))
            except NonFiniteError as exc:
                raise TrainingDivergence(f"{model.name}: epoch {epoch}, batch at {lo}: {exc}", best_params) from exc
            value = float(loss.data)
            if not np.isfinite(value):
                raise TrainingDivergence(
                    f"{model.name}: non-finite loss at epoch {epoch}, batch at {lo}", best_params
                )
            loss.backward()
            opt.step()
            running += value * len(idx)
        hist.train_loss.append(running / n)
        if X_val is not None and len(X_val):
            val = evaluate_loss(model, X_val, y_val)
        else:
            val = hist.train_loss[-1]
        hist.val_loss.append(val)
        log.info("%s epoch %d: train %.5f val %.5f", model.name, epoch + 1, hist.train_loss[-1], val)
        if not np.isfinite(val):
            raise TrainingDivergence(f"{model.name}: non-finite validation loss at epoch {epoch}", best_params)
        if val < best - config.min_delta:
            best = val
            best_params = model.get_flat()
            hist.best_epoch = epoch
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= config.patience:
                hist.stopped_early = True
                break
    if config.restore_best:
        model.set_flat(best_params)
    return hist
