"""Small reverse-mode autodiff engine with the layers the detectors need."""

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .layers import GRU, Conv1D, Dense, Flatten, Layer, Sequential
from .optim import Adam, adam_step
from .tensor import (
    GraphError,
    NonFiniteError,
    Tensor,
    activation,
    concat,
    conv1d,
    cross_entropy,
    elu,
    gru,
    no_grad,
    relu,
    sigmoid,
    softmax,
    softmax_cross_entropy,
    tanh,
)
from .train import History, TrainConfig, TrainingDivergence, fit, predict_proba

__all__ = [
    "Adam",
    "CheckpointError",
    "Conv1D",
    "Dense",
    "Flatten",
    "GRU",
    "GraphError",
    "History",
    "Layer",
    "NonFiniteError",
    "Sequential",
    "Tensor",
    "TrainConfig",
    "TrainingDivergence",
    "activation",
    "adam_step",
    "concat",
    "conv1d",
    "cross_entropy",
    "elu",
    "fit",
    "gru",
    "load_checkpoint",
    "no_grad",
    "predict_proba",
    "relu",
    "save_checkpoint",
    "sigmoid",
    "softmax",
    "softmax_cross_entropy",
    "tanh",
]
