"""Trainable layers and a sequential container."""

from __future__ import annotations

import numpy as np

from .tensor import (
    ACTIVATIONS,
    Tensor,
    activation,
    check_finite,
    conv1d,
    gru,
    reshape,
    softmax,
)

_ALL_ACTIVATIONS = set(ACTIVATIONS) | {"softmax"}


def _check_activation(name: str) -> str:
    if name not in _ALL_ACTIVATIONS:
        raise ValueError(f"unknown activation {name!r}")
    return name


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, shape)


def orthogonal(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))
    return q if rows >= cols else q.T


class Layer:
    kind = "layer"

    def params(self) -> list[Tensor]:
        return []

    def __call__(self, x: Tensor) -> Tensor:
        raise NotImplementedError

    def config(self) -> dict:
        return {"kind": self.kind}

    def output_shape(self, input_shape: tuple[int, ...]) -> tuple[int, ...]:
        raise NotImplementedError


class Dense(Layer):
    kind = "dense"

    def __init__(self, in_features: int, units: int, activation: str = "linear", rng=None, init: str = "glorot"):
        self.in_features, self.units = in_features, units
        self.activation = _check_activation(activation)
        if init == "zeros":
            w = np.zeros((in_features, units))
        else:
            w = glorot_uniform(rng, (in_features, units), in_features, units)
        self.kernel = Tensor(w, requires_grad=True, name="kernel")
        self.bias = Tensor(np.zeros(units), requires_grad=True, name="bias")

    def params(self):
        return [self.kernel, self.bias]

    def pre_activation(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_features:
            raise ValueError(f"dense expects (..., {self.in_features}) input, got {x.shape}")
        return x @ self.kernel + self.bias

    def __call__(self, x):
        return check_finite(activation(self.pre_activation(x), self.activation), "dense")

    def config(self):
        return {"kind": self.kind, "in_features": self.in_features, "units": self.units, "activation": self.activation}

    def output_shape(self, input_shape):
        return input_shape[:-1] + (self.units,)


class Conv1D(Layer):
    kind = "conv1d"

    def __init__(self, in_channels: int, filters: int, kernel_size: int = 3, activation: str = "linear", rng=None, init: str = "glorot"):
        self.in_channels, self.filters, self.kernel_size = in_channels, filters, kernel_size
        self.activation = _check_activation(activation)
        shape = (kernel_size, in_channels, filters)
        if init == "zeros":
            w = np.zeros(shape)
        else:
            w = glorot_uniform(rng, shape, kernel_size * in_channels, kernel_size * filters)
        self.kernel = Tensor(w, requires_grad=True, name="kernel")
        self.bias = Tensor(np.zeros(filters), requires_grad=True, name="bias")

    def params(self):
        return [self.kernel, self.bias]

    def __call__(self, x):
        if x.ndim != 3 or x.shape[-1] != self.in_channels:
            raise ValueError(f"conv1d expects (batch, steps, {self.in_channels}) input, got {x.shape}")
        return check_finite(activation(conv1d(x, self.kernel, self.bias), self.activation), "conv1d")

    def config(self):
        return {
            "kind": self.kind,
            "in_channels": self.in_channels,
            "filters": self.filters,
            "kernel_size": self.kernel_size,
            "activation": self.activation,
        }

    def output_shape(self, input_shape):
        return input_shape[:-1] + (self.filters,)


class GRU(Layer):
    """GRU layer; ``activation`` is the candidate-state activation (gates are sigmoid)."""

    kind = "gru"

    def __init__(self, input_size: int, units: int, activation: str = "tanh", return_sequences: bool = False, rng=None, init: str = "glorot"):
        if activation == "softmax":
            raise ValueError("softmax is not a valid candidate activation")
        self.input_size, self.units = input_size, units
        self.activation = _check_activation(activation)
        self.return_sequences = return_sequences
        if init == "zeros":
            wx = np.zeros((input_size, 3 * units))
            wh = np.zeros((units, 3 * units))
        else:
            wx = glorot_uniform(rng, (input_size, 3 * units), input_size, 3 * units)
            wh = np.concatenate([orthogonal(rng, units, units) for _ in range(3)], axis=1)
        self.w_input = Tensor(wx, requires_grad=True, name="w_input")
        self.w_recurrent = Tensor(wh, requires_grad=True, name="w_recurrent")
        self.b_input = Tensor(np.zeros(3 * units), requires_grad=True, name="b_input")
        self.b_recurrent = Tensor(np.zeros(3 * units), requires_grad=True, name="b_recurrent")

    def params(self):
        return [self.w_input, self.w_recurrent, self.b_input, self.b_recurrent]

    def __call__(self, x):
        if x.ndim != 3 or x.shape[-1] != self.input_size:
            raise ValueError(f"gru expects (batch, steps, {self.input_size}) input, got {x.shape}")
        seq = gru(x, self.w_input, self.w_recurrent, self.b_input, self.b_recurrent, self.activation)
        check_finite(seq, "gru")
        return seq if self.return_sequences else seq[:, -1, :]

    def config(self):
        return {
            "kind": self.kind,
            "input_size": self.input_size,
            "units": self.units,
            "activation": self.activation,
            "return_sequences": self.return_sequences,
        }

    def output_shape(self, input_shape):
        if self.return_sequences:
            return input_shape[:-1] + (self.units,)
        return (input_shape[0], self.units)


class Flatten(Layer):
    kind = "flatten"

    def __call__(self, x):
        return reshape(x, (x.shape[0], -1))

    def output_shape(self, input_shape):
        return (input_shape[0], int(np.prod(input_shape[1:])))


_KINDS = {"dense": Dense, "conv1d": Conv1D, "gru": GRU, "flatten": Flatten}


def layer_from_config(cfg: dict, init: str = "zeros") -> Layer:
    cfg = dict(cfg)
    cls = _KINDS[cfg.pop("kind")]
    if cls is Flatten:
        return Flatten()
    return cls(**cfg, init=init)


class Sequential:
    """Layers applied in order; the last layer is normally a softmax-activated Dense head."""

    def __init__(self, layers: list[Layer], input_shape: tuple[int, ...], name: str = "model"):
        self.layers = layers
        self.input_shape = tuple(input_shape)  # per-sample shape, no batch axis
        self.name = name
        shape = (1,) + self.input_shape
        for layer in layers:
            shape = layer.output_shape(shape)
        self.output_dim = shape[-1]

    def params(self) -> list[Tensor]:
        return [p for layer in self.layers for p in layer.params()]

    @property
    def n_params(self) -> int:
        return sum(p.data.size for p in self.params())

    def zero_grad(self) -> None:
        for p in self.params():
            p.grad = None

    def _input(self, x) -> Tensor:
        x = x if isinstance(x, Tensor) else Tensor(x)
        if tuple(x.shape[1:]) != self.input_shape:
            raise ValueError(
                f"{self.name} expects input of shape (batch, {', '.join(map(str, self.input_shape))}), got {x.shape}"
            )
        return x

    def features(self, x) -> Tensor:
        """Output of the penultimate layer."""
        h = self._input(x)
        for layer in self.layers[:-1]:
            h = layer(h)
        return h

    def logits(self, x) -> Tensor:
        head = self.layers[-1]
        h = self.features(x)
        if isinstance(head, Dense) and head.activation == "softmax":
            return check_finite(head.pre_activation(h), "output head")
        return head(h)

    def __call__(self, x) -> Tensor:
        head = self.layers[-1]
        if isinstance(head, Dense) and head.activation == "softmax":
            return softmax(self.logits(x))
        return self.logits(x)

    def config(self) -> dict:
        return {"name": self.name, "input_shape": list(self.input_shape), "layers": [l.config() for l in self.layers]}

    @classmethod
    def from_config(cls, cfg: dict) -> "Sequential":
        return cls([layer_from_config(c) for c in cfg["layers"]], tuple(cfg["input_shape"]), cfg["name"])

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.data.reshape(-1) for p in self.params()]) if self.params() else np.empty(0)

    def set_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != self.n_params:
            raise ValueError(f"expected {self.n_params} parameters, got {flat.size}")
        pos = 0
        for p in self.params():
            n = p.data.size
            p.data = flat[pos : pos + n].reshape(p.data.shape).copy()
            pos += n
