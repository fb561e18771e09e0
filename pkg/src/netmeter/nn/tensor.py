"""Reverse-mode automatic differentiation over float64 numpy arrays.

A :class:`Tensor` records the op that produced it and a closure mapping the
output gradient to gradients of its inputs.  ``loss.backward()`` walks the
graph in reverse topological order and accumulates ``.grad`` on every node
that requires it.

Convolution and GRU are single fused ops with hand-written backward passes;
everything else is composed from small primitives.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Sequence

import numpy as np

DTYPE = np.float64

_grad_enabled = True


class GraphError(RuntimeError):
    pass


class NonFiniteError(FloatingPointError):
    pass


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording a graph (inference)."""
    global _grad_enabled
    prev, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self.name = name

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, requires_grad={self.requires_grad})"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, grad=None) -> None:
        if self._backward is None:
            raise GraphError("backward called on a tensor with no recorded graph; run a forward pass first")
        if grad is None:
            if self.data.size != 1:
                raise GraphError("backward without an explicit gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order = _topological(self)
        grads: dict[int, np.ndarray] = {id(self): np.asarray(grad, dtype=DTYPE)}
        for node in order:
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

    # arithmetic -----------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, p: float):
        return power(self, p)

    def __getitem__(self, idx):
        return index(self, idx)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    order.reverse()
    return order


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make_op(data: np.ndarray, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    """Wrap an op result; the graph is recorded only if some input needs a gradient."""
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def check_finite(t: Tensor, where: str) -> Tensor:
    if not np.isfinite(t.data).all():
        bad = int((~np.isfinite(t.data)).sum())
        raise NonFiniteError(f"{bad} non-finite values produced by {where} (shape {t.shape})")
    return t


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# primitives ---------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return make_op(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def neg(a: Tensor) -> Tensor:
    return make_op(-a.data, (a,), lambda g: (-g,))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return make_op(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def power(a: Tensor, p: float) -> Tensor:
    return make_op(a.data**p, (a,), lambda g: (g * p * a.data ** (p - 1),))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[-1] != b.shape[0] or b.ndim != 2:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def backward(g):
        ga = g @ b.data.T
        gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        return ga, gb

    return make_op(a.data @ b.data, (a, b), backward)


def reduce_sum(a: Tensor, axis=None, keepdims=False) -> Tensor:
    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return make_op(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward)


def mean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return mul(reduce_sum(a, axis, keepdims), 1.0 / n)


def reshape(a: Tensor, shape) -> Tensor:
    return make_op(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def _is_basic(idx) -> bool:
    parts = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(p, (slice, int, type(Ellipsis))) or p is None for p in parts)


def index(a: Tensor, idx) -> Tensor:
    basic = _is_basic(idx)

    def backward(g):
        full = np.zeros_like(a.data)
        if basic:
            full[idx] = g
        else:
            np.add.at(full, idx, g)
        return (full,)

    return make_op(a.data[idx], (a,), backward)


def concat(parts: Sequence[Tensor], axis: int = -1) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    sizes = [p.shape[axis] for p in parts]
    bounds = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return make_op(np.concatenate([p.data for p in parts], axis=axis), parts, backward)


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)
    return make_op(y, (a,), lambda g: (g * y,))


def log(a: Tensor) -> Tensor:
    return make_op(np.log(a.data), (a,), lambda g: (g / a.data,))


# activations --------------------------------------------------------------

def _sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form never overflows and avoids sign masking
    out = np.tanh(0.5 * x)
    out += 1.0
    out *= 0.5
    return out


def _elu(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))


ACTIVATIONS: dict[str, tuple[Callable, Callable]] = {
    # name: (f(x), f'(x) expressed through y = f(x))
    "linear": (lambda x: x, lambda y: np.ones_like(y)),
    "relu": (lambda x: np.maximum(x, 0.0), lambda y: (y > 0).astype(DTYPE)),
    "sigmoid": (_sigmoid, lambda y: y * (1.0 - y)),
    "tanh": (np.tanh, lambda y: 1.0 - y * y),
    "elu": (_elu, lambda y: np.where(y > 0, 1.0, y + 1.0)),
}


def activation(a: Tensor, name: str) -> Tensor:
    if name == "softmax":
        return softmax(a)
    try:
        f, df = ACTIVATIONS[name]
    except KeyError:
        raise ValueError(f"unknown activation {name!r}") from None
    if name == "linear":
        return a
    y = f(a.data)
    return make_op(y, (a,), lambda g: (g * df(y),))


def relu(a: Tensor) -> Tensor:
    return activation(a, "relu")


def sigmoid(a: Tensor) -> Tensor:
    return activation(a, "sigmoid")


def tanh(a: Tensor) -> Tensor:
    return activation(a, "tanh")


def elu(a: Tensor) -> Tensor:
    return activation(a, "elu")


def softmax_array(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def softmax(a: Tensor) -> Tensor:
    """Softmax over the last axis (max-subtracted)."""
    y = softmax_array(a.data)

    def backward(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return make_op(y, (a,), backward)


# losses -------------------------------------------------------------------

CE_EPS = 1e-12


def _check_one_hot(y: np.ndarray) -> None:
    if y.ndim != 2 or not np.all((y == 0) | (y == 1)) or not np.all(y.sum(axis=1) == 1):
        raise ValueError("y_true must be one-hot rows")


def cross_entropy(y_true, y_pred: Tensor) -> Tensor:
    """Mean over rows of ``-sum_c y(c) log p(c)`` with p clamped to [1e-12, 1 - 1e-12]."""
    y = np.asarray(y_true, dtype=DTYPE)
    if y.ndim == 1:
        y = y[None, :]
    p = y_pred.data.reshape(y.shape)
    _check_one_hot(y)
    if not np.allclose(p.sum(axis=1), 1.0, atol=1e-6, rtol=0):
        raise ValueError("predicted probabilities must sum to 1 (+/- 1e-6)")
    pc = np.clip(p, CE_EPS, 1.0 - CE_EPS)
    n = y.shape[0]
    loss = -np.sum(y * np.log(pc)) / n
    inside = (p >= CE_EPS) & (p <= 1.0 - CE_EPS)

    def backward(g):
        return ((g * (-y / pc) * inside / n).reshape(y_pred.shape),)

    return make_op(np.asarray(loss), (y_pred,), backward)


def softmax_cross_entropy(logits: Tensor, y_true) -> Tensor:
    """``cross_entropy(y, softmax(logits))`` computed through log-softmax.

    Used for training: same value as the clamped form whenever no
    probability is clamped, and the gradient never vanishes on confidently
    wrong predictions.
    """
    y = np.asarray(y_true, dtype=DTYPE)
    _check_one_hot(y)
    z = logits.data
    shifted = z - z.max(axis=-1, keepdims=True)
    logsum = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    logp = shifted - logsum
    n = y.shape[0]
    loss = -np.sum(y * logp) / n

    def backward(g):
        return (g * (np.exp(logp) - y) / n,)

    return make_op(np.asarray(loss), (logits,), backward)


# fused layers -------------------------------------------------------------

def conv1d(x: Tensor, kernel: Tensor, bias: Tensor) -> Tensor:
    """'Same'-padded, stride-1 cross-correlation.

    x: (B, T, C); kernel: (K, C, F); bias: (F,) -> (B, T, F).
    """
    B, T, C = x.shape
    K, Ck, F = kernel.shape
    if Ck != C or bias.shape != (F,):
        raise ValueError(f"conv1d shape mismatch: input {x.shape}, kernel {kernel.shape}, bias {bias.shape}")
    left = (K - 1) // 2
    xp = np.zeros((B, T + K - 1, C))
    xp[:, left : left + T] = x.data
    cols = np.concatenate([xp[:, k : k + T] for k in range(K)], axis=-1)  # (B, T, K*C)
    W = kernel.data.reshape(K * C, F)
    out = cols @ W + bias.data

    def backward(g):
        g2 = g.reshape(-1, F)
        dW = (cols.reshape(-1, K * C).T @ g2).reshape(K, C, F)
        db = g2.sum(axis=0)
        dcols = g @ W.T
        dxp = np.zeros_like(xp)
        for k in range(K):
            dxp[:, k : k + T] += dcols[..., k * C : (k + 1) * C]
        return dxp[:, left : left + T], dW, db

    return make_op(out, (x, kernel, bias), backward)


def gru(x: Tensor, w_input: Tensor, w_recurrent: Tensor, b_input: Tensor, b_recurrent: Tensor, act: str = "tanh") -> Tensor:
    """Gated recurrent unit over a whole sequence, returning every hidden state.

    Gate blocks are ordered [update z | reset r | candidate]; the reset gate
    multiplies the recurrent contribution after its matmul::

        z = sigmoid(x W_z + b_z + h U_z + c_z)
        r = sigmoid(x W_r + b_r + h U_r + c_r)
        n = act(x W_n + b_n + r * (h U_n + c_n))
        h' = z * h + (1 - z) * n

    x: (B, T, I); w_input: (I, 3H); w_recurrent: (H, 3H); biases: (3H,).
    Initial state is zero.  Output: (B, T, H).
    """
    B, T, I = x.shape
    H = w_recurrent.shape[0]
    if w_input.shape != (I, 3 * H) or w_recurrent.shape != (H, 3 * H):
        raise ValueError(
            f"gru shape mismatch: input {x.shape}, w_input {w_input.shape}, w_recurrent {w_recurrent.shape}"
        )
    if b_input.shape != (3 * H,) or b_recurrent.shape != (3 * H,):
        raise ValueError("gru biases must have shape (3H,)")
    f, df = ACTIVATIONS[act]
    U = w_recurrent.data
    xp = x.data @ w_input.data + b_input.data  # (B, T, 3H)
    hs = np.zeros((B, T + 1, H))
    zs = np.empty((B, T, H))
    rs = np.empty((B, T, H))
    ns = np.empty((B, T, H))
    hn = np.empty((B, T, H))  # h U_n + c_n, needed for the reset-gate gradient
    h = hs[:, 0]
    for t in range(T):
        hp = h @ U + b_recurrent.data
        zr = _sigmoid(xp[:, t, : 2 * H] + hp[:, : 2 * H])
        z, r = zr[:, :H], zr[:, H:]
        n = f(xp[:, t, 2 * H :] + r * hp[:, 2 * H :])
        h = z * h + (1.0 - z) * n
        hs[:, t + 1] = h
        zs[:, t], rs[:, t], ns[:, t], hn[:, t] = z, r, n, hp[:, 2 * H :]
    out = hs[:, 1:]

    def backward(g):
        dxp = np.empty((B, T, 3 * H))
        dhp = np.empty((B, T, 3 * H))  # gradient w.r.t. h U + c at each step
        dh_next = np.zeros((B, H))
        UT = U.T
        for t in range(T - 1, -1, -1):
            dh = g[:, t] + dh_next
            z, r, n = zs[:, t], rs[:, t], ns[:, t]
            dn = dh * (1.0 - z) * df(n)
            dz = dh * (hs[:, t] - n) * z * (1.0 - z)
            dr = dn * hn[:, t] * r * (1.0 - r)
            dxp[:, t, :H] = dz
            dxp[:, t, H : 2 * H] = dr
            dxp[:, t, 2 * H :] = dn
            d = dhp[:, t]
            d[:, : 2 * H] = dxp[:, t, : 2 * H]
            np.multiply(dn, r, out=d[:, 2 * H :])
            dh_next = dh * z + d @ UT
        flat_h = dhp.reshape(-1, 3 * H)
        dU = hs[:, :-1].reshape(-1, H).T @ flat_h
        dc = flat_h.sum(axis=0)
        flat = dxp.reshape(-1, 3 * H)
        dW = x.data.reshape(-1, I).T @ flat
        db = flat.sum(axis=0)
        dx = dxp @ w_input.data.T
        return dx, dW, dU, db, dc

    return make_op(out, (x, w_input, w_recurrent, b_input, b_recurrent), backward)
