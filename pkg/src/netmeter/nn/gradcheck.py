"""Central finite-difference gradient checking."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


def numeric_grad(f: Callable[[], float], x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """d f / d x by central differences; ``x`` is perturbed in place and restored."""
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * h)
    return g


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max |a - n| scaled by the larger of the two max-magnitudes."""
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), 1e-8)
    return float(np.abs(analytic - numeric).max(initial=0.0) / scale)


def check_gradients(fn: Callable[..., Tensor], arrays: Sequence[np.ndarray], h: float = 1e-5, seed: int = 0) -> float:
    """Worst relative error over all inputs of ``fn``.

    Non-scalar outputs are reduced with a fixed random projection so every
    output element contributes to the checked gradient.
    """
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    probe = {}

    def scalar(ts):
        out = fn(*ts)
        if out.data.size == 1:
            return out.sum()
        if "w" not in probe:
            probe["w"] = np.random.default_rng(seed).normal(size=out.shape)
        return (out * Tensor(probe["w"])).sum()

    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    scalar(tensors).backward()
    worst = 0.0
    for t in tensors:
        def f():
            return float(scalar([Tensor(a) for a in arrays]).data)

        num = numeric_grad(f, t.data, h)
        ana = t.grad if t.grad is not None else np.zeros_like(t.data)
        worst = max(worst, relative_error(ana, num))
    return worst


def standard_suite(n_instances: int = 20, seed: int = 7000) -> dict[str, float]:
    """Worst relative error per layer / activation / loss family over random small shapes."""
    from .tensor import activation, conv1d, cross_entropy, gru, softmax, softmax_cross_entropy

    cases: dict[str, Callable] = {}
    for act in ("linear", "relu", "sigmoid", "tanh", "elu", "softmax"):
        cases[f"dense/{act}"] = lambda r, a=act: (
            lambda x, w, b: activation(x @ w + b, a),
            [r.normal(size=(3, 4)), r.normal(size=(4, 3)), r.normal(size=3)],
        )
    cases["conv1d"] = lambda r: (conv1d, [r.normal(size=(2, 6, 2)), r.normal(size=(3, 2, 3)), r.normal(size=3)])
    for act in ("tanh", "sigmoid", "relu", "elu"):
        cases[f"gru/{act}"] = lambda r, a=act: (
            lambda *p: gru(*p, act=a),
            [
                r.normal(size=(2, 4, 3)),
                r.normal(scale=0.7, size=(3, 9)),
                r.normal(scale=0.7, size=(3, 9)),
                r.normal(scale=0.3, size=9),
                r.normal(scale=0.3, size=9),
            ],
        )

    def clamped_ce(r):
        y = np.eye(2)[r.integers(0, 2, 4)]
        return (lambda z: cross_entropy(y, softmax(z))), [r.normal(size=(4, 2))]

    def fused_ce(r):
        y = np.eye(2)[r.integers(0, 2, 4)]
        return (lambda z: softmax_cross_entropy(z, y)), [r.normal(size=(4, 2))]

    cases["cross_entropy"] = clamped_ce
    cases["softmax_cross_entropy"] = fused_ce
    worst = {}
    for name, make in cases.items():
        errs = []
        for i in range(n_instances):
            fn, arrays = make(np.random.default_rng(seed + i))
            errs.append(check_gradients(fn, arrays, seed=i))
        worst[name] = max(errs)
    return worst
