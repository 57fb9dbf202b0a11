"""Small tanh MLPs with a softmax head, used as the classical comparison.

Weights are stored ``(fan_in, fan_out)`` so a layer computes ``h @ W + b``.
Flat parameter order: layer by layer, weights (row-major) before biases.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .circuits import cross_entropy, predict_proba

MLP_2D_SIZES = (2, 7, 2)
MLP_MNIST_SIZES = (1024, 1, 2)


@dataclass
class MlpModel:
    layer_sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    @property
    def params(self) -> np.ndarray:
        return np.concatenate([a.ravel() for w, b in zip(self.weights, self.biases) for a in (w, b)])

    def with_params(self, flat) -> "MlpModel":
        flat = np.asarray(flat, dtype=np.float64).ravel()
        if flat.size != self.n_params:
            raise ValueError(f"expected {self.n_params} parameters, got {flat.size}")
        weights, biases, i = [], [], 0
        for fan_in, fan_out in zip(self.layer_sizes, self.layer_sizes[1:]):
            weights.append(flat[i:i + fan_in * fan_out].reshape(fan_in, fan_out).copy())
            i += fan_in * fan_out
            biases.append(flat[i:i + fan_out].copy())
            i += fan_out
        return MlpModel(tuple(self.layer_sizes), weights, biases)


def mlp_init(layer_sizes, seed=None) -> MlpModel:
    """Xavier-uniform weights, zero biases."""
    sizes = tuple(int(s) for s in layer_sizes)
    if len(sizes) < 2 or min(sizes) < 1:
        raise ValueError("need at least an input and an output layer")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes, sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(sizes, weights, biases)


def _activations(model: MlpModel, X: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
    hs = [X]
    h = X
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w + b
        if i == last:
            return hs, predict_proba(z)
        h = np.tanh(z)
        hs.append(h)
    raise AssertionError("unreachable")


def _as_batch(model: MlpModel, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.layer_sizes[0]:
        raise ValueError(f"model expects {model.layer_sizes[0]} inputs, got {X.shape[1]}")
    return X


def mlp_forward_batch(model: MlpModel, X) -> np.ndarray:
    return _activations(model, _as_batch(model, X))[1]


def mlp_forward(model: MlpModel, x) -> np.ndarray:
    return mlp_forward_batch(model, np.asarray(x, dtype=np.float64)[None, :])[0]


def mlp_grads(model: MlpModel, X, y) -> np.ndarray:
    """Per-example cross-entropy gradients by backpropagation, shape ``(n, P)``."""
    X = _as_batch(model, X)
    y = np.asarray(y, dtype=np.intp).ravel()
    hs, probs = _activations(model, X)
    delta = probs.copy()
    delta[np.arange(y.size), y] -= 1.0
    parts = []
    for i in range(len(model.weights) - 1, -1, -1):
        h = hs[i]
        d_w = h[:, :, None] * delta[:, None, :]
        parts.append((d_w.reshape(y.size, -1), delta))
        if i:
            delta = (delta @ model.weights[i].T) * (1.0 - h * h)
    return np.concatenate([a for d_w, d_b in reversed(parts) for a in (d_w, d_b)], axis=1)


def mlp_grad(model: MlpModel, x, label: int) -> np.ndarray:
    return mlp_grads(model, np.asarray(x, dtype=np.float64)[None, :], [label])[0]


def mlp_loss(model: MlpModel, x, label: int) -> float:
    return cross_entropy(mlp_forward(model, x), label)
