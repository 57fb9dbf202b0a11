"""Layered variational circuits, their forward pass and parameter-shift gradients.

A model is a chain of blocks.  Each block prepares its register (angle or
amplitude encoding), then repeats ``n_layers`` times: the entangling CNOTs in
listed order followed by one general rotation ``R(phi, theta, omega)`` per
wire.  The block output is the Z expectation of its measured wires; every
block after the first angle-encodes the previous block's outputs.

Parameters are stored flat: block-major, then layer, then wire, then
``(phi, theta, omega)``.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .encoding import amplitude_prepare, encoding_angles
from .simulator import (
    batch_apply_1q,
    batch_apply_cnots,
    batch_expectation_z,
    ry_matrix,
    rot_matrix,
    rz_matrix,
)

VARIATIONAL = "variational"
AMPLITUDE = "amplitude"

SHIFT = np.pi / 2
SHIFT_COEFF = 0.5
INIT_SCALE = 0.01
PROB_FLOOR = 1e-12

# amplitudes simulated per vectorised call; bounds peak memory at ~32 MB
_CHUNK_AMPLITUDES = 1 << 21


def ring(n_qubits: int) -> tuple[tuple[int, int], ...]:
    return tuple((i, (i + 1) % n_qubits) for i in range(n_qubits))


@dataclass(frozen=True)
class BlockSpec:
    n_qubits: int
    n_layers: int
    entangler: tuple[tuple[int, int], ...]
    measured_wires: tuple[int, ...]
    input_mode: str = VARIATIONAL

    def __post_init__(self):
        object.__setattr__(self, "entangler", tuple((int(c), int(t)) for c, t in self.entangler))
        object.__setattr__(self, "measured_wires", tuple(int(w) for w in self.measured_wires))
        if self.n_qubits < 1 or self.n_layers < 1:
            raise ValueError("a block needs at least one qubit and one layer")
        if self.input_mode not in (VARIATIONAL, AMPLITUDE):
            raise ValueError(f"unknown input mode {self.input_mode!r}")
        if len(set(self.measured_wires)) != len(self.measured_wires):
            raise ValueError("measured wires must be distinct")
        for w in self.measured_wires + tuple(q for pair in self.entangler for q in pair):
            if not 0 <= w < self.n_qubits:
                raise ValueError(f"wire {w} out of range for {self.n_qubits} qubits")
        if any(c == t for c, t in self.entangler):
            raise ValueError("CNOT control and target must differ")

    @property
    def n_params(self) -> int:
        return self.n_layers * self.n_qubits * 3

    @property
    def input_dim(self) -> int:
        return self.n_qubits if self.input_mode == VARIATIONAL else 2**self.n_qubits


@dataclass
class VqcModel:
    blocks: tuple[BlockSpec, ...]
    params: np.ndarray
    arch: str = "custom"
    _slices: list = field(init=False, repr=False)

    def __post_init__(self):
        self.blocks = tuple(self.blocks)
        self.params = np.array(self.params, dtype=np.float64).ravel()
        if not self.blocks:
            raise ValueError("model needs at least one block")
        total = sum(b.n_params for b in self.blocks)
        if self.params.size != total:
            raise ValueError(f"model expects {total} parameters, got {self.params.size}")
        for prev, nxt in zip(self.blocks, self.blocks[1:]):
            if nxt.input_mode != VARIATIONAL or nxt.n_qubits != len(prev.measured_wires):
                raise ValueError("each later block must angle-encode the previous block's outputs")
        if len(self.blocks[-1].measured_wires) != 2:
            raise ValueError("final block must measure exactly two wires (binary logits)")
        self._slices = []
        start = 0
        for b in self.blocks:
            self._slices.append(slice(start, start + b.n_params))
            start += b.n_params

    @property
    def n_params(self) -> int:
        return self.params.size

    def block_params(self, k: int) -> np.ndarray:
        return self.params[self._slices[k]]

    def with_params(self, params) -> "VqcModel":
        return VqcModel(self.blocks, params, self.arch)


def init_params(blocks: Sequence[BlockSpec], rng: np.random.Generator) -> np.ndarray:
    total = sum(b.n_params for b in blocks)
    return INIT_SCALE * rng.standard_normal(total)


def _model(blocks, arch, params, rng) -> VqcModel:
    if params is None:
        params = init_params(blocks, rng) if rng is not None else np.zeros(sum(b.n_params for b in blocks))
    return VqcModel(blocks, params, arch)


def build_2d_model(params=None, rng: np.random.Generator | None = None) -> VqcModel:
    """Two chained 2-qubit blocks of 2 layers each (24 angles)."""
    spec = BlockSpec(2, 2, ((0, 1), (1, 0)), (0, 1), VARIATIONAL)
    return _model((spec, spec), "vqc-2d", params, rng)


def build_mnist_model(
    params=None,
    rng: np.random.Generator | None = None,
    n_qubits: int = 10,
    layers: tuple[int, int] = (8, 4),
) -> VqcModel:
    """Amplitude-encoded ring block feeding a 4-qubit angle-encoded ring block.

    The defaults give the 10-qubit, 288-angle image classifier; smaller
    ``n_qubits`` yields the reduced variant used on 8x8 digits.
    """
    first = BlockSpec(n_qubits, layers[0], ring(n_qubits), (0, 1, 2, 3), AMPLITUDE)
    second = BlockSpec(4, layers[1], ring(4), (0, 1), VARIATIONAL)
    arch = "vqc-mnist" if (n_qubits, tuple(layers)) == (10, (8, 4)) else f"vqc-amp{n_qubits}"
    return _model((first, second), arch, params, rng)


# ---------------------------------------------------------------------------
# simulation core
# ---------------------------------------------------------------------------

def _run_block(spec: BlockSpec, params: np.ndarray, ry=None, rz=None, amps=None) -> np.ndarray:
    """Simulate ``B`` copies of a block; ``params`` is ``(B, P)``.

    Variational blocks take encoding angles ``ry``/``rz`` of shape ``(B, n)``;
    amplitude blocks take real ``amps`` of shape ``(B, 2**n)``.
    """
    n = spec.n_qubits
    b = params.shape[0]
    if spec.input_mode == AMPLITUDE:
        state = np.asarray(amps, dtype=np.complex128)
    else:
        state = np.zeros((b, 2**n), dtype=np.complex128)
        state[:, 0] = 1.0
        for w in range(n):
            state = batch_apply_1q(state, n, w, ry_matrix(ry[:, w]))
            state = batch_apply_1q(state, n, w, rz_matrix(rz[:, w]))
    for layer in range(spec.n_layers):
        state = batch_apply_cnots(state, n, spec.entangler)
        for w in range(n):
            k = 3 * (layer * n + w)
            mats = rot_matrix(params[:, k], params[:, k + 1], params[:, k + 2])
            state = batch_apply_1q(state, n, w, mats)
    return batch_expectation_z(state, n, spec.measured_wires)


def _prepare_inputs(spec: BlockSpec, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if spec.input_mode == AMPLITUDE:
        return amplitude_prepare(X, spec.n_qubits)
    if X.shape[1] != spec.n_qubits:
        raise ValueError(f"block expects {spec.n_qubits} features, got {X.shape[1]}")
    return X


def _block_rows(spec: BlockSpec, params: np.ndarray, inputs: np.ndarray) -> np.ndarray:
    """Evaluate one parameter row per input row."""
    if spec.input_mode == AMPLITUDE:
        return _run_block(spec, params, amps=inputs)
    ry, rz = encoding_angles(inputs)
    return _run_block(spec, params, ry=ry, rz=rz)


def worker_count() -> int:
    """Thread-pool width for gradient evaluation (``DPQML_WORKERS``, default 1)."""
    try:
        return max(1, int(os.environ.get("DPQML_WORKERS", "1")))
    except ValueError:
        return 1


def _map_chunks(fn, n_items: int, chunk: int) -> list:
    bounds = [(i, min(i + chunk, n_items)) for i in range(0, n_items, chunk)]
    workers = worker_count()
    if workers == 1 or len(bounds) == 1:
        return [fn(lo, hi) for lo, hi in bounds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda b: fn(*b), bounds))


def block_forward(spec: BlockSpec, block_params, values) -> np.ndarray:
    """Z expectations of the measured wires for a single encoded input."""
    block_params = np.asarray(block_params, dtype=np.float64).ravel()
    if block_params.size != spec.n_params:
        raise ValueError(f"block expects {spec.n_params} parameters, got {block_params.size}")
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size != spec.input_dim:
        raise ValueError(f"block expects an input of length {spec.input_dim}, got {values.size}")
    if spec.input_mode == AMPLITUDE and abs(np.linalg.norm(values) - 1.0) > 1e-9:
        raise ValueError("amplitude input must have unit norm")
    return _block_rows(spec, block_params[None, :], values[None, :])[0]


def forward_batch(model: VqcModel, X) -> np.ndarray:
    """Logits ``(B, 2)`` for a batch of raw feature vectors."""
    h = _prepare_inputs(model.blocks[0], X)
    n = h.shape[0]
    for k, spec in enumerate(model.blocks):
        chunk = max(1, _CHUNK_AMPLITUDES // 2**spec.n_qubits)
        theta = model.block_params(k)
        parts = _map_chunks(
            lambda lo, hi: _block_rows(spec, np.broadcast_to(theta, (hi - lo, theta.size)), h[lo:hi]),
            n,
            chunk,
        )
        h = np.concatenate(parts, axis=0)
    return h


def model_forward(model: VqcModel, x) -> np.ndarray:
    return forward_batch(model, np.asarray(x, dtype=np.float64)[None, :])[0]


def forward_param_rows(model: VqcModel, param_rows: np.ndarray, x) -> np.ndarray:
    """Logits of one input under many full parameter vectors, shape ``(R, 2)``."""
    param_rows = np.atleast_2d(param_rows)
    r = param_rows.shape[0]
    h = np.repeat(_prepare_inputs(model.blocks[0], x), r, axis=0)
    start = 0
    for spec in model.blocks:
        theta = param_rows[:, start:start + spec.n_params]
        start += spec.n_params
        chunk = max(1, _CHUNK_AMPLITUDES // 2**spec.n_qubits)
        h = np.concatenate(
            _map_chunks(lambda lo, hi: _block_rows(spec, theta[lo:hi], h[lo:hi]), r, chunk), axis=0
        )
    return h


# ---------------------------------------------------------------------------
# loss head
# ---------------------------------------------------------------------------

def predict_proba(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(probs, label) -> np.ndarray | float:
    probs = np.asarray(probs, dtype=np.float64)
    label = np.asarray(label, dtype=np.intp)
    p = np.take_along_axis(np.atleast_2d(probs), np.atleast_1d(label)[:, None], axis=1)[:, 0]
    loss = -np.log(np.clip(p, PROB_FLOOR, 1.0))
    return float(loss[0]) if probs.ndim == 1 else loss


def model_loss(model: VqcModel, x, label: int) -> float:
    return cross_entropy(predict_proba(model_forward(model, x)), label)


# ---------------------------------------------------------------------------
# gradients
# ---------------------------------------------------------------------------

def _shift_table(n_params: int, n_enc: int) -> tuple[np.ndarray, np.ndarray]:
    """Row offsets for parameter and encoding-angle shifts.

    Row 0 is unshifted; then +s for every parameter, -s for every parameter,
    +s and -s for every encoding angle (``n_enc`` of them).
    """
    rows = 1 + 2 * n_params + 2 * n_enc
    dp = np.zeros((rows, n_params))
    de = np.zeros((rows, n_enc))
    idx = np.arange(n_params)
    dp[1 + idx, idx] = SHIFT
    dp[1 + n_params + idx, idx] = -SHIFT
    eidx = np.arange(n_enc)
    base = 1 + 2 * n_params
    de[base + eidx, eidx] = SHIFT
    de[base + n_enc + eidx, eidx] = -SHIFT
    return dp, de


def block_jacobian(spec: BlockSpec, theta: np.ndarray, inputs: np.ndarray, input_grad: bool = False):
    """Parameter-shift Jacobians of a block over a batch of prepared inputs.

    Returns ``(outputs (E, k), d_out/d_theta (E, k, P), d_out/d_input (E, k, n) or None)``.
    The input Jacobian differentiates the encoding angles by shifting them
    and applies the chain rule through ``arctan(x)`` and ``arctan(x**2)``.
    """
    if input_grad and spec.input_mode != VARIATIONAL:
        raise ValueError("input gradients are only defined for angle-encoded blocks")
    n, p = spec.n_qubits, spec.n_params
    n_enc = 2 * n if input_grad else 0
    dp, de = _shift_table(p, n_enc)
    rows = dp.shape[0]
    param_rows = theta[None, :] + dp
    e = inputs.shape[0]

    def run(lo, hi):
        m = hi - lo
        params = np.tile(param_rows, (m, 1))
        if spec.input_mode == AMPLITUDE:
            return _run_block(spec, params, amps=np.repeat(inputs[lo:hi], rows, axis=0))
        ry, rz = encoding_angles(inputs[lo:hi])
        ry = np.repeat(ry, rows, axis=0)
        rz = np.repeat(rz, rows, axis=0)
        if n_enc:
            ry = ry + np.tile(de[:, :n], (m, 1))
            rz = rz + np.tile(de[:, n:], (m, 1))
        return _run_block(spec, params, ry=ry, rz=rz)

    chunk = max(1, _CHUNK_AMPLITUDES // (rows * 2**n))
    out = np.concatenate(_map_chunks(run, e, chunk), axis=0).reshape(e, rows, -1)

    base = out[:, 0, :]
    d_theta = SHIFT_COEFF * (out[:, 1:1 + p, :] - out[:, 1 + p:1 + 2 * p, :])
    d_theta = d_theta.transpose(0, 2, 1)
    if not n_enc:
        return base, d_theta, None
    start = 1 + 2 * p
    d_enc = SHIFT_COEFF * (out[:, start:start + n_enc, :] - out[:, start + n_enc:, :])
    d_ry, d_rz = d_enc[:, :n, :], d_enc[:, n:, :]
    x = inputs[:, :, None]
    d_input = d_ry / (1.0 + x * x) + d_rz * (2.0 * x / (1.0 + x**4))
    return base, d_theta, d_input.transpose(0, 2, 1)


def param_shift_grads(model: VqcModel, X, y) -> np.ndarray:
    """Per-example gradients of the cross-entropy loss, shape ``(E, n_params)``."""
    y = np.asarray(y, dtype=np.intp).ravel()
    h = _prepare_inputs(model.blocks[0], X)
    jacobians = []
    for k, spec in enumerate(model.blocks):
        h, d_theta, d_input = block_jacobian(spec, model.block_params(k), h, input_grad=k > 0)
        jacobians.append((d_theta, d_input))
    upstream = predict_proba(h)
    upstream[np.arange(y.size), y] -= 1.0
    grads = []
    for d_theta, d_input in reversed(jacobians):
        grads.append(np.einsum("ek,ekp->ep", upstream, d_theta))
        if d_input is not None:
            upstream = np.einsum("ek,eki->ei", upstream, d_input)
    return np.concatenate(grads[::-1], axis=1)


def param_shift_grad(model: VqcModel, x, label: int) -> np.ndarray:
    return param_shift_grads(model, np.asarray(x, dtype=np.float64)[None, :], [label])[0]


def finite_diff_grad(model: VqcModel, x, label: int, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of the loss; validation oracle only."""
    if not 1e-8 <= h <= 1e-3:
        raise ValueError("finite-difference step must lie in [1e-8, 1e-3]")
    p = model.n_params
    eye = np.eye(p) * h
    rows = np.concatenate([model.params + eye, model.params - eye], axis=0)
    losses = cross_entropy(predict_proba(forward_param_rows(model, rows, x)), np.full(2 * p, label))
    return (losses[:p] - losses[p:]) / (2 * h)
