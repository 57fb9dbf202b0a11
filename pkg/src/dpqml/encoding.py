"""Classical-to-quantum feature maps: angle (variational) and amplitude encoding."""
from __future__ import annotations

import numpy as np

from .simulator import (
    QuantumState,
    QubitCountError,
    apply_ry,
    apply_rz,
    set_amplitudes,
)


class DegenerateInputError(ValueError):
    """An all-zero vector cannot be amplitude encoded."""


def encoding_angles(x) -> tuple[np.ndarray, np.ndarray]:
    """Return the (R_y, R_z) angles ``arctan(x)`` and ``arctan(x**2)``."""
    x = np.asarray(x, dtype=np.float64)
    return np.arctan(x), np.arctan(x * x)


def variational_encode(state: QuantumState, x) -> QuantumState:
    """Rotate qubit ``i`` by ``R_y(arctan x_i)`` followed by ``R_z(arctan x_i**2)``."""
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size != state.n_qubits:
        raise QubitCountError(f"{x.size} features for {state.n_qubits} qubits")
    ry, rz = encoding_angles(x)
    for wire in range(state.n_qubits):
        state = apply_ry(state, wire, ry[wire])
        state = apply_rz(state, wire, rz[wire])
    return state


def amplitude_prepare(x_raw, n_qubits: int) -> np.ndarray:
    """Zero-pad ``x_raw`` to ``2**n_qubits`` entries and scale to unit L2 norm.

    Accepts a single vector or a ``(batch, d)`` matrix (rows prepared independently).
    """
    x = np.asarray(x_raw, dtype=np.float64)
    dim = 2**n_qubits
    if x.shape[-1] > dim:
        raise QubitCountError(f"{x.shape[-1]} features do not fit in {n_qubits} qubits")
    pad = [(0, 0)] * (x.ndim - 1) + [(0, dim - x.shape[-1])]
    x = np.pad(x, pad)
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(norms == 0):
        raise DegenerateInputError("cannot amplitude-encode an all-zero vector")
    return x / norms


def amplitude_encode(x_raw, n_qubits: int) -> QuantumState:
    return set_amplitudes(n_qubits, amplitude_prepare(x_raw, n_qubits))
