"""Pure state-vector simulation for small qubit registers.

Amplitude index ``i`` holds the basis state whose bitstring has qubit 0 as the
most significant bit, so wire numbers read top-to-bottom as in a circuit
diagram.  Public operations take and return :class:`QuantumState` values; the
``batch_*`` kernels work on raw ``(batch, 2**n)`` arrays and are what the
circuit code uses for vectorised parameter-shift evaluation.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

MAX_QUBITS = 24
NORM_TOL = 1e-9


class QubitCountError(ValueError):
    """Register size or amplitude count is out of range."""


class WireError(IndexError):
    """A wire index does not exist on the register."""


class NormalizationError(ValueError):
    """Amplitudes do not describe a unit vector."""


@dataclass(frozen=True)
class QuantumState:
    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=np.complex128)
        if amps.shape != (2**self.n_qubits,):
            raise QubitCountError(
                f"expected {2**self.n_qubits} amplitudes for {self.n_qubits} qubits, got {amps.shape}"
            )
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


@dataclass(frozen=True)
class EulerRotation:
    phi: float
    theta: float
    omega: float


# ---------------------------------------------------------------------------
# gate matrices (vectorised over leading angle dimensions)
# ---------------------------------------------------------------------------

def ry_matrix(angle) -> np.ndarray:
    a = np.asarray(angle, dtype=np.float64)
    c, s = np.cos(a / 2), np.sin(a / 2)
    m = np.empty(a.shape + (2, 2), dtype=np.complex128)
    m[..., 0, 0] = c
    m[..., 0, 1] = -s
    m[..., 1, 0] = s
    m[..., 1, 1] = c
    return m


def rz_matrix(angle) -> np.ndarray:
    a = np.asarray(angle, dtype=np.float64)
    m = np.zeros(a.shape + (2, 2), dtype=np.complex128)
    m[..., 0, 0] = np.exp(-0.5j * a)
    m[..., 1, 1] = np.exp(0.5j * a)
    return m


def rot_matrix(phi, theta, omega) -> np.ndarray:
    """Closed form of ``Rz(omega) @ Ry(theta) @ Rz(phi)``."""
    phi, theta, omega = np.broadcast_arrays(
        np.asarray(phi, dtype=np.float64),
        np.asarray(theta, dtype=np.float64),
        np.asarray(omega, dtype=np.float64),
    )
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    plus = 0.5 * (phi + omega)
    minus = 0.5 * (phi - omega)
    m = np.empty(phi.shape + (2, 2), dtype=np.complex128)
    m[..., 0, 0] = np.exp(-1j * plus) * c
    m[..., 0, 1] = -np.exp(1j * minus) * s
    m[..., 1, 0] = np.exp(-1j * minus) * s
    m[..., 1, 1] = np.exp(1j * plus) * c
    return m


# ---------------------------------------------------------------------------
# batched kernels
# ---------------------------------------------------------------------------

def _check_wire(n_qubits: int, wire: int) -> None:
    if not 0 <= wire < n_qubits:
        raise WireError(f"wire {wire} out of range for {n_qubits} qubits")


def batch_apply_1q(amps: np.ndarray, n_qubits: int, wire: int, mat: np.ndarray) -> np.ndarray:
    """Apply a 2x2 gate to ``wire`` of every state in ``amps`` (shape ``(B, 2**n)``).

    ``mat`` is either one ``(2, 2)`` matrix or a ``(B, 2, 2)`` stack.
    """
    _check_wire(n_qubits, wire)
    b = amps.shape[0]
    view = amps.reshape(b, 2**wire, 2, 2 ** (n_qubits - wire - 1))
    if n_qubits > 3:
        mat = mat if mat.ndim == 2 else mat[:, None, :, :]
        return np.matmul(mat, view).reshape(b, -1)
    # tiny registers: elementwise pair update beats per-row matmul dispatch
    if mat.ndim == 2:
        m00, m01, m10, m11 = mat[0, 0], mat[0, 1], mat[1, 0], mat[1, 1]
    else:
        m = mat.reshape(b, 2, 2, 1, 1)
        m00, m01, m10, m11 = m[:, 0, 0], m[:, 0, 1], m[:, 1, 0], m[:, 1, 1]
    a0, a1 = view[:, :, 0, :], view[:, :, 1, :]
    out = np.empty_like(view)
    out[:, :, 0, :] = m00 * a0 + m01 * a1
    out[:, :, 1, :] = m10 * a0 + m11 * a1
    return out.reshape(b, -1)


@lru_cache(maxsize=None)
def cnot_permutation(n_qubits: int, pairs: tuple[tuple[int, int], ...]) -> np.ndarray:
    """Gather index for a sequence of CNOTs: ``new = old[perm]``."""
    perm = np.arange(2**n_qubits)
    for control, target in pairs:
        _check_wire(n_qubits, control)
        _check_wire(n_qubits, target)
        if control == target:
            raise ValueError("CNOT control and target must differ")
        idx = np.arange(2**n_qubits)
        cbit = 1 << (n_qubits - 1 - control)
        tbit = 1 << (n_qubits - 1 - target)
        step = np.where(idx & cbit, idx ^ tbit, idx)
        perm = perm[step]
    perm.setflags(write=False)
    return perm


def batch_apply_cnots(amps: np.ndarray, n_qubits: int, pairs: Sequence[tuple[int, int]]) -> np.ndarray:
    pairs = tuple((int(c), int(t)) for c, t in pairs)
    if not pairs:
        return amps
    return amps[:, cnot_permutation(n_qubits, pairs)]


@lru_cache(maxsize=None)
def z_signs(n_qubits: int, wires: tuple[int, ...]) -> np.ndarray:
    """``(2**n, len(wires))`` matrix of +1/-1 eigenvalues of Z on each wire."""
    idx = np.arange(2**n_qubits)[:, None]
    shifts = np.array([n_qubits - 1 - w for w in wires])[None, :]
    signs = 1.0 - 2.0 * ((idx >> shifts) & 1)
    signs.setflags(write=False)
    return signs


def batch_expectation_z(amps: np.ndarray, n_qubits: int, wires: Sequence[int]) -> np.ndarray:
    wires = tuple(int(w) for w in wires)
    for w in wires:
        _check_wire(n_qubits, w)
    probs = amps.real**2 + amps.imag**2
    return probs @ z_signs(n_qubits, wires)


# ---------------------------------------------------------------------------
# public value-to-value operations
# ---------------------------------------------------------------------------

def _check_count(n_qubits: int) -> None:
    if not isinstance(n_qubits, (int, np.integer)) or not 1 <= n_qubits <= MAX_QUBITS:
        raise QubitCountError(f"n_qubits must be in [1, {MAX_QUBITS}], got {n_qubits!r}")


def new_zero_state(n_qubits: int) -> QuantumState:
    _check_count(n_qubits)
    amps = np.zeros(2**n_qubits, dtype=np.complex128)
    amps[0] = 1.0
    return QuantumState(n_qubits, amps)


def set_amplitudes(n_qubits: int, amps) -> QuantumState:
    _check_count(n_qubits)
    amps = np.asarray(amps, dtype=np.complex128).ravel()
    if amps.size != 2**n_qubits:
        raise QubitCountError(f"expected {2**n_qubits} amplitudes, got {amps.size}")
    norm = np.linalg.norm(amps)
    if abs(norm - 1.0) > NORM_TOL:
        raise NormalizationError(f"amplitude vector has norm {norm:.12g}, expected 1")
    return QuantumState(n_qubits, amps.copy())


def _apply(state: QuantumState, wire: int, mat: np.ndarray) -> QuantumState:
    out = batch_apply_1q(state.amplitudes[None, :], state.n_qubits, wire, mat)
    return QuantumState(state.n_qubits, out[0])


def apply_ry(state: QuantumState, wire: int, angle: float) -> QuantumState:
    return _apply(state, wire, ry_matrix(angle))


def apply_rz(state: QuantumState, wire: int, angle: float) -> QuantumState:
    return _apply(state, wire, rz_matrix(angle))


def apply_rot(state: QuantumState, wire: int, rot: EulerRotation) -> QuantumState:
    return _apply(state, wire, rot_matrix(rot.phi, rot.theta, rot.omega))


def apply_cnot(state: QuantumState, control: int, target: int) -> QuantumState:
    if control == target:
        raise ValueError("CNOT control and target must differ")
    for w in (control, target):
        if not 0 <= w < state.n_qubits:
            raise ValueError(f"wire {w} out of range for {state.n_qubits} qubits")
    out = batch_apply_cnots(state.amplitudes[None, :], state.n_qubits, [(control, target)])
    return QuantumState(state.n_qubits, out[0])


def expectation_z(state: QuantumState, wire: int) -> float:
    val = batch_expectation_z(state.amplitudes[None, :], state.n_qubits, (wire,))[0, 0]
    return float(np.clip(val, -1.0, 1.0))
