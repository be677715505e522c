"""Dense state-vector simulator.

Basis ordering: qubit ``q`` is bit ``q`` of the amplitude index, so qubit 0
is the least-significant bit.  ``|01>`` in ket notation written as
``|q1 q0>`` is therefore index 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigurationError, UsageError

MAX_QUBITS = 20
_NORM_TOL = 1e-10

GATE_KINDS = ("RY", "RZ", "H", "CZ", "CNOT")
_TWO_QUBIT = ("CZ", "CNOT")

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2.0)


@dataclass(frozen=True)
class StateVector:
    num_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=np.complex128)
        if amps.shape != (1 << self.num_qubits,):
            raise UsageError(
                f"expected {1 << self.num_qubits} amplitudes for {self.num_qubits} qubits, "
                f"got shape {amps.shape}"
            )
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > _NORM_TOL:
            raise UsageError(f"state is not normalized (norm={norm!r})")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


@dataclass(frozen=True)
class Gate:
    kind: str
    target: int
    control: Optional[int] = None
    angle: float = 0.0

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise UsageError(f"unknown gate kind {self.kind!r}")
        if self.kind in _TWO_QUBIT:
            if self.control is None:
                raise UsageError(f"{self.kind} needs a control qubit")
            if self.control == self.target:
                raise UsageError(f"{self.kind} control and target must differ")
        elif self.control is not None:
            raise UsageError(f"{self.kind} takes no control qubit")
        if not math.isfinite(self.angle):
            raise UsageError(f"gate angle must be finite, got {self.angle!r}")

    def matrix(self) -> np.ndarray:
        """2x2 matrix of a single-qubit gate (the target block of CNOT for two-qubit)."""
        if self.kind == "RY":
            c, s = math.cos(self.angle / 2), math.sin(self.angle / 2)
            return np.array([[c, -s], [s, c]], dtype=complex)
        if self.kind == "RZ":
            half = 0.5j * self.angle
            return np.array([[np.exp(-half), 0], [0, np.exp(half)]], dtype=complex)
        if self.kind == "H":
            return HADAMARD
        if self.kind == "CNOT":
            return PAULI_X
        return PAULI_Z

    def qubits(self) -> tuple:
        return (self.target,) if self.control is None else (self.control, self.target)


def RY(target: int, angle: float) -> Gate:
    return Gate("RY", target, angle=float(angle))


def RZ(target: int, angle: float) -> Gate:
    return Gate("RZ", target, angle=float(angle))


def H(target: int) -> Gate:
    return Gate("H", target)


def CZ(control: int, target: int) -> Gate:
    return Gate("CZ", target, control=control)


def CNOT(control: int, target: int) -> Gate:
    return Gate("CNOT", target, control=control)


@dataclass(frozen=True)
class DensityMatrix1Q:
    entries: np.ndarray
    qubit: int


def zero_state(num_qubits: int) -> StateVector:
    if not isinstance(num_qubits, (int, np.integer)) or not 1 <= num_qubits <= MAX_QUBITS:
        raise ConfigurationError(f"qubit count must be in [1, {MAX_QUBITS}], got {num_qubits!r}")
    amps = np.zeros(1 << int(num_qubits), dtype=np.complex128)
    amps[0] = 1.0
    return StateVector(int(num_qubits), amps)


def _check_qubit(q, num_qubits: int) -> None:
    if not isinstance(q, (int, np.integer)) or not 0 <= q < num_qubits:
        raise UsageError(f"qubit index {q!r} out of range for {num_qubits} qubits")


def _apply_inplace(psi: np.ndarray, num_qubits: int, gate: Gate) -> None:
    """Apply ``gate`` to the raw amplitude buffer ``psi`` (modified in place)."""
    t = gate.target
    if gate.kind in _TWO_QUBIT:
        c = gate.control
        # tensor axis of qubit q is Q-1-q
        tensor = psi.reshape((2,) * num_qubits)
        idx = [slice(None)] * num_qubits
        idx[num_qubits - 1 - c] = 1
        if gate.kind == "CZ":
            idx[num_qubits - 1 - t] = 1
            tensor[tuple(idx)] *= -1.0
        else:
            sub = tensor[tuple(idx)]
            axis = num_qubits - 1 - t
            if axis > num_qubits - 1 - c:
                axis -= 1
            sub[...] = np.flip(sub, axis=axis).copy()
        return
    # pairs (i, i + 2^t) are the strided blocks of this view
    view = psi.reshape(-1, 2, 1 << t)
    u = gate.matrix()
    lo = view[:, 0, :].copy()
    hi = view[:, 1, :]
    view[:, 0, :] = u[0, 0] * lo + u[0, 1] * hi
    view[:, 1, :] = u[1, 0] * lo + u[1, 1] * hi


def apply_gate(state: StateVector, gate: Gate) -> StateVector:
    for q in gate.qubits():
        _check_qubit(q, state.num_qubits)
    psi = state.amplitudes.copy()
    _apply_inplace(psi, state.num_qubits, gate)
    return StateVector(state.num_qubits, psi)


def run_circuit(state: StateVector, gates) -> StateVector:
    """Apply a gate sequence, allocating a single working buffer."""
    psi = state.amplitudes.copy()
    for gate in gates:
        for q in gate.qubits():
            _check_qubit(q, state.num_qubits)
        _apply_inplace(psi, state.num_qubits, gate)
    return StateVector(state.num_qubits, psi)


def pauli_z_expectations(state: StateVector) -> np.ndarray:
    probs = state.probabilities
    out = np.empty(state.num_qubits)
    for q in range(state.num_qubits):
        view = probs.reshape(-1, 2, 1 << q)
        out[q] = view[:, 0, :].sum() - view[:, 1, :].sum()
    return np.clip(out, -1.0, 1.0)


def overlap_magnitude(a: StateVector, b: StateVector) -> float:
    if a.num_qubits != b.num_qubits:
        raise UsageError(f"qubit count mismatch: {a.num_qubits} vs {b.num_qubits}")
    return float(min(abs(np.vdot(a.amplitudes, b.amplitudes)), 1.0))


def reduced_density_matrix(state: StateVector, qubit: int) -> DensityMatrix1Q:
    _check_qubit(qubit, state.num_qubits)
    view = state.amplitudes.reshape(-1, 2, 1 << qubit)
    rho = np.einsum("iaj,ibj->ab", view, view.conj())
    rho = 0.5 * (rho + rho.conj().T)
    return DensityMatrix1Q(rho, int(qubit))


def pauli_expectations_1q(rho: DensityMatrix1Q) -> tuple:
    """Return ``(<X>, <Y>, <Z>)`` as ``Tr[P rho]`` for the three Paulis."""
    values = []
    for pauli in (PAULI_X, PAULI_Y, PAULI_Z):
        v = np.trace(pauli @ rho.entries)
        if abs(v.imag) > 1e-10:
            raise UsageError(f"density matrix is not Hermitian (imaginary residue {v.imag!r})")
        values.append(float(np.clip(v.real, -1.0, 1.0)))
    return tuple(values)


def bloch_vectors(state: StateVector) -> np.ndarray:
    """Per-qubit Bloch vectors, shape ``(Q, 3)``, read off the reduced density matrices."""
    out = np.empty((state.num_qubits, 3))
    for q in range(state.num_qubits):
        rho = reduced_density_matrix(state, q).entries
        out[q, 0] = 2.0 * rho[0, 1].real
        out[q, 1] = -2.0 * rho[0, 1].imag
        out[q, 2] = (rho[0, 0] - rho[1, 1]).real
    return out


def sample_outcomes(state: StateVector, shots: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``shots`` computational-basis outcomes (basis indices) from ``|amplitudes|^2``."""
    if shots < 1:
        raise UsageError(f"shots must be >= 1, got {shots}")
    probs = state.probabilities
    probs = probs / probs.sum()
    return rng.choice(probs.size, size=shots, p=probs)


def outcome_bits(outcomes: np.ndarray, num_qubits: int) -> np.ndarray:
    """Unpack basis indices into a ``(shots, Q)`` 0/1 array (column q is qubit q)."""
    return (outcomes[:, None] >> np.arange(num_qubits)) & 1
