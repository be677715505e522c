"""Angle encoding of classical vectors into simulated states and Z-basis readout."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Optional, Union

import numpy as np

from . import statevec as sv
from .errors import ConfigurationError, UsageError

ROTATION_AXES = ("RY", "RY-RZ")
ENTANGLERS = ("none", "cz_ring", "cnot_chain")


@dataclass(frozen=True)
class EncodingSpec:
    num_qubits: int = 8
    depth: int = 2
    rotation_axis: str = "RY"
    entangler: str = "cz_ring"
    feature_scale: float = math.pi
    data_reuploading: bool = True

    def __post_init__(self):
        if not 1 <= self.num_qubits <= sv.MAX_QUBITS:
            raise ConfigurationError(f"num_qubits must be in [1, {sv.MAX_QUBITS}]")
        if self.depth < 1:
            raise ConfigurationError(f"depth must be >= 1, got {self.depth}")
        if self.rotation_axis not in ROTATION_AXES:
            raise ConfigurationError(f"rotation_axis must be one of {ROTATION_AXES}")
        if self.entangler not in ENTANGLERS:
            raise ConfigurationError(f"entangler must be one of {ENTANGLERS}")
        if not math.isfinite(self.feature_scale) or self.feature_scale == 0:
            raise ConfigurationError("feature_scale must be finite and nonzero")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "EncodingSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown encoding keys: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class Shots:
    """Finite-shot measurement mode."""

    n: int
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise UsageError(f"shot count must be >= 1, got {self.n}")


EXACT = "exact"
Mode = Union[str, Shots]


@dataclass(frozen=True)
class Embedding:
    values: np.ndarray
    source: Mode = EXACT


def _check_input(spec: EncodingSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.num_qubits,):
        raise UsageError(f"input of shape {x.shape} does not match {spec.num_qubits} qubits")
    if not np.all(np.isfinite(x)):
        raise UsageError("input contains non-finite values")
    return x


def circuit(spec: EncodingSpec, x) -> list:
    """Gate list realizing the feature map for input ``x``."""
    x = _check_input(spec, x)
    angles = spec.feature_scale * x
    zeros = np.zeros_like(angles)
    Q = spec.num_qubits
    gates = []
    for layer in range(spec.depth):
        theta = angles if (layer == 0 or spec.data_reuploading) else zeros
        for q in range(Q):
            gates.append(sv.RY(q, theta[q]))
            if spec.rotation_axis == "RY-RZ":
                gates.append(sv.RZ(q, theta[q]))
        if spec.entangler == "cz_ring" and Q > 1:
            # a 2-qubit ring has a single edge
            pairs = [(q, (q + 1) % Q) for q in range(Q if Q > 2 else 1)]
            gates.extend(sv.CZ(a, b) for a, b in pairs)
        elif spec.entangler == "cnot_chain":
            gates.extend(sv.CNOT(q, q + 1) for q in range(Q - 1))
    return gates


def encode(spec: EncodingSpec, x) -> sv.StateVector:
    return sv.run_circuit(sv.zero_state(spec.num_qubits), circuit(spec, x))


def _child_rng(seed, *keys) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, keys)]))


def shot_z_means(state: sv.StateVector, shots: int, rng: np.random.Generator) -> np.ndarray:
    """Per-qubit mean of +/-1 Z outcomes over ``shots`` joint register samples."""
    bits = sv.outcome_bits(sv.sample_outcomes(state, shots, rng), state.num_qubits)
    return 1.0 - 2.0 * bits.mean(axis=0)


def measure_embedding(spec: EncodingSpec, x, mode: Mode = EXACT) -> Embedding:
    state = encode(spec, x)
    if mode == EXACT:
        return Embedding(sv.pauli_z_expectations(state), EXACT)
    if not isinstance(mode, Shots):
        raise UsageError(f"mode must be 'exact' or Shots, got {mode!r}")
    rng = np.random.default_rng(mode.seed)
    return Embedding(shot_z_means(state, mode.n, rng), mode)


def measure_embeddings(spec: EncodingSpec, X, mode: Mode = EXACT, keys=None) -> np.ndarray:
    """Embed every row of ``X``.

    In shot mode row ``i`` samples with a generator derived from
    ``(mode.seed, keys[i])``; ``keys`` defaults to the row positions.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    keys = range(X.shape[0]) if keys is None else keys
    out = np.empty((X.shape[0], spec.num_qubits))
    for i, (x, key) in enumerate(zip(X, keys)):
        if isinstance(mode, Shots):
            state = encode(spec, x)
            out[i] = shot_z_means(state, mode.n, _child_rng(mode.seed, key))
        else:
            out[i] = measure_embedding(spec, x, mode).values
    return out


def resolve_mode(shots: Optional[int], seed: int) -> Mode:
    return EXACT if shots is None else Shots(int(shots), int(seed))
