"""Quantum and classical kernels, Gram assembly and the binary Gram file format.

Quantum kinds take raw feature vectors and encode them with an
:class:`~qkl.encoding.EncodingSpec`.  Classical kinds take plain vectors; when a
spec is supplied they are evaluated on the Z-measurement embeddings of the
inputs instead (the "linear kernel over quantum measurements" reading).
"""

from __future__ import annotations

import json
import re
import struct
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist, pdist, squareform

from . import statevec as sv
from .encoding import EXACT, EncodingSpec, Mode, Shots, _child_rng, encode, measure_embeddings
from .errors import DataError, UsageError

QUANTUM_FIDELITY = "quantum_fidelity"
QUANTUM_PROJECTED_GAUSSIAN = "quantum_projected_gaussian"
CLASSICAL_RBF = "classical_rbf"
CLASSICAL_LINEAR = "classical_linear"
CLASSICAL_COSINE = "classical_cosine"

VARIANTS = (QUANTUM_FIDELITY, QUANTUM_PROJECTED_GAUSSIAN, CLASSICAL_RBF, CLASSICAL_LINEAR, CLASSICAL_COSINE)
QUANTUM_VARIANTS = (QUANTUM_FIDELITY, QUANTUM_PROJECTED_GAUSSIAN)
UNIT_DIAGONAL = (QUANTUM_FIDELITY, QUANTUM_PROJECTED_GAUSSIAN, CLASSICAL_RBF, CLASSICAL_COSINE)

GRAM_MAGIC = b"QGRAM1"


@dataclass(frozen=True)
class KernelKind:
    """Kernel variant plus its parameters.

    ``gamma`` is used by the Gaussian kinds.  ``fidelity_power`` selects
    ``|<a|b>|`` (1, the default) or the PSD-guaranteed ``|<a|b>|^2`` (2).
    """

    variant: str = QUANTUM_PROJECTED_GAUSSIAN
    gamma: float = 1.0
    fidelity_power: int = 1

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise UsageError(f"unknown kernel variant {self.variant!r}")
        if not self.gamma > 0:
            raise UsageError(f"gamma must be > 0, got {self.gamma!r}")
        if self.fidelity_power not in (1, 2):
            raise UsageError("fidelity_power must be 1 or 2")

    @property
    def is_quantum(self) -> bool:
        return self.variant in QUANTUM_VARIANTS

    @property
    def unit_diagonal(self) -> bool:
        return self.variant in UNIT_DIAGONAL

    @property
    def tag(self) -> str:
        if self.variant == QUANTUM_FIDELITY:
            return f"{self.variant}(power={self.fidelity_power})"
        if self.variant in (QUANTUM_PROJECTED_GAUSSIAN, CLASSICAL_RBF):
            return f"{self.variant}(gamma={self.gamma!r})"
        return self.variant

    @classmethod
    def from_tag(cls, tag: str) -> "KernelKind":
        m = re.fullmatch(r"(\w+)(?:\((\w+)=([^)]+)\))?", tag)
        if not m or m.group(1) not in VARIANTS:
            raise DataError(f"unrecognized kernel tag {tag!r}")
        variant, key, value = m.groups()
        if key == "gamma":
            return cls(variant, gamma=float(value))
        if key == "power":
            return cls(variant, fidelity_power=int(value))
        return cls(variant)


def _provenance(mode: Mode) -> str:
    return "exact" if mode == EXACT else f"shots(n={mode.n},seed={mode.seed})"


@dataclass
class GramMatrix:
    values: np.ndarray
    kind: KernelKind
    row_ids: list = field(default_factory=list)
    provenance: str = "exact"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        n = self.values.shape[0]
        if self.values.shape != (n, n):
            raise UsageError(f"Gram matrix must be square, got {self.values.shape}")
        if not self.row_ids:
            self.row_ids = [str(i) for i in range(n)]
        if len(self.row_ids) != n:
            raise UsageError("row_ids length does not match Gram size")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.values).min())

    def check(self, sym_tol=1e-9, diag_tol=1e-9, eig_tol=-1e-7) -> dict:
        """Report on the Gram invariants; each entry is ``(ok, measured)``."""
        asym = float(np.abs(self.values - self.values.T).max())
        report = {"symmetric": (asym <= sym_tol, asym)}
        if self.kind.unit_diagonal:
            dev = float(np.abs(np.diag(self.values) - 1.0).max())
            report["unit_diagonal"] = (dev <= diag_tol, dev)
        lam = self.min_eigenvalue()
        report["psd"] = (lam >= eig_tol, lam)
        return report


# pairwise kernels ---------------------------------------------------------


def fidelity_kernel(spec: EncodingSpec, x_i, x_j, power: int = 1) -> float:
    """``|<phi(x_i)|phi(x_j)>|`` (or its square with ``power=2``)."""
    return sv.overlap_magnitude(encode(spec, x_i), encode(spec, x_j)) ** power


def projected_gaussian_kernel(spec: EncodingSpec, x_i, x_j, gamma: float = 1.0) -> float:
    """Gaussian kernel over per-qubit Bloch vectors of the one-qubit reduced states.

    ``exp(-gamma * sum_k sum_P (Tr[P rho_k(x_i)] - Tr[P rho_k(x_j)])^2)``
    with ``P`` ranging over X, Y, Z.
    """
    if not gamma > 0:
        raise UsageError(f"gamma must be > 0, got {gamma!r}")
    a, b = encode(spec, x_i), encode(spec, x_j)
    dist2 = 0.0
    for k in range(spec.num_qubits):
        pa = sv.pauli_expectations_1q(sv.reduced_density_matrix(a, k))
        pb = sv.pauli_expectations_1q(sv.reduced_density_matrix(b, k))
        dist2 += sum((u - v) ** 2 for u, v in zip(pa, pb))
    return float(np.exp(-gamma * dist2))


def classical_kernel(kind: KernelKind, y_i, y_j) -> float:
    y_i, y_j = np.asarray(y_i, dtype=float), np.asarray(y_j, dtype=float)
    if y_i.shape != y_j.shape:
        raise UsageError(f"dimension mismatch: {y_i.shape} vs {y_j.shape}")
    if kind.variant == CLASSICAL_RBF:
        return float(np.exp(-kind.gamma * np.sum((y_i - y_j) ** 2)))
    if kind.variant == CLASSICAL_LINEAR:
        return float(y_i @ y_j)
    if kind.variant == CLASSICAL_COSINE:
        ni, nj = np.linalg.norm(y_i), np.linalg.norm(y_j)
        if ni == 0 or nj == 0:
            raise UsageError("cosine kernel is undefined for a zero vector")
        return float(y_i @ y_j / (ni * nj))
    raise UsageError(f"{kind.variant} is not a classical kernel")


def kernel_value(kind: KernelKind, spec: Optional[EncodingSpec], a, b) -> float:
    """Single exact kernel evaluation; the pairwise reference for the batch paths."""
    if kind.variant == QUANTUM_FIDELITY:
        return fidelity_kernel(spec, a, b, kind.fidelity_power)
    if kind.variant == QUANTUM_PROJECTED_GAUSSIAN:
        return projected_gaussian_kernel(spec, a, b, kind.gamma)
    if spec is not None:
        a, b = measure_embeddings(spec, np.vstack([a, b]))
    return classical_kernel(kind, a, b)


# batch assembly -----------------------------------------------------------


def _as_matrix(X, what="X") -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1 and X.size:
        X = X[None, :]
    if X.ndim != 2 or X.size == 0:
        raise UsageError(f"{what} must be a non-empty list of equal-length vectors")
    return X


def _states(spec: EncodingSpec, X: np.ndarray) -> np.ndarray:
    return np.array([encode(spec, x).amplitudes for x in X])


def _basis_change(basis: str, Q: int) -> list:
    # RZ(-pi/2) equals S^dagger up to a global phase
    if basis == "X":
        return [sv.H(q) for q in range(Q)]
    if basis == "Y":
        return [g for q in range(Q) for g in (sv.RZ(q, -np.pi / 2), sv.H(q))]
    return []


def _shot_bloch(state: sv.StateVector, shots: int, rng: np.random.Generator) -> np.ndarray:
    """Estimate all Bloch vectors from three jointly measured bases (X, Y, Z)."""
    Q = state.num_qubits
    out = np.empty((Q, 3))
    for col, basis in enumerate("XYZ"):
        s = sv.run_circuit(state, _basis_change(basis, Q))
        bits = sv.outcome_bits(sv.sample_outcomes(s, shots, rng), Q)
        out[:, col] = 1.0 - 2.0 * bits.mean(axis=0)
    return out


def bloch_features(spec: EncodingSpec, X, mode: Mode = EXACT, keys=None) -> np.ndarray:
    """Flattened per-qubit Bloch vectors, shape ``(N, 3Q)``."""
    X = _as_matrix(X)
    keys = range(X.shape[0]) if keys is None else keys
    out = np.empty((X.shape[0], 3 * spec.num_qubits))
    for i, (x, key) in enumerate(zip(X, keys)):
        state = encode(spec, x)
        if isinstance(mode, Shots):
            out[i] = _shot_bloch(state, mode.n, _child_rng(mode.seed, key)).ravel()
        else:
            out[i] = sv.bloch_vectors(state).ravel()
    return out


def kernel_inputs(kind: KernelKind, spec: Optional[EncodingSpec], X, mode: Mode = EXACT, keys=None):
    """The vectors a vector-space kernel compares (Bloch vectors, embeddings or X itself)."""
    X = _as_matrix(X)
    if kind.variant == QUANTUM_PROJECTED_GAUSSIAN:
        return bloch_features(spec, X, mode, keys)
    if kind.variant == QUANTUM_FIDELITY:
        return measure_embeddings(spec, X, mode, keys)
    if spec is not None:
        return measure_embeddings(spec, X, mode, keys)
    return X


def _vector_kernel(kind: KernelKind, A: np.ndarray, B: Optional[np.ndarray]) -> np.ndarray:
    if kind.variant in (QUANTUM_PROJECTED_GAUSSIAN, CLASSICAL_RBF):
        d2 = squareform(pdist(A, "sqeuclidean")) if B is None else cdist(B, A, "sqeuclidean")
        return np.exp(-kind.gamma * d2)
    B = A if B is None else B
    if kind.variant == CLASSICAL_LINEAR:
        return B @ A.T
    na, nb = np.linalg.norm(A, axis=1), np.linalg.norm(B, axis=1)
    if np.any(na == 0) or np.any(nb == 0):
        raise UsageError("cosine kernel is undefined for a zero vector")
    return (B / nb[:, None]) @ (A / na[:, None]).T


def _shot_fidelity(p: float, shots: int, rng: np.random.Generator) -> float:
    # all-zeros count of the compute-uncompute circuit is Binomial(shots, |<a|b>|^2)
    return rng.binomial(shots, min(max(p, 0.0), 1.0)) / shots


def _fidelity_block(kind, SA, SB, mode, keys_a, keys_b, symmetric) -> np.ndarray:
    overlap = np.clip(np.abs(SB.conj() @ SA.T), 0.0, 1.0)
    if not isinstance(mode, Shots):
        return overlap ** kind.fidelity_power
    out = np.empty_like(overlap)
    for t in range(out.shape[0]):
        for i in range(out.shape[1]):
            if symmetric and i < t:
                continue
            a, b = sorted((int(keys_b[t]), int(keys_a[i])))
            est = _shot_fidelity(overlap[t, i] ** 2, mode.n, _child_rng(mode.seed, a, b))
            out[t, i] = est if kind.fidelity_power == 2 else np.sqrt(est)
    return out


def _mirror_upper(G: np.ndarray) -> np.ndarray:
    upper = np.triu(G)
    return upper + np.triu(G, 1).T


def gram_matrix(
    kind: KernelKind,
    spec: Optional[EncodingSpec],
    X,
    mode: Mode = EXACT,
    row_ids: Optional[Sequence] = None,
    keys=None,
) -> GramMatrix:
    """Symmetric Gram matrix over the rows of ``X``.

    The upper triangle is authoritative and mirrored.  In shot mode each
    unordered pair (fidelity) or each row (vector kinds) gets its own seeded
    generator derived from ``mode.seed`` and ``keys``.
    """
    X = _as_matrix(X)
    keys = list(range(X.shape[0])) if keys is None else list(keys)
    if kind.is_quantum and spec is None:
        raise UsageError(f"{kind.variant} needs an encoding spec")
    if kind.variant == QUANTUM_FIDELITY:
        S = _states(spec, X)
        G = _fidelity_block(kind, S, S, mode, keys, keys, symmetric=True)
    else:
        V = kernel_inputs(kind, spec, X, mode, keys)
        G = _vector_kernel(kind, V, None)
    G = _mirror_upper(G)
    ids = [str(r) for r in row_ids] if row_ids is not None else None
    return GramMatrix(G, kind, ids or [], _provenance(mode))


def cross_gram(
    kind: KernelKind,
    spec: Optional[EncodingSpec],
    X_train,
    X_test,
    mode: Mode = EXACT,
    train_keys=None,
    test_keys=None,
) -> np.ndarray:
    """Rectangular kernel matrix, entry ``[t, i] = k(x_test[t], x_train[i])``."""
    A = _as_matrix(X_train, "X_train")
    B = _as_matrix(X_test, "X_test")
    if A.shape[1] != B.shape[1]:
        raise UsageError("train and test dimensions differ")
    train_keys = list(range(A.shape[0])) if train_keys is None else list(train_keys)
    if test_keys is None:
        test_keys = list(range(A.shape[0], A.shape[0] + B.shape[0]))
    if kind.is_quantum and spec is None:
        raise UsageError(f"{kind.variant} needs an encoding spec")
    if kind.variant == QUANTUM_FIDELITY:
        return _fidelity_block(kind, _states(spec, A), _states(spec, B), mode, train_keys, test_keys, False)
    VA = kernel_inputs(kind, spec, A, mode, train_keys)
    VB = kernel_inputs(kind, spec, B, mode, test_keys)
    return _vector_kernel(kind, VA, VB)


# persistence --------------------------------------------------------------


def _pack_text(text: str) -> bytes:
    raw = text.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def save_gram(gram: GramMatrix, path) -> None:
    """Write ``QGRAM1`` header, N, length-prefixed kind/provenance/row-id texts, then N*N <f8."""
    header = GRAM_MAGIC + struct.pack("<I", gram.n)
    header += _pack_text(gram.kind.tag) + _pack_text(gram.provenance) + _pack_text(json.dumps(gram.row_ids))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(gram.values, dtype="<f8").tobytes())


def load_gram(path, expected_n: Optional[int] = None) -> GramMatrix:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:6] != GRAM_MAGIC:
        raise DataError(f"{path}: not a Gram file (bad magic)")
    pos = 6
    try:
        (n,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        texts = []
        for _ in range(3):
            (length,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            texts.append(blob[pos:pos + length].decode("utf-8"))
            pos += length
    except (struct.error, UnicodeDecodeError) as exc:
        raise DataError(f"{path}: truncated or corrupt header") from exc
    if expected_n is not None and n != expected_n:
        raise DataError(f"{path}: Gram size {n} does not match expected {expected_n}")
    payload = blob[pos:]
    if len(payload) != 8 * n * n:
        raise DataError(f"{path}: payload holds {len(payload)} bytes, expected {8 * n * n}")
    values = np.frombuffer(payload, dtype="<f8").reshape(n, n).astype(float)
    return GramMatrix(values, KernelKind.from_tag(texts[0]), json.loads(texts[2]), texts[1])
