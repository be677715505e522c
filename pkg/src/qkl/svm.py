"""One-vs-rest soft-margin SVM over precomputed Gram matrices, trained by SMO.

Each binary problem solves the dual

    min_a  1/2 a^T Q a - sum(a)    s.t.  0 <= a <= C,  y^T a = 0,

with ``Q_ij = y_i y_j K_ij``.  The working pair is the maximal KKT
violating pair; the decision function is ``sum_i a_i y_i K(x, x_i) + b``.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigurationError, DataError, NumericError, UsageError

log = logging.getLogger(__name__)

MODEL_FORMAT = "qkl-svm"
MODEL_VERSION = 1
_TAU = 1e-12


@dataclass(frozen=True)
class SvmConfig:
    C: float = 1.0
    tol: float = 1e-3
    max_passes: int = 1000
    eig_clamp: float = -1e-7
    seed: int = 0
    n_jobs: int = 1

    def __post_init__(self):
        if not self.C > 0:
            raise ConfigurationError(f"C must be > 0, got {self.C!r}")
        if not self.tol > 0:
            raise ConfigurationError(f"tol must be > 0, got {self.tol!r}")
        if self.max_passes < 1:
            raise ConfigurationError("max_passes must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SvmConfig":
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigurationError(f"unknown svm keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class BinarySolution:
    alpha: np.ndarray
    bias: float
    objective: float
    iterations: int
    kkt_gap: float
    history: list = field(default_factory=list)


def dual_objective(K: np.ndarray, y: np.ndarray, alpha: np.ndarray) -> float:
    """Dual objective ``sum(a) - 1/2 (a*y)^T K (a*y)`` (to be maximized)."""
    ay = alpha * y
    return float(alpha.sum() - 0.5 * ay @ K @ ay)


def _bias(y, G, alpha, C) -> float:
    yG = y * G
    free = (alpha > 0) & (alpha < C)
    if np.any(free):
        rho = yG[free].mean()
    else:
        at_zero, at_c = alpha <= 0, alpha >= C
        upper = ((y > 0) & at_zero) | ((y < 0) & at_c)
        lower = ((y < 0) & at_zero) | ((y > 0) & at_c)
        ub = yG[upper].min() if np.any(upper) else np.inf
        lb = yG[lower].max() if np.any(lower) else -np.inf
        rho = 0.5 * (ub + lb) if np.isfinite(ub) and np.isfinite(lb) else (ub if np.isfinite(ub) else lb)
    return float(-rho)


def smo_binary(
    K: np.ndarray,
    y: np.ndarray,
    C: float = 1.0,
    tol: float = 1e-3,
    max_iter: int = 100_000,
    seed: int = 0,
    record_history: bool = False,
) -> BinarySolution:
    """Solve one binary dual problem; ``y`` holds +/-1 labels."""
    n = len(y)
    y = np.asarray(y, dtype=float)
    rng = np.random.default_rng(seed)
    alpha = np.zeros(n)
    G = -np.ones(n)  # gradient of the minimized form, Q a - 1
    diag = np.diag(K).copy()
    history = []
    gap = np.inf
    it = 0
    while it < max_iter:
        minus_yG = -y * G
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        if not up.any() or not low.any():
            gap = 0.0
            break
        i = int(np.flatnonzero(up)[np.argmax(minus_yG[up])])
        m = minus_yG[i]
        candidates = np.flatnonzero(low & (minus_yG < m))
        gap = m - minus_yG[low].min()
        if gap <= tol or candidates.size == 0:
            break
        curv = diag[i] + diag[candidates] - 2.0 * K[i, candidates]
        gain = (m - minus_yG[candidates]) ** 2 / np.maximum(curv, _TAU)
        j = int(candidates[np.argmax(gain)])
        a = diag[i] + diag[j] - 2.0 * K[i, j]
        if a <= _TAU:
            # degenerate curvature along the chosen pair: retry with a random violator
            pd = candidates[curv > _TAU]
            if pd.size:
                j = int(rng.choice(pd))
                a = diag[i] + diag[j] - 2.0 * K[i, j]
        lim_i = C - alpha[i] if y[i] > 0 else alpha[i]
        lim_j = alpha[j] if y[j] > 0 else C - alpha[j]
        step = (m + y[j] * G[j]) / a if a > _TAU else np.inf
        step = min(step, lim_i, lim_j)
        old_i, old_j = alpha[i], alpha[j]
        alpha[i] = min(max(old_i + y[i] * step, 0.0), C)
        alpha[j] = min(max(old_j - y[j] * step, 0.0), C)
        d_i, d_j = alpha[i] - old_i, alpha[j] - old_j
        G += y * (K[:, i] * (y[i] * d_i) + K[:, j] * (y[j] * d_j))
        it += 1
        if record_history:
            history.append(dual_objective(K, y, alpha))
    else:
        log.warning("SMO stopped at max_iter=%d with KKT gap %.3g", max_iter, gap)
    return BinarySolution(alpha, _bias(y, G, alpha, C), dual_objective(K, y, alpha), it, float(gap), history)


@dataclass
class SvmModel:
    classes: list
    alphas: np.ndarray  # (n_classes, N)
    biases: np.ndarray  # (n_classes,)
    labels: np.ndarray  # (n_classes, N) of +/-1
    row_ids: list
    C: float = 1.0

    @property
    def support(self) -> list:
        return [np.flatnonzero(a > 0) for a in self.alphas]

    @property
    def n_train(self) -> int:
        return self.alphas.shape[1]


def _ovr_labels(labels, classes) -> np.ndarray:
    return np.array([[1.0 if lab == c else -1.0 for lab in labels] for c in classes])


def train(gram, labels: Sequence, cfg: Optional[SvmConfig] = None, row_ids=None) -> SvmModel:
    """Fit one binary SMO problem per class on a precomputed Gram matrix.

    ``gram`` is a :class:`~qkl.kernels.GramMatrix` or a plain square array.
    A Gram whose smallest eigenvalue falls below ``cfg.eig_clamp`` is rejected
    with :class:`NumericError`; recompute the kernel rather than training on it.
    """
    cfg = cfg or SvmConfig()
    K = np.asarray(getattr(gram, "values", gram), dtype=float)
    if row_ids is None:
        row_ids = list(getattr(gram, "row_ids", [])) or [str(i) for i in range(K.shape[0])]
    labels = list(labels)
    n = len(labels)
    if K.shape != (n, n):
        raise UsageError(f"Gram shape {K.shape} does not match {n} labels")
    if n < 2:
        raise UsageError("need at least two training points")
    classes = sorted(set(labels))
    if len(classes) < 2:
        raise UsageError("need at least two distinct labels")
    if not np.all(np.isfinite(K)):
        raise DataError("Gram matrix has non-finite entries")
    lam = float(np.linalg.eigvalsh(0.5 * (K + K.T)).min())
    if lam < cfg.eig_clamp:
        raise NumericError(f"Gram matrix is indefinite (min eigenvalue {lam:.3g} < {cfg.eig_clamp:g})")
    Y = _ovr_labels(labels, classes)
    max_iter = cfg.max_passes * max(n, 100)

    def solve(k):
        return smo_binary(K, Y[k], cfg.C, cfg.tol, max_iter, seed=cfg.seed + k)

    if cfg.n_jobs > 1 and len(classes) > 1:
        with ThreadPoolExecutor(cfg.n_jobs) as pool:
            sols = list(pool.map(solve, range(len(classes))))
    else:
        sols = [solve(k) for k in range(len(classes))]
    return SvmModel(
        classes=classes,
        alphas=np.array([s.alpha for s in sols]),
        biases=np.array([s.bias for s in sols]),
        labels=Y,
        row_ids=[str(r) for r in row_ids],
        C=cfg.C,
    )


def decision_values(model: SvmModel, cross, col_ids=None) -> np.ndarray:
    """Per-class scores, shape ``(n_test, n_classes)``."""
    cross = np.asarray(cross, dtype=float)
    if cross.size == 0:
        return np.zeros((0, len(model.classes)))
    cross = np.atleast_2d(cross)
    if cross.shape[1] != model.n_train:
        raise UsageError(f"cross-Gram has {cross.shape[1]} columns, model was trained on {model.n_train}")
    if col_ids is not None and [str(c) for c in col_ids] != model.row_ids:
        raise UsageError("cross-Gram columns are not aligned with the training rows")
    return cross @ (model.alphas * model.labels).T + model.biases


def predict(model: SvmModel, cross, col_ids=None) -> list:
    """Arg-max class per row; ties go to the lowest class index (sorted label order)."""
    scores = decision_values(model, cross, col_ids)
    return [model.classes[k] for k in np.argmax(scores, axis=1)] if len(scores) else []


def model_to_dict(model: SvmModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "C": model.C,
        "classes": model.classes,
        "row_ids": model.row_ids,
        "binary": [
            {
                "alpha": model.alphas[k].tolist(),
                "bias": float(model.biases[k]),
                "labels": model.labels[k].astype(int).tolist(),
                "support": model.support[k].tolist(),
            }
            for k in range(len(model.classes))
        ],
    }


def save_model(model: SvmModel, path) -> None:
    """Versioned JSON; floats are written with ``repr`` precision so reloads are bit-exact."""
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=1)


def model_from_dict(record: dict) -> SvmModel:
    if record.get("format") != MODEL_FORMAT or record.get("version") != MODEL_VERSION:
        raise DataError("not a version-1 SVM model record")
    binary = record["binary"]
    return SvmModel(
        classes=list(record["classes"]),
        alphas=np.array([b["alpha"] for b in binary], dtype=float),
        biases=np.array([b["bias"] for b in binary], dtype=float),
        labels=np.array([b["labels"] for b in binary], dtype=float),
        row_ids=list(record["row_ids"]),
        C=float(record["C"]),
    )


def load_model(path) -> SvmModel:
    try:
        with open(path) as fh:
            record = json.load(fh)
        return model_from_dict(record)
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise DataError(f"{path}: cannot read SVM model ({exc})") from exc
