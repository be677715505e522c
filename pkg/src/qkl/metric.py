"""Metric learning on measurement embeddings.

A linear projection head with a learnable affine cosine similarity
``w * cos(a, b) + b`` is trained with the angular prototypical loss plus a
weighted softmax GE2E term.  All gradients are analytic.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np
from scipy.spatial.distance import pdist
from scipy.special import logsumexp, softmax

from .errors import ConfigurationError, NumericError, UsageError

W_MIN = 1e-6


@dataclass
class EmbeddingBatch:
    support: np.ndarray  # (classes, M, d)
    query: np.ndarray  # (classes, d)

    def __post_init__(self):
        self.support = np.asarray(self.support, dtype=float)
        self.query = np.asarray(self.query, dtype=float)
        if self.support.ndim != 3 or self.query.shape != (self.support.shape[0], self.support.shape[2]):
            raise UsageError("support must be (C, M, d) and query (C, d)")
        if self.support.shape[0] < 2 or self.support.shape[1] < 1:
            raise UsageError("a batch needs at least 2 classes and 1 support vector each")
        if not (np.all(np.isfinite(self.support)) and np.all(np.isfinite(self.query))):
            raise UsageError("batch contains non-finite values")

    @property
    def n_classes(self) -> int:
        return self.support.shape[0]


@dataclass
class ProjectionHead:
    weight: np.ndarray
    w: float = 10.0
    b: float = -5.0

    @classmethod
    def identity(cls, dim: int) -> "ProjectionHead":
        return cls(np.eye(dim))

    def project(self, X) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.weight.T

    def copy(self) -> "ProjectionHead":
        return ProjectionHead(self.weight.copy(), float(self.w), float(self.b))

    def to_dict(self) -> dict:
        return {"weight": self.weight.tolist(), "w": self.w, "b": self.b}

    @classmethod
    def from_dict(cls, data: dict) -> "ProjectionHead":
        return cls(np.array(data["weight"], dtype=float), float(data["w"]), float(data["b"]))


def _unit_rows(A):
    norms = np.linalg.norm(A, axis=-1, keepdims=True)
    if np.any(norms == 0):
        raise NumericError("cosine similarity is undefined for a zero-norm projected vector")
    return A / norms, norms


def _cos_back(dA_hat, A_hat, norms):
    """Backpropagate through row normalization ``A -> A / |A|``."""
    return (dA_hat - np.sum(dA_hat * A_hat, axis=-1, keepdims=True) * A_hat) / norms


def _cross_entropy(logits, targets):
    n = logits.shape[0]
    loss = float(np.mean(logsumexp(logits, axis=1) - logits[np.arange(n), targets]))
    dlogits = softmax(logits, axis=1)
    dlogits[np.arange(n), targets] -= 1.0
    return loss, dlogits / n


def angular_proto_loss(batch: EmbeddingBatch, head: ProjectionHead):
    """Angular prototypical loss and its gradients.

    Returns ``(loss, grads)`` with ``grads`` keyed by ``weight``, ``w``, ``b``,
    ``support`` and ``query``.
    """
    W = head.weight
    Ps = batch.support @ W.T
    Pq = batch.query @ W.T
    M = Ps.shape[1]
    proto = Ps.mean(axis=1)
    q_hat, q_norm = _unit_rows(Pq)
    p_hat, p_norm = _unit_rows(proto)
    cos = q_hat @ p_hat.T
    loss, dlogits = _cross_entropy(head.w * cos + head.b, np.arange(batch.n_classes))

    dcos = head.w * dlogits
    dPq = _cos_back(dcos @ p_hat, q_hat, q_norm)
    dproto = _cos_back(dcos.T @ q_hat, p_hat, p_norm)
    dPs = np.repeat(dproto[:, None, :] / M, M, axis=1)
    grads = {
        "weight": dPq.T @ batch.query + np.einsum("cmo,cmi->oi", dPs, batch.support),
        "w": float(np.sum(dlogits * cos)),
        "b": float(np.sum(dlogits)),
        "support": dPs @ W,
        "query": dPq @ W,
    }
    return loss, grads


def ge2e_loss(batch: EmbeddingBatch, head: ProjectionHead):
    """Softmax GE2E loss over the support vectors, with gradients.

    Each vector is compared with every class centroid; its own class centroid
    leaves the vector out, so at least two support vectors per class are needed.
    """
    X = batch.support
    C, M, _ = X.shape
    if M < 2:
        raise UsageError("GE2E needs at least 2 support vectors per class")
    W = head.weight
    E = X @ W.T
    S = E.sum(axis=1)
    cent = S / M
    excl = (S[:, None, :] - E) / (M - 1)

    rows = E.reshape(C * M, -1)
    own = np.repeat(np.arange(C), M)
    r_hat, r_norm = _unit_rows(rows)
    c_hat, c_norm = _unit_rows(cent)
    x_hat, x_norm = _unit_rows(excl.reshape(C * M, -1))
    cos = r_hat @ c_hat.T
    cos_own = np.sum(r_hat * x_hat, axis=1)
    cos[np.arange(C * M), own] = cos_own
    loss, dlogits = _cross_entropy(head.w * cos + head.b, own)

    dcos = head.w * dlogits
    d_own = dcos[np.arange(C * M), own].copy()
    dcos[np.arange(C * M), own] = 0.0
    d_rows = _cos_back(dcos @ c_hat + d_own[:, None] * x_hat, r_hat, r_norm)
    d_cent = _cos_back(dcos.T @ r_hat, c_hat, c_norm)
    d_excl = _cos_back(d_own[:, None] * r_hat, x_hat, x_norm).reshape(C, M, -1)

    dE = d_rows.reshape(C, M, -1) + d_cent[:, None, :] / M
    dE += d_excl.sum(axis=1, keepdims=True) / (M - 1) - d_excl / (M - 1)
    grads = {
        "weight": np.einsum("cmo,cmi->oi", dE, X),
        "w": float(np.sum(dlogits * cos)),
        "b": float(np.sum(dlogits)),
        "support": dE @ W,
        "query": np.zeros_like(batch.query),
    }
    return loss, grads


def joint_loss(batch: EmbeddingBatch, head: ProjectionHead, joint_weight: float = 1.0):
    loss, grads = angular_proto_loss(batch, head)
    if joint_weight:
        l2, g2 = ge2e_loss(batch, head)
        loss += joint_weight * l2
        for key in ("weight", "support", "query"):
            grads[key] = grads[key] + joint_weight * g2[key]
        grads["w"] += joint_weight * g2["w"]
        grads["b"] += joint_weight * g2["b"]
    return loss, grads


def cluster_distance(X, labels) -> float:
    """Mean within-class distance to centroid divided by mean between-centroid distance."""
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels)
    classes = sorted(set(labels.tolist()))
    if len(classes) < 2:
        raise UsageError("cluster distance needs at least two classes")
    centroids, spread = [], []
    for c in classes:
        members = X[labels == c]
        centroid = members.mean(axis=0)
        centroids.append(centroid)
        spread.append(np.linalg.norm(members - centroid, axis=1).mean())
    inter = pdist(np.array(centroids)).mean()
    intra = float(np.mean(spread))
    if inter == 0:
        if intra == 0:
            return 0.0
        raise NumericError("all class centroids coincide")
    return intra / inter


@dataclass(frozen=True)
class MetricConfig:
    enabled: bool = False
    lr: float = 0.05
    epochs: int = 20
    joint_weight: float = 1.0
    classes_per_batch: int = 4
    support: int = 3
    episodes_per_epoch: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0 or self.epochs < 0 or self.classes_per_batch < 2 or self.support < 1:
            raise ConfigurationError("invalid metric config (lr > 0, epochs >= 0, classes >= 2, support >= 1)")
        if self.joint_weight < 0:
            raise ConfigurationError("joint_weight must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "MetricConfig":
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigurationError(f"unknown metric keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class TrainLog:
    epoch: list = field(default_factory=list)
    loss: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    cluster_distance: list = field(default_factory=list)

    def append(self, epoch, loss, grad_norm, dist):
        values = (loss, grad_norm, dist)
        if not all(math.isfinite(v) for v in values):
            raise NumericError(f"non-finite training statistics at epoch {epoch}: {values}")
        self.epoch.append(epoch)
        self.loss.append(loss)
        self.grad_norm.append(grad_norm)
        self.cluster_distance.append(dist)

    def rows(self):
        return list(zip(self.epoch, self.loss, self.grad_norm, self.cluster_distance))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "loss", "grad_norm", "cluster_distance"])
            writer.writerows((e, repr(l), repr(g), repr(d)) for e, l, g, d in self.rows())


def _sample_batch(rng, by_class, classes_per_batch, support):
    chosen = rng.choice(len(by_class), size=classes_per_batch, replace=False)
    picks = [rng.choice(by_class[k], size=support + 1, replace=False) for k in chosen]
    return picks


def train_head(embeddings, labels, cfg: MetricConfig, probe=None):
    """Fit a :class:`ProjectionHead` by mini-batch gradient descent on the joint loss.

    ``probe`` is an optional ``(vectors, labels)`` pair used only for the
    per-epoch cluster-distance log; it never influences the parameters.
    """
    Y = np.asarray(embeddings, dtype=float)
    labels = np.asarray(labels)
    classes = sorted(set(labels.tolist()))
    by_class = [np.flatnonzero(labels == c) for c in classes]
    if len(classes) < 2:
        raise UsageError("metric training needs at least two classes")
    short = [c for c, idx in zip(classes, by_class) if len(idx) < cfg.support + 1]
    if short:
        raise UsageError(f"classes {short} have fewer than {cfg.support + 1} samples")
    if cfg.joint_weight and cfg.support < 2:
        raise UsageError("the GE2E term needs support >= 2")

    head = ProjectionHead.identity(Y.shape[1])
    log = TrainLog()
    if cfg.epochs == 0:
        return head, log
    rng = np.random.default_rng(cfg.seed)
    cb = min(cfg.classes_per_batch, len(classes))
    episodes = cfg.episodes_per_epoch or max(1, len(Y) // (cb * (cfg.support + 1)))
    probe_X, probe_y = (Y, labels) if probe is None else (np.asarray(probe[0]), np.asarray(probe[1]))
    for epoch in range(1, cfg.epochs + 1):
        losses, norms = [], []
        for _ in range(episodes):
            picks = _sample_batch(rng, by_class, cb, cfg.support)
            batch = EmbeddingBatch(
                support=np.stack([Y[p[1:]] for p in picks]),
                query=np.stack([Y[p[0]] for p in picks]),
            )
            loss, g = joint_loss(batch, head, cfg.joint_weight)
            head.weight = head.weight - cfg.lr * g["weight"]
            head.w = max(head.w - cfg.lr * g["w"], W_MIN)
            head.b = head.b - cfg.lr * g["b"]
            losses.append(loss)
            norms.append(math.sqrt(np.sum(g["weight"] ** 2) + g["w"] ** 2 + g["b"] ** 2))
        log.append(epoch, float(np.mean(losses)), float(np.mean(norms)),
                   cluster_distance(head.project(probe_X), probe_y))
    return head, log

