"""Experiment orchestration: configs, manifests, folds, per-fold fitting, result tables.

A fold runs features -> (optional metric head) -> kernel -> SVM -> accuracy.
Every statistic fitted inside a fold (normalization bounds, PCA, projection
head, SVM) sees only that fold's training rows.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .encoding import EncodingSpec, measure_embeddings, resolve_mode
from .errors import ConfigurationError, DataError, QKLError, UsageError
from .features import FeatureConfig, FeatureReducer, Waveform, load_wav, utterance_vector
from .kernels import QUANTUM_VARIANTS, VARIANTS, KernelKind, cross_gram, gram_matrix, kernel_inputs
from .metric import MetricConfig, ProjectionHead, TrainLog, cluster_distance, train_head
from .svm import SvmConfig, SvmModel, model_from_dict, model_to_dict, predict, train

log = logging.getLogger(__name__)

PROTOCOLS = ("kfold", "fixed", "sweep")
KERNEL_SPACES = ("embedding", "features")
RESULT_COLUMNS = ("label", "train_size", "mean_accuracy", "fold_accuracies", "cluster_distance")


# configuration ------------------------------------------------------------


def _strict(cls, data, section):
    unknown = set(data) - {f.name for f in fields(cls)}
    if unknown:
        raise ConfigurationError(f"unknown {section} keys: {sorted(unknown)}")
    return cls(**data)


@dataclass(frozen=True)
class KernelConfig:
    """Kernel choice.

    ``space`` only matters for classical kinds: ``embedding`` evaluates them on
    Z-measurement embeddings of the encoded features, ``features`` on the
    features directly.  ``shots=None`` means exact simulation.
    """

    kind: str = "quantum_projected_gaussian"
    gamma: float = 1.0
    fidelity_power: int = 1
    space: str = "embedding"
    shots: Optional[int] = None

    def __post_init__(self):
        if self.kind not in VARIANTS:
            raise ConfigurationError(f"kernel kind must be one of {VARIANTS}")
        if self.space not in KERNEL_SPACES:
            raise ConfigurationError(f"kernel space must be one of {KERNEL_SPACES}")
        if self.shots is not None and self.shots < 1:
            raise ConfigurationError("shots must be >= 1 or null")
        self.kernel_kind()

    def kernel_kind(self) -> KernelKind:
        try:
            return KernelKind(self.kind, self.gamma, self.fidelity_power)
        except UsageError as exc:
            raise ConfigurationError(str(exc)) from exc

    def uses_encoding(self) -> bool:
        return self.kind in QUANTUM_VARIANTS or self.space == "embedding"


@dataclass(frozen=True)
class ProtocolConfig:
    kind: str = "kfold"
    k: int = 10
    sizes: tuple = ()
    test_fraction: float = 0.2

    def __post_init__(self):
        if self.kind not in PROTOCOLS:
            raise ConfigurationError(f"protocol must be one of {PROTOCOLS}")
        if not 0 < self.test_fraction < 1:
            raise ConfigurationError("test_fraction must be in (0, 1)")
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    label: str = ""
    encoding: EncodingSpec = field(default_factory=EncodingSpec)
    kernel: KernelConfig = field(default_factory=KernelConfig)
    svm: SvmConfig = field(default_factory=SvmConfig)
    metric: MetricConfig = field(default_factory=MetricConfig)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    n_jobs: int = 1

    def __post_init__(self):
        if self.seed is None:
            raise ConfigurationError("seed is mandatory")
        q = self.features.num_features
        if q is not None and q != self.encoding.num_qubits:
            raise ConfigurationError(
                f"features.num_features={q} disagrees with encoding.num_qubits={self.encoding.num_qubits}"
            )
        if self.features.reducer == "pool" and self.encoding.num_qubits > self.features.n_mels:
            raise ConfigurationError("pooling reducer cannot produce more features than mel bands")

    @property
    def num_features(self) -> int:
        return self.encoding.num_qubits

    @property
    def display_label(self) -> str:
        return self.label or self.kernel.kind + ("+metric" if self.metric.enabled else "")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["protocol"]["sizes"] = list(self.protocol.sizes)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        sections = {
            "encoding": EncodingSpec.from_dict,
            "kernel": lambda d: _strict(KernelConfig, d, "kernel"),
            "svm": SvmConfig.from_dict,
            "metric": MetricConfig.from_dict,
            "features": FeatureConfig.from_dict,
            "protocol": lambda d: _strict(ProtocolConfig, d, "protocol"),
        }
        for key, build in sections.items():
            if key in data:
                if not isinstance(data[key], dict):
                    raise ConfigurationError(f"section {key!r} must be a mapping")
                data[key] = build(data[key])
        try:
            return _strict(cls, data, "top-level")
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    """Read a JSON config; a run record is accepted too (its first config is used)."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"{path}: cannot read config ({exc})") from exc
    if "configs" in data and "experiment" in data:
        data = data["configs"][0]
    return ExperimentConfig.from_dict(data)


def save_config(config: ExperimentConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(config.to_dict(), fh, indent=2)


# manifests ----------------------------------------------------------------


@dataclass
class Utterance:
    id: str
    label: str
    path: Optional[str] = None
    split: str = ""
    samples: Optional[np.ndarray] = None
    sample_rate: int = 16000

    def waveform(self) -> Waveform:
        if self.samples is not None:
            return Waveform(self.samples, self.sample_rate)
        if self.path is None:
            raise DataError(f"utterance {self.id!r} has neither samples nor a path")
        return load_wav(self.path)


@dataclass
class Manifest:
    entries: list
    source: str = ""

    def __post_init__(self):
        ids = [e.id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise DataError("manifest ids are not unique")
        self._index = {e.id: e for e in self.entries}

    def __len__(self):
        return len(self.entries)

    @property
    def ids(self) -> list:
        return [e.id for e in self.entries]

    @property
    def labels(self) -> list:
        return sorted({e.label for e in self.entries})

    def __getitem__(self, uid) -> Utterance:
        return self._index[uid]

    def labels_of(self, ids) -> list:
        return [self._index[i].label for i in ids]

    def with_labels(self, labels: Sequence) -> "Manifest":
        entries = [replace(e, label=lab) for e, lab in zip(self.entries, labels)]
        return Manifest(entries, self.source)


def read_manifest(path) -> Manifest:
    """CSV with header ``id,path,label,split``; relative paths resolve against the manifest's folder."""
    base = Path(path).resolve().parent
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            missing = {"id", "path", "label"} - set(reader.fieldnames or [])
            if missing:
                raise DataError(f"{path}: manifest is missing columns {sorted(missing)}")
            entries = []
            for row in reader:
                p = Path(row["path"])
                entries.append(Utterance(
                    id=row["id"], label=row["label"], split=(row.get("split") or "").strip(),
                    path=str(p if p.is_absolute() else base / p),
                ))
    except OSError as exc:
        raise DataError(f"{path}: cannot read manifest ({exc})") from exc
    return Manifest(entries, str(path))


def write_manifest(manifest: Manifest, path) -> None:
    base = Path(path).resolve().parent
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "path", "label", "split"])
        for e in manifest.entries:
            p = Path(e.path)
            rel = os.path.relpath(p, base) if p.is_absolute() else str(p)
            writer.writerow([e.id, rel, e.label, e.split])


def sample_key(uid: str) -> int:
    """Stable integer key of an utterance id (seeds noise and shot sampling)."""
    return zlib.crc32(uid.encode("utf-8")) & 0x7FFFFFFF


# splitting ----------------------------------------------------------------


def _by_class(manifest: Manifest, ids):
    groups = {}
    for uid in ids:
        groups.setdefault(manifest[uid].label, []).append(uid)
    return [groups[c] for c in sorted(groups)]


def kfold_split(manifest: Manifest, k: int, seed: int) -> list:
    """Stratified k-fold: ``[(train_ids, test_ids), ...]`` with test sets partitioning the manifest.

    Members of each class are shuffled and dealt round-robin onto the folds,
    continuing where the previous class stopped, so fold sizes differ by at
    most one.  Classes smaller than ``k`` trigger a plain shuffled split.
    """
    n = len(manifest)
    if k < 2 or k > n:
        raise UsageError(f"k must be in [2, {n}], got {k}")
    rng = np.random.default_rng(seed)
    groups = _by_class(manifest, manifest.ids)
    if min(len(g) for g in groups) < k:
        log.warning("some class has fewer than k=%d members; using a non-stratified split", k)
        groups = [manifest.ids]
    folds = [[] for _ in range(k)]
    slot = 0
    for members in groups:
        for uid in rng.permutation(members):
            folds[slot % k].append(str(uid))
            slot += 1
    order = {uid: i for i, uid in enumerate(manifest.ids)}
    out = []
    for f in range(k):
        test = sorted(folds[f], key=order.get)
        test_set = set(test)
        out.append(([u for u in manifest.ids if u not in test_set], test))
    return out


def fixed_split(manifest: Manifest, test_fraction: float, seed: int):
    """Use ``train``/``test`` split tags when present, else a stratified holdout."""
    tagged = {e.split for e in manifest.entries}
    if "train" in tagged and "test" in tagged:
        train_ids = [e.id for e in manifest.entries if e.split == "train"]
        test_ids = [e.id for e in manifest.entries if e.split == "test"]
        return train_ids, test_ids
    rng = np.random.default_rng(seed)
    test = set()
    for members in _by_class(manifest, manifest.ids):
        n_test = int(round(test_fraction * len(members)))
        n_test = min(max(n_test, 1), len(members) - 1) if len(members) > 1 else 0
        test.update(str(u) for u in rng.permutation(members)[:n_test])
    return [u for u in manifest.ids if u not in test], [u for u in manifest.ids if u in test]


def stratified_subsample(manifest: Manifest, pool: list, size: int, seed: int) -> list:
    """Seeded class-proportional subset of ``pool`` (largest-remainder allocation), pool order kept."""
    if size > len(pool):
        raise UsageError(f"requested {size} training utterances, pool holds {len(pool)}")
    if size == len(pool):
        return list(pool)
    groups = _by_class(manifest, pool)
    quotas = np.array([len(g) * size / len(pool) for g in groups])
    alloc = np.floor(quotas).astype(int)
    for idx in np.argsort(-(quotas - alloc), kind="stable")[: size - alloc.sum()]:
        alloc[idx] += 1
    rng = np.random.default_rng(seed)
    chosen = set()
    for members, n in zip(groups, alloc):
        chosen.update(str(u) for u in rng.permutation(members)[:n])
    return [u for u in pool if u in chosen]


# feature extraction -------------------------------------------------------


class FeatureStore:
    """Memoized frame-averaged mel vectors per utterance id."""

    def __init__(self, manifest: Manifest, cfg: FeatureConfig, seed: int):
        self.manifest = manifest
        self.cfg = cfg
        self.seed = seed
        self._cache = {}

    def vector(self, uid: str) -> np.ndarray:
        if uid not in self._cache:
            entry = self.manifest[uid]
            noise_seed = np.random.SeedSequence([int(self.seed), sample_key(uid)]).generate_state(1)[0]
            try:
                self._cache[uid] = utterance_vector(entry.waveform(), self.cfg, int(noise_seed))
            except DataError as exc:
                raise DataError(f"utterance {uid!r}: {exc}") from exc
        return self._cache[uid]

    def matrix(self, ids) -> np.ndarray:
        return np.array([self.vector(u) for u in ids])


# fitted pipeline ----------------------------------------------------------


@dataclass
class TrainedPipeline:
    """Everything fitted on a training split; enough to score new utterances."""

    config: ExperimentConfig
    reducer: FeatureReducer
    train_ids: list
    train_labels: list
    train_inputs: np.ndarray  # kernel-ready inputs of the training rows
    model: SvmModel
    head: Optional[ProjectionHead] = None
    head_reducer: Optional[FeatureReducer] = None
    train_log: Optional[TrainLog] = None

    @property
    def _mode(self):
        return resolve_mode(self.config.kernel.shots, self.config.seed)

    @property
    def _kernel_spec(self):
        cfg = self.config
        return cfg.encoding if (cfg.kernel.uses_encoding() or self.head is not None) else None

    def inputs(self, V: np.ndarray, ids) -> np.ndarray:
        """Map raw mel vectors to kernel inputs with the fitted transforms."""
        X = self.reducer.transform(V)
        if self.head is not None:
            Y = measure_embeddings(self.config.encoding, X, self._mode, [sample_key(u) for u in ids])
            X = self.head_reducer.transform(self.head.project(Y))
        return X

    def cross(self, X: np.ndarray, ids) -> np.ndarray:
        return cross_gram(
            self.config.kernel.kernel_kind(), self._kernel_spec, self.train_inputs, X, self._mode,
            [sample_key(u) for u in self.train_ids], [sample_key(u) for u in ids],
        )

    def predict(self, V: np.ndarray, ids) -> list:
        X = self.inputs(V, ids)
        return predict(self.model, self.cross(X, ids), col_ids=self.train_ids)

    def kernel_space(self, V: np.ndarray, ids) -> np.ndarray:
        """The vectors the kernel compares, for cluster-distance diagnostics."""
        return kernel_inputs(self.config.kernel.kernel_kind(), self._kernel_spec, self.inputs(V, ids),
                             self._mode, [sample_key(u) for u in ids])

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "reducer": self.reducer.to_dict(),
            "train_ids": self.train_ids,
            "train_labels": self.train_labels,
            "train_inputs": self.train_inputs.tolist(),
            "head": None if self.head is None else self.head.to_dict(),
            "head_reducer": None if self.head_reducer is None else self.head_reducer.to_dict(),
            "model": model_to_dict(self.model),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrainedPipeline":
        return cls(
            config=ExperimentConfig.from_dict(data["config"]),
            reducer=FeatureReducer.from_dict(data["reducer"]),
            train_ids=list(data["train_ids"]),
            train_labels=list(data["train_labels"]),
            train_inputs=np.array(data["train_inputs"], dtype=float),
            model=model_from_dict(data["model"]),
            head=None if data["head"] is None else ProjectionHead.from_dict(data["head"]),
            head_reducer=None if data["head_reducer"] is None else FeatureReducer.from_dict(data["head_reducer"]),
        )


def fit_pipeline(config: ExperimentConfig, store: FeatureStore, train_ids, fold: int = 0, probe_ids=None):
    """Fit reducer, optional metric head, Gram and SVM on ``train_ids`` only."""
    manifest = store.manifest
    train_ids = list(train_ids)
    y_train = manifest.labels_of(train_ids)
    reducer = FeatureReducer(config.num_features, config.features.reducer).fit(store.matrix(train_ids))
    X = reducer.transform(store.matrix(train_ids))
    mode = resolve_mode(config.kernel.shots, config.seed)
    keys = [sample_key(u) for u in train_ids]
    head = head_reducer = train_log = None
    if config.metric.enabled:
        Y = measure_embeddings(config.encoding, X, mode, keys)
        probe = None
        if probe_ids:
            Yp = measure_embeddings(config.encoding, reducer.transform(store.matrix(probe_ids)), mode,
                                    [sample_key(u) for u in probe_ids])
            probe = (Yp, manifest.labels_of(probe_ids))
        mcfg = replace(config.metric, seed=config.metric.seed + 1009 * config.seed + fold)
        head, train_log = train_head(Y, y_train, mcfg, probe=probe)
        Z = head.project(Y)
        head_reducer = FeatureReducer(Z.shape[1], "pool").fit(Z)
        X = head_reducer.transform(Z)
    spec = config.encoding if (config.kernel.uses_encoding() or head is not None) else None
    gram = gram_matrix(config.kernel.kernel_kind(), spec, X, mode, row_ids=train_ids, keys=keys)
    model = train(gram, y_train, replace(config.svm, seed=config.svm.seed + fold))
    return TrainedPipeline(config, reducer, train_ids, y_train, X, model, head, head_reducer, train_log)


# results ------------------------------------------------------------------


@dataclass
class FoldResult:
    accuracy: float
    cluster_distance: float
    train_log: Optional[TrainLog] = None


@dataclass
class ResultRow:
    label: str
    fold_accuracies: list
    cluster_distance: float
    train_size: int = 0
    wall_time: float = 0.0
    train_logs: list = field(default_factory=list)

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean(self.fold_accuracies))


@dataclass
class ResultTable:
    rows: list = field(default_factory=list)

    def to_records(self) -> list:
        return [
            {
                "label": r.label,
                "train_size": r.train_size,
                "mean_accuracy": r.mean_accuracy,
                "fold_accuracies": list(r.fold_accuracies),
                "cluster_distance": r.cluster_distance,
            }
            for r in self.rows
        ]


def write_results_csv(table: ResultTable, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_COLUMNS)
        for rec in table.to_records():
            writer.writerow([
                rec["label"], rec["train_size"], repr(rec["mean_accuracy"]),
                ";".join(repr(a) for a in rec["fold_accuracies"]), repr(rec["cluster_distance"]),
            ])


def read_results_csv(path) -> list:
    with open(path, newline="") as fh:
        return [
            {
                "label": row["label"],
                "train_size": int(row["train_size"]),
                "mean_accuracy": float(row["mean_accuracy"]),
                "fold_accuracies": [float(a) for a in row["fold_accuracies"].split(";") if a],
                "cluster_distance": float(row["cluster_distance"]),
            }
            for row in csv.DictReader(fh)
        ]


# experiments --------------------------------------------------------------


def _run_fold(config, store, train_ids, test_ids, fold) -> FoldResult:
    try:
        fitted = fit_pipeline(config, store, train_ids, fold, probe_ids=test_ids)
        V = store.matrix(test_ids)
        y_test = store.manifest.labels_of(test_ids)
        pred = fitted.predict(V, test_ids)
        acc = float(np.mean([p == t for p, t in zip(pred, y_test)]))
        dist = math.nan
        if len(set(y_test)) >= 2:
            dist = cluster_distance(fitted.kernel_space(V, test_ids), y_test)
    except QKLError as exc:
        raise type(exc)(f"fold {fold}: {exc}") from exc
    return FoldResult(acc, dist, fitted.train_log)


def _run_folds(config: ExperimentConfig, store: FeatureStore, folds) -> list:
    # extract sequentially so the cache is filled before any threads share it
    for train_ids, test_ids in folds:
        store.matrix(train_ids)
        store.matrix(test_ids)
    jobs = [(config, store, tr, te, i) for i, (tr, te) in enumerate(folds)]
    if config.n_jobs > 1:
        with ThreadPoolExecutor(config.n_jobs) as pool:
            return list(pool.map(lambda a: _run_fold(*a), jobs))
    return [_run_fold(*a) for a in jobs]


def _row(config, results, train_size, started) -> ResultRow:
    dists = [r.cluster_distance for r in results if not math.isnan(r.cluster_distance)]
    return ResultRow(
        label=config.display_label,
        fold_accuracies=[r.accuracy for r in results],
        cluster_distance=float(np.mean(dists)) if dists else math.nan,
        train_size=train_size,
        wall_time=time.perf_counter() - started,
        train_logs=[r.train_log for r in results if r.train_log is not None],
    )


def make_folds(config: ExperimentConfig, manifest: Manifest) -> list:
    if config.protocol.kind == "kfold":
        return kfold_split(manifest, config.protocol.k, config.seed)
    return [fixed_split(manifest, config.protocol.test_fraction, config.seed)]


def run_experiment(config: ExperimentConfig, manifest: Manifest, folds=None, store=None) -> ResultRow:
    """Run the configured protocol (k-fold or fixed split) and return one result row."""
    started = time.perf_counter()
    folds = folds if folds is not None else make_folds(config, manifest)
    store = store or FeatureStore(manifest, config.features, config.seed)
    results = _run_folds(config, store, folds)
    mean_train = int(round(np.mean([len(tr) for tr, _ in folds])))
    return _row(config, results, mean_train, started)


def sweep_train_size(config: ExperimentConfig, manifest: Manifest, sizes: Sequence[int]) -> ResultTable:
    """One fixed-split row per training-set size, each a stratified seeded subsample of the pool."""
    if not sizes:
        raise UsageError("sweep needs at least one training size")
    train_pool, test_ids = fixed_split(manifest, config.protocol.test_fraction, config.seed)
    for s in sizes:
        if s > len(train_pool):
            raise UsageError(f"training size {s} exceeds the pool of {len(train_pool)}")
        if s < 2:
            raise UsageError("training size must be >= 2")
    store = FeatureStore(manifest, config.features, config.seed)
    table = ResultTable()
    for s in sizes:
        started = time.perf_counter()
        subset = stratified_subsample(manifest, train_pool, int(s), config.seed + int(s))
        results = _run_folds(config, store, [(subset, test_ids)])
        table.rows.append(_row(config, results, int(s), started))
    return table


_SHARED_SECTIONS = ("seed", "encoding", "features", "protocol", "svm")


def compare_kernels(configs: Sequence[ExperimentConfig], manifest: Manifest) -> ResultTable:
    """One row per config over shared folds; configs may differ only in kernel/metric/label."""
    if not configs:
        raise UsageError("compare needs at least one config")
    base = configs[0]
    for cfg in configs[1:]:
        for section in _SHARED_SECTIONS:
            if getattr(cfg, section) != getattr(base, section):
                raise UsageError(f"configs differ in {section!r}; only kernel/metric may vary")
    folds = make_folds(base, manifest)
    store = FeatureStore(manifest, base.features, base.seed)
    return ResultTable([run_experiment(cfg, manifest, folds, store) for cfg in configs])


# outputs ------------------------------------------------------------------


def _file_digest(path) -> Optional[str]:
    try:
        with open(path, "rb") as fh:
            return hashlib.sha256(fh.read()).hexdigest()
    except OSError:
        return None


def emit_outputs(table: ResultTable, out_dir, configs, experiment: str, manifest_path=None,
                 sizes=None, label_seed=None) -> dict:
    """Write ``results.csv``, ``curves.csv`` (metric runs) and ``run_record.json``; return their paths."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        paths = {"results": out / "results.csv", "record": out / "run_record.json"}
        write_results_csv(table, paths["results"])
        curves = [(r.label, f, log_) for r in table.rows for f, log_ in enumerate(r.train_logs)]
        if curves:
            paths["curves"] = out / "curves.csv"
            with open(paths["curves"], "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["label", "fold", "epoch", "loss", "grad_norm", "cluster_distance"])
                for label, f, log_ in curves:
                    for e, l, g, d in log_.rows():
                        writer.writerow([label, f, e, repr(l), repr(g), repr(d)])
        record = {
            "artifact": "qkl",
            "version": __version__,
            "experiment": experiment,
            "seed": configs[0].seed,
            "configs": [c.to_dict() for c in configs],
            "sizes": list(sizes) if sizes else None,
            "label_shuffle_seed": label_seed,
            "manifest": None if manifest_path is None else str(Path(manifest_path).resolve()),
            "manifest_sha256": None if manifest_path is None else _file_digest(manifest_path),
            "wall_time_s": {r.label + (f"@{r.train_size}" if experiment == "sweep" else ""): r.wall_time
                            for r in table.rows},
        }
        with open(paths["record"], "w") as fh:
            json.dump(record, fh, indent=2)
    except OSError as exc:
        raise DataError(f"cannot write outputs to {out}: {exc}") from exc
    return paths


def shuffled_labels(manifest: Manifest, seed: int) -> Manifest:
    """Seeded permutation of the labels (the permutation-null control)."""
    labels = [e.label for e in manifest.entries]
    perm = np.random.default_rng(seed).permutation(len(labels))
    return manifest.with_labels([labels[i] for i in perm])


def run_from_record(record, manifest: Optional[Manifest] = None) -> ResultTable:
    """Re-execute the experiment described by a run record (dict or path)."""
    if not isinstance(record, dict):
        with open(record) as fh:
            record = json.load(fh)
    configs = [ExperimentConfig.from_dict(c) for c in record["configs"]]
    if manifest is None:
        if not record.get("manifest"):
            raise UsageError("run record has no manifest path; pass a manifest")
        manifest = read_manifest(record["manifest"])
        digest = _file_digest(record["manifest"])
        if record.get("manifest_sha256") and digest != record["manifest_sha256"]:
            log.warning("manifest %s changed since the run was recorded", record["manifest"])
    if record.get("label_shuffle_seed") is not None:
        manifest = shuffled_labels(manifest, record["label_shuffle_seed"])
    kind = record["experiment"]
    if kind == "sweep":
        return sweep_train_size(configs[0], manifest, record["sizes"])
    if kind == "compare":
        return compare_kernels(configs, manifest)
    return ResultTable([run_experiment(configs[0], manifest)])
