"""Command-line entry point.

Exit codes: 0 success, 2 usage or configuration error, 3 data error,
4 numeric error, 1 anything else raised by the library.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .errors import DataError, NumericError, QKLError, UsageError
from .features import FeatureReducer, save_features
from .kernels import gram_matrix, save_gram
from .encoding import resolve_mode
from .pipeline import (
    ExperimentConfig,
    FeatureStore,
    ResultTable,
    TrainedPipeline,
    compare_kernels,
    emit_outputs,
    fit_pipeline,
    fixed_split,
    load_config,
    read_manifest,
    run_experiment,
    run_from_record,
    sample_key,
    save_config,
    shuffled_labels,
    sweep_train_size,
)
from .svm import save_model

log = logging.getLogger("qkl")

_UNSET = object()

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _shots(text: str):
    if text == "exact":
        return None
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--shots takes a positive integer or 'exact', got {text!r}")
    if n < 1:
        raise argparse.ArgumentTypeError("--shots must be >= 1")
    return n


def _seed(text: str) -> int:
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--seed takes an unsigned integer, got {text!r}")
    if not 0 <= n < 2**64:
        raise argparse.ArgumentTypeError("--seed must fit in an unsigned 64-bit integer")
    return n


def _sizes(text: str) -> list:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"--sizes takes comma-separated integers, got {text!r}")


def _config(args, path=None) -> ExperimentConfig:
    path = path or args.config
    cfg = load_config(path) if path else ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "shots", _UNSET) is not _UNSET:
        cfg = replace(cfg, kernel=replace(cfg.kernel, shots=args.shots))
    return cfg


def _need(args, *names):
    for name in names:
        if getattr(args, name, None) in (None, []):
            raise UsageError(f"--{name} is required for '{args.command}'")


def _out(args) -> Path:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory {out}: {exc}") from exc
    return out


def _print_table(table: ResultTable) -> None:
    for r in table.rows:
        print(f"{r.label:<32} n_train={r.train_size:<5} accuracy={r.mean_accuracy:.4f} "
              f"cluster_distance={r.cluster_distance:.4f}")


# subcommands --------------------------------------------------------------


def cmd_synth(args) -> None:
    from .synth import radial_corpus, tone_corpus, write_corpus

    seed = 0 if args.seed is None else args.seed
    if args.kind == "tones":
        snr = 10.0 if args.snr is None else args.snr
        manifest = tone_corpus(args.classes, args.per_class, snr, seed)
    else:
        manifest = radial_corpus(args.per_class, snr_db=args.snr, seed=seed)
    written = write_corpus(manifest, _out(args))
    print(f"wrote {len(written)} utterances and manifest.csv to {args.out}")


def cmd_features(args) -> None:
    _need(args, "manifest", "out")
    cfg = _config(args)
    manifest = read_manifest(args.manifest)
    store = FeatureStore(manifest, cfg.features, cfg.seed)
    V = store.matrix(manifest.ids)
    out = _out(args)
    save_features(out / "features.qfeat", V, f"mel{V.shape[1]}")
    with open(out / "ids.json", "w") as fh:
        json.dump(manifest.ids, fh)
    print(f"cached {V.shape[0]} x {V.shape[1]} mel vectors in {out / 'features.qfeat'}")


def cmd_gram(args) -> None:
    _need(args, "manifest", "out")
    cfg = _config(args)
    manifest = read_manifest(args.manifest)
    store = FeatureStore(manifest, cfg.features, cfg.seed)
    ids = manifest.ids
    X = FeatureReducer(cfg.num_features, cfg.features.reducer).fit_transform(store.matrix(ids))
    spec = cfg.encoding if cfg.kernel.uses_encoding() else None
    mode = resolve_mode(cfg.kernel.shots, cfg.seed)
    gram = gram_matrix(cfg.kernel.kernel_kind(), spec, X, mode, row_ids=ids,
                       keys=[sample_key(u) for u in ids])
    out = _out(args)
    save_gram(gram, out / "gram.qgram")
    checks = gram.check()
    for name, (ok, measured) in checks.items():
        print(f"{name:<12} {'ok' if ok else 'VIOLATED'} ({measured:.3g})")
    print(f"wrote {len(ids)} x {len(ids)} Gram to {out / 'gram.qgram'}")


def cmd_train(args) -> None:
    _need(args, "manifest", "out")
    cfg = _config(args)
    manifest = read_manifest(args.manifest)
    train_ids, _ = fixed_split(manifest, cfg.protocol.test_fraction, cfg.seed)
    fitted = fit_pipeline(cfg, FeatureStore(manifest, cfg.features, cfg.seed), train_ids)
    out = _out(args)
    with open(out / "pipeline.json", "w") as fh:
        json.dump(fitted.to_dict(), fh)
    save_model(fitted.model, out / "model.json")
    save_config(cfg, out / "config.json")
    print(f"trained on {len(train_ids)} utterances; pipeline written to {out / 'pipeline.json'}")


def cmd_eval(args) -> None:
    _need(args, "model", "manifest", "out")
    try:
        with open(args.model) as fh:
            fitted = TrainedPipeline.from_dict(json.load(fh))
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DataError(f"{args.model}: cannot read trained pipeline ({exc})") from exc
    cfg = fitted.config
    manifest = read_manifest(args.manifest)
    if any(e.split for e in manifest.entries):
        ids = [e.id for e in manifest.entries if e.split == "test"]
    else:
        ids = manifest.ids
    if not ids:
        raise UsageError("manifest has no utterances to evaluate")
    store = FeatureStore(manifest, cfg.features, cfg.seed)
    pred = fitted.predict(store.matrix(ids), ids)
    truth = manifest.labels_of(ids)
    acc = float(np.mean([p == t for p, t in zip(pred, truth)]))
    out = _out(args)
    with open(out / "predictions.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "label", "predicted"])
        writer.writerows(zip(ids, truth, pred))
    print(f"accuracy {acc:.4f} on {len(ids)} utterances")


def _experiment_manifest(args):
    manifest = read_manifest(args.manifest)
    if getattr(args, "shuffle_labels", None) is not None:
        manifest = shuffled_labels(manifest, args.shuffle_labels)
    return manifest


def cmd_cv(args) -> None:
    _need(args, "manifest", "out")
    cfg = _config(args)
    if cfg.protocol.kind != "kfold":
        cfg = replace(cfg, protocol=replace(cfg.protocol, kind="kfold"))
    if args.k is not None:
        cfg = replace(cfg, protocol=replace(cfg.protocol, k=args.k))
    table = ResultTable([run_experiment(cfg, _experiment_manifest(args))])
    emit_outputs(table, _out(args), [cfg], "cv", args.manifest, label_seed=args.shuffle_labels)
    _print_table(table)


def cmd_sweep(args) -> None:
    _need(args, "manifest", "out")
    cfg = _config(args)
    sizes = args.sizes or list(cfg.protocol.sizes)
    if not sizes:
        raise UsageError("give --sizes or protocol.sizes in the config")
    cfg = replace(cfg, protocol=replace(cfg.protocol, kind="sweep", sizes=tuple(sizes)))
    table = sweep_train_size(cfg, _experiment_manifest(args), sizes)
    emit_outputs(table, _out(args), [cfg], "sweep", args.manifest, sizes=sizes, label_seed=args.shuffle_labels)
    _print_table(table)


def cmd_compare(args) -> None:
    _need(args, "config", "manifest", "out")
    configs = [_config(args, p) for p in args.config]
    table = compare_kernels(configs, _experiment_manifest(args))
    emit_outputs(table, _out(args), configs, "compare", args.manifest, label_seed=args.shuffle_labels)
    _print_table(table)


def cmd_rerun(args) -> None:
    _need(args, "record", "out")
    try:
        with open(args.record) as fh:
            record = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"{args.record}: cannot read run record ({exc})") from exc
    if args.manifest:
        record["manifest"] = str(Path(args.manifest).resolve())
    table = run_from_record(record)
    configs = [ExperimentConfig.from_dict(c) for c in record["configs"]]
    emit_outputs(table, _out(args), configs, record["experiment"], record.get("manifest"),
                 sizes=record.get("sizes"), label_seed=record.get("label_shuffle_seed"))
    _print_table(table)


# parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--manifest", help="CSV manifest with header id,path,label,split")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=_seed, help="override the config seed")
    common.add_argument("--shots", type=_shots, default=_UNSET, help="shot count or 'exact'")
    common.add_argument("-v", "--verbose", action="store_true")

    single = argparse.ArgumentParser(add_help=False)
    single.add_argument("--config", help="JSON experiment config (defaults when omitted)")
    shuffle = argparse.ArgumentParser(add_help=False)
    shuffle.add_argument("--shuffle-labels", type=int, metavar="SEED",
                         help="permute labels with this seed (permutation-null control)")

    parser = _Parser(prog="qkl", description="Quantum kernel learning for spoken command recognition.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic corpus")
    p.add_argument("--kind", choices=("tones", "radial"), default="tones")
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--per-class", type=int, default=60)
    p.add_argument("--snr", type=float, help="noise level in dB (tones default 10, radial default none)")
    p.set_defaults(func=cmd_synth)

    sub.add_parser("features", parents=[common, single], help="cache mel vectors").set_defaults(func=cmd_features)
    sub.add_parser("gram", parents=[common, single], help="compute and persist a Gram matrix").set_defaults(
        func=cmd_gram)
    sub.add_parser("train", parents=[common, single], help="fit on the training split").set_defaults(
        func=cmd_train)
    p = sub.add_parser("eval", parents=[common], help="score a trained pipeline")
    p.add_argument("--model", help="pipeline.json written by 'train'")
    p.set_defaults(func=cmd_eval)
    p = sub.add_parser("cv", parents=[common, single, shuffle], help="k-fold cross-validation")
    p.add_argument("--k", type=int)
    p.set_defaults(func=cmd_cv)
    p = sub.add_parser("sweep", parents=[common, single, shuffle], help="training-size sweep")
    p.add_argument("--sizes", type=_sizes, help="comma-separated training sizes")
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("compare", parents=[common, shuffle], help="several kernels over shared folds")
    p.add_argument("--config", action="append", default=[], help="repeat once per config")
    p.set_defaults(func=cmd_compare)
    p = sub.add_parser("rerun", parents=[common], help="re-execute a run record")
    p.add_argument("--record", help="run_record.json")
    p.set_defaults(func=cmd_rerun)
    return parser


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, UsageError):
        return EXIT_USAGE
    if isinstance(exc, DataError):
        return EXIT_DATA
    if isinstance(exc, NumericError):
        return EXIT_NUMERIC
    return EXIT_ERROR


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        args.func(args)
    except QKLError as exc:
        print(f"qkl: error: {exc}", file=sys.stderr)
        return exit_code(exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
