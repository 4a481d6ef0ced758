"""Command-line entry point.

Subcommands:
  gen      write a synthetic benchmark (train/test ANNE1 files + manifest)
  select   run one selection pass over a dataset and saved predictions
  train    full training run: model, history JSONL, report, figures
  eval     accuracy of a saved model on a dataset file
  compare  train across a selector list and seeds; CSV/JSON tables + figures

Exit codes: 0 success, 2 configuration error, 3 I/O error,
4 data/computation error.
"""

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import experiments, report
from .config import PRESETS, load_config, validate_config
from .dataset import Predictions, load_dataset, normalize_features, save_dataset
from .errors import (
    AnneError,
    ConfigError,
    IoFailure,
    LengthMismatch,
    MalformedHeader,
    SizeMismatch,
)
from .metrics import evaluate_accuracy, per_subset_metrics, selection_metrics
from .pipeline import select
from .trainer import SoftmaxModel

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_COMPUTE = 4


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _config_from_args(args, overrides=None):
    overrides = dict(overrides or {})
    if getattr(args, "fixed_k", None) is not None:
        overrides.setdefault("pipeline", {})["fixed_k"] = args.fixed_k
    raw = load_config(path=args.config, preset=args.preset, overrides=overrides)
    if getattr(args, "seed", None) is not None:
        raw["seeds"] = [args.seed]
    if getattr(args, "selector", None):
        raw.setdefault("pipeline", {})["selector"] = args.selector
    return validate_config(raw)


def cmd_gen(args):
    raw = _config_from_args(args)
    seed = int(raw["seeds"][0])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    train, test, pool, generated = experiments.build_datasets(raw, seed)
    if generated:
        train = experiments.corrupt(train, raw, seed, pool)
    train_path = out / "train.anne"
    test_path = out / "test.anne"
    save_dataset(train, train_path)
    save_dataset(test, test_path)

    manifest = {
        "dataset": raw["dataset"],
        "noise": raw.get("noise", {}),
        "seed": seed,
        "files": {
            "train": {"name": train_path.name, "sha256": _sha256(train_path),
                      "n": train.n, "d": train.dim, "c": train.class_count},
            "test": {"name": test_path.name, "sha256": _sha256(test_path),
                     "n": test.n, "d": test.dim, "c": test.class_count},
        },
    }
    report.write_json(manifest, out / "manifest.json")
    print(f"wrote {train_path} ({train.n} samples), {test_path} ({test.n} samples)")
    return EXIT_OK


def _load_predictions(path, n):
    try:
        probs = np.load(path)
    except OSError as exc:
        raise IoFailure(f"cannot read predictions from {path}: {exc}") from exc
    except ValueError as exc:
        raise MalformedHeader(f"predictions file {path} is not a valid .npy: {exc}") from exc
    if probs.ndim != 2 or probs.shape[0] != n:
        raise LengthMismatch(
            f"predictions shape {probs.shape} does not match dataset size {n}")
    return Predictions(np.asarray(probs, dtype=np.float64))


def cmd_select(args):
    raw = _config_from_args(args)
    dataset = normalize_features(load_dataset(args.data))
    preds = _load_predictions(args.preds, dataset.n)
    pcfg = experiments.pipeline_config_from(raw.get("pipeline", {}),
                                            raw.get("train", {}).get("warmup_epochs", 0))
    result = select(dataset, preds, pcfg)

    out = {
        "selector": pcfg.selector,
        "summary": result.summary(),
        "clean": result.clean.tolist(),
        "noisy": result.noisy.tolist(),
        "provenance_counts": result.summary()["provenance_counts"],
    }
    judged = dataset.with_labels(result.labels)
    if dataset.true_labels is not None:
        out["metrics"] = selection_metrics(result, judged).to_dict()
        if result.partition is not None:
            subset = per_subset_metrics(result, result.partition, judged)
            out["subset_metrics"] = {k: (m.to_dict() if m else None)
                                     for k, m in subset.items()}
    path = Path(args.out)
    path.parent.mkdir(parents=True, exist_ok=True)
    report.write_json(out, path)
    print(f"selected {result.clean.size} clean / {result.noisy.size} noisy -> {path}")
    return EXIT_OK


def _save_model(model, path):
    np.savez(path, W=model.W, b=model.b, projector=model.projector,
             predictor=model.predictor, aug_sigma=model.aug_sigma)


def _load_model(path):
    try:
        with np.load(path) as data:
            return SoftmaxModel(data["W"], data["b"], data["projector"],
                                data["predictor"], float(data["aug_sigma"]))
    except OSError as exc:
        raise IoFailure(f"cannot read model from {path}: {exc}") from exc


def cmd_train(args):
    raw = _config_from_args(args)
    seed = int(raw["seeds"][0])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    model, history, summary = experiments.run_experiment(raw, run_seed=seed)
    _save_model(model, out / "model.npz")
    report.write_jsonl(history, out / "history.jsonl")
    report.write_json({"config": raw, "summary": summary}, out / "report.json")
    report.write_csv([summary], out / "summary.csv")
    report.render_history_figures(history, out)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_eval(args):
    model = _load_model(args.model)
    dataset = normalize_features(load_dataset(args.data))
    acc = evaluate_accuracy(model, dataset)
    result = {"accuracy": acc, "n": dataset.n}
    if args.out:
        report.write_json(result, Path(args.out))
    print(json.dumps(result, sort_keys=True))
    return EXIT_OK


def cmd_compare(args):
    overrides = {}
    if args.selectors:
        overrides["selectors"] = args.selectors
    raw = _config_from_args(args, overrides=overrides)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def progress(row):
        print(f"  [{row['selector']} seed {row['seed']}] "
              f"acc={row['accuracy']:.4f} f1={row['f1']}", flush=True)

    compare = experiments.run_compare(raw, progress=progress)
    report.write_json({"config": raw, **compare}, out / "compare.json")
    report.write_csv(compare["runs"], out / "runs.csv")

    summary_rows = []
    for sel in compare["selectors"]:
        agg = compare["aggregate"][sel]
        row = {"selector": sel}
        for key, stats in agg.items():
            row[f"{key}_mean"] = None if stats is None else stats["mean"]
            row[f"{key}_std"] = None if stats is None else stats["std"]
        summary_rows.append(row)
    report.write_csv(summary_rows, out / "summary.csv")
    if compare["ranking"]:
        report.write_csv(compare["ranking"], out / "ranking.csv")
    report.render_compare_figures(compare, out)
    print(f"compared {len(compare['selectors'])} selectors over "
          f"{len(compare['seeds'])} seeds -> {out}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="anne",
        description="Noisy-label sample selection: benchmark generation, "
                    "selection, training, and comparison experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_out=True):
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--preset", choices=sorted(PRESETS),
                       help="named benchmark preset")
        p.add_argument("--seed", type=int, help="run seed (overrides config seeds)")
        if needs_out:
            p.add_argument("--out", required=True, help="output directory/file")

    p = sub.add_parser("gen", help="generate benchmark dataset files")
    common(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("select", help="one selection pass over saved data")
    common(p)
    p.add_argument("--data", required=True, help="ANNE1 dataset file")
    p.add_argument("--preds", required=True, help=".npy with N x C probabilities")
    p.add_argument("--selector", help="selector override")
    p.add_argument("--fixed-k", dest="fixed_k", type=int,
                   help="K for the fixed_knn selector")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("train", help="full training run")
    common(p)
    p.add_argument("--selector", help="selector override")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a saved model")
    p.add_argument("--model", required=True, help="model .npz from train")
    p.add_argument("--data", required=True, help="ANNE1 dataset file")
    p.add_argument("--out", help="optional JSON output path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="train across selectors and seeds")
    common(p)
    p.add_argument("--selectors", nargs="+", help="selector list override")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IoFailure, MalformedHeader, SizeMismatch) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (AnneError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
