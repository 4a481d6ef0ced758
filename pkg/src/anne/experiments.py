"""Reproducible experiment runs over the synthetic benchmark.

One run = (config, selector, seed): build or load the datasets, corrupt the
training labels with the configured noise at the run seed, train with the
chosen selector, and reduce the epoch history to a summary row. The cluster
geometry is pinned by the dataset seed, so runs with different seeds share
the geometry but differ in noise realization and training randomness.

Reported conventions: `f1`, `clean_rate`, `selection_size` and `mean_k_last`
average the final 10 selection epochs; `accuracy` is the best test accuracy
over all epochs; `final_accuracy` is the last epoch's.
"""

from dataclasses import replace

import numpy as np

from .aknn import AknnConfig
from .config import validate_config
from .dataset import Dataset, load_dataset
from .errors import ConfigError
from .noisegen import (
    ClusterSpec,
    NoiseSpec,
    generate_clusters,
    generate_openset_pool,
    inject,
)
from .pipeline import PipelineConfig
from .trainer import TrainConfig, train_loop


def cluster_spec_from(raw_gen):
    try:
        return ClusterSpec(
            class_count=int(raw_gen.get("class_count", 10)),
            dim=int(raw_gen.get("dim", 32)),
            samples_per_class=int(raw_gen.get("samples_per_class", 1000)),
            centroid_separation=float(raw_gen.get("centroid_separation", 4.0)),
            intra_class_std=float(raw_gen.get("intra_class_std", 1.0)),
            ood_class_count=int(raw_gen.get("ood_class_count", 0)),
            seed=int(raw_gen.get("seed", 0)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"dataset.generate: {exc}") from exc


def noise_spec_from(raw_noise, seed):
    mapping = raw_noise.get("mapping")
    if mapping is not None:
        mapping = {int(k): int(v) for k, v in mapping.items()}
    return NoiseSpec(
        kind=raw_noise.get("kind", "symmetric"),
        eta=float(raw_noise.get("eta", 0.0)),
        mapping=mapping,
        rho=float(raw_noise.get("rho", 0.0)),
        omega=float(raw_noise.get("omega", 1.0)),
        seed=int(seed),
    )


def pipeline_config_from(raw_pipeline, warmup_epochs):
    ak = raw_pipeline.get("aknn", {})
    try:
        return PipelineConfig(
            gamma_r=float(raw_pipeline.get("gamma_r", 0.9)),
            gamma_e=float(raw_pipeline.get("gamma_e", 0.1)),
            aknn=AknnConfig(
                k_min_lcs1=int(ak.get("k_min_lcs1", 40)),
                k_min_lcs2=int(ak.get("k_min_lcs2", 80)),
                k_min_hcs=int(ak.get("k_min_hcs", 5)),
                omega_init=float(ak.get("omega_init", 0.99)),
                delta_s=float(ak.get("delta_s", 0.01)),
                omega_floor=float(ak.get("omega_floor", -1.0)),
            ),
            selector=raw_pipeline.get("selector", "anne"),
            warmup_epochs=int(warmup_epochs),
            fixed_k=int(raw_pipeline.get("fixed_k", 200)),
            select_every=int(raw_pipeline.get("select_every", 1)),
        )
    except ValueError as exc:
        raise ConfigError(f"pipeline: {exc}") from exc


def train_config_from(raw_train, seed):
    try:
        return TrainConfig(
            epochs=int(raw_train.get("epochs", 23)),
            batch_size=int(raw_train.get("batch_size", 128)),
            learning_rate=float(raw_train.get("learning_rate", 0.5)),
            momentum=float(raw_train.get("momentum", 0.9)),
            weight_decay=float(raw_train.get("weight_decay", 0.0005)),
            mixup_alpha=float(raw_train.get("mixup_alpha", 1.0)),
            aug_sigma=float(raw_train.get("aug_sigma", 0.1)),
            warmup_epochs=int(raw_train.get("warmup_epochs", 3)),
            consistency_weight=float(raw_train.get("consistency_weight", 1.0)),
            projector_dim=int(raw_train.get("projector_dim", 16)),
            seed=int(seed),
        )
    except ValueError as exc:
        raise ConfigError(f"train: {exc}") from exc


def split_train_test(spec, test_per_class):
    """One clustered draw split per class into train and test datasets
    sharing the same centroids."""
    total = replace(spec, samples_per_class=spec.samples_per_class + test_per_class)
    full = generate_clusters(total)
    labels = full.true_labels
    train_idx, test_idx = [], []
    for c in range(spec.class_count):
        members = np.nonzero(labels == c)[0]
        train_idx.append(members[:spec.samples_per_class])
        test_idx.append(members[spec.samples_per_class:])
    train_idx = np.concatenate(train_idx)
    test_idx = np.concatenate(test_idx)

    def subset(idx):
        return Dataset(full.features[idx], full.noisy_labels[idx],
                       full.class_count, full.true_labels[idx],
                       np.arange(idx.size, dtype=np.int64))
    return subset(train_idx), subset(test_idx)


def build_datasets(raw, run_seed):
    """(train, test, ood pool or None, generated flag) for one run.

    File-based datasets are taken as-is (noise was materialized by `gen`);
    generated datasets come back clean and still need `corrupt`.
    """
    ds = raw["dataset"]
    if "train_path" in ds:
        train = load_dataset(ds["train_path"])
        test = load_dataset(ds["test_path"])
        pool = load_dataset(ds["ood_path"]) if "ood_path" in ds else None
        return train, test, pool, False
    gen = ds["generate"]
    spec = cluster_spec_from(gen)
    test_per = int(gen.get("test_samples_per_class", 200))
    train, test = split_train_test(spec, test_per)
    pool = None
    if raw.get("noise", {}).get("kind") == "openset_combined":
        pool = generate_openset_pool(spec)
    return train, test, pool, True


def corrupt(train, raw, run_seed, pool=None):
    spec = noise_spec_from(raw.get("noise", {}), run_seed)
    if spec.kind == "symmetric" and spec.eta == 0.0 and spec.rho == 0.0:
        return train
    return inject(train, spec, ood_pool=pool)


def _mean_over(history, key, window=10, last=True):
    vals = [rec["selection"][key] for rec in history
            if rec.get("selection") and rec["selection"].get(key) is not None]
    if not vals:
        return None
    window = min(window, len(vals))
    chunk = vals[-window:] if last else vals[:window]
    return float(np.mean(chunk))


def summarize_history(history):
    accs = [rec["test_accuracy"] for rec in history]
    return {
        "epochs": len(history),
        "accuracy": float(max(accs)),
        "final_accuracy": float(accs[-1]),
        "f1": _mean_over(history, "f1"),
        "precision": _mean_over(history, "precision"),
        "recall": _mean_over(history, "recall"),
        "clean_rate": _mean_over(history, "clean_rate"),
        "selection_size": _mean_over(history, "size"),
        "mean_k_first": _mean_over(history, "mean_k", last=False),
        "mean_k_last": _mean_over(history, "mean_k", last=True),
        "relabel_count_last": _mean_over(history, "relabel_count"),
    }


def run_experiment(raw, selector=None, run_seed=None):
    """Train once under `raw` config; returns (model, history, summary)."""
    validate_config(raw)
    seed = int(raw["seeds"][0] if run_seed is None else run_seed)
    train, test, pool, generated = build_datasets(raw, seed)
    if generated:
        train = corrupt(train, raw, seed, pool)

    tcfg = train_config_from(raw.get("train", {}), seed)
    pcfg = pipeline_config_from(raw.get("pipeline", {}), tcfg.warmup_epochs)
    if selector is not None:
        pcfg = replace(pcfg, selector=selector)

    model, history = train_loop(train, test, pcfg, tcfg)
    summary = summarize_history(history)
    summary.update({"selector": pcfg.selector, "seed": seed})
    return model, history, summary


def _rank(values):
    """Average ranks, 1 = largest value."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(-values, kind="stable")
    ranks = np.empty(values.size, dtype=np.float64)
    ranks[order] = np.arange(1, values.size + 1)
    for v in np.unique(values):
        tied = values == v
        if tied.sum() > 1:
            ranks[tied] = ranks[tied].mean()
    return ranks


def run_compare(raw, selectors=None, progress=None):
    """Grid of (selector, seed) runs with per-selector aggregates and an
    accuracy ranking table."""
    validate_config(raw)
    selectors = list(selectors or raw.get("selectors") or [raw["pipeline"]["selector"]])
    seeds = [int(s) for s in raw["seeds"]]

    rows = []
    for selector in selectors:
        for seed in seeds:
            _, history, summary = run_experiment(raw, selector=selector, run_seed=seed)
            rows.append(summary)
            if progress is not None:
                progress(summary)

    metrics = ["accuracy", "final_accuracy", "f1", "precision", "recall",
               "clean_rate", "selection_size", "mean_k_first", "mean_k_last"]
    aggregate = {}
    for selector in selectors:
        sel_rows = [r for r in rows if r["selector"] == selector]
        agg = {}
        for key in metrics:
            vals = [r[key] for r in sel_rows if r[key] is not None]
            if vals:
                agg[key] = {"mean": float(np.mean(vals)), "std": float(np.std(vals))}
            else:
                agg[key] = None
        aggregate[selector] = agg

    ranking = []
    if len(selectors) > 1:
        per_seed_ranks = {s: [] for s in selectors}
        for seed in seeds:
            accs = [next(r["accuracy"] for r in rows
                         if r["selector"] == s and r["seed"] == seed)
                    for s in selectors]
            ranks = _rank(accs)
            for s, rk in zip(selectors, ranks):
                per_seed_ranks[s].append(rk)
        ranking = [{"selector": s,
                    "mean_rank": float(np.mean(per_seed_ranks[s])),
                    "mean_accuracy": aggregate[s]["accuracy"]["mean"]}
                   for s in selectors]
        ranking.sort(key=lambda r: r["mean_rank"])

    return {"selectors": selectors, "seeds": seeds, "runs": rows,
            "aggregate": aggregate, "ranking": ranking}
