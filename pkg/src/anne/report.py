"""Report rendering: JSONL history, CSV tables, and matplotlib figures.

Every report path writes the delimited data first, then renders the figures
next to it, so results stay machine-readable even when plotting is
unavailable for some reason.
"""

import csv
import json

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def write_jsonl(records, path):
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True))
            fh.write("\n")


def write_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_csv(rows, path, columns=None):
    if columns is None:
        columns = []
        for row in rows:
            for key in row:
                if key not in columns:
                    columns.append(key)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k) for k in columns})


def _selection_series(history, key):
    xs, ys = [], []
    for rec in history:
        sel = rec.get("selection")
        if sel and sel.get(key) is not None:
            xs.append(rec["epoch"])
            ys.append(sel[key])
    return xs, ys


def render_history_figures(history, out_dir):
    """Training-curve figures for one run; returns written paths."""
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot([r["epoch"] for r in history], [r["test_accuracy"] for r in history],
            marker="o", ms=3)
    ax.set_xlabel("epoch")
    ax.set_ylabel("test accuracy")
    ax.set_title("Test accuracy")
    ax.grid(alpha=0.3)
    path = out_dir / "accuracy.png"
    fig.savefig(path, dpi=110, bbox_inches="tight")
    plt.close(fig)
    written.append(path)

    xs, ks = _selection_series(history, "mean_k")
    if xs:
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(xs, ks, marker="o", ms=3, color="tab:orange")
        ax.set_xlabel("epoch")
        ax.set_ylabel("mean neighborhood size K")
        ax.set_title("Adaptive-K trajectory")
        ax.grid(alpha=0.3)
        path = out_dir / "mean_k.png"
        fig.savefig(path, dpi=110, bbox_inches="tight")
        plt.close(fig)
        written.append(path)

    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for key, ax in zip(("size", "f1"), axes):
        xs, ys = _selection_series(history, key)
        if xs:
            ax.plot(xs, ys, marker="o", ms=3)
        ax.set_xlabel("epoch")
        ax.set_ylabel("selection size" if key == "size" else "clean-detection F1")
        ax.grid(alpha=0.3)
    fig.suptitle("Selection size and quality")
    path = out_dir / "selection.png"
    fig.savefig(path, dpi=110, bbox_inches="tight")
    plt.close(fig)
    written.append(path)
    return written


def render_compare_figures(compare, out_dir):
    """Cross-selector figures: F1/accuracy bars and the clean-rate versus
    selection-size tradeoff scatter."""
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    selectors = compare["selectors"]
    agg = compare["aggregate"]

    def bar(metric, label, fname):
        vals = [agg[s][metric]["mean"] if agg[s][metric] else 0.0 for s in selectors]
        errs = [agg[s][metric]["std"] if agg[s][metric] else 0.0 for s in selectors]
        fig, ax = plt.subplots(figsize=(1.2 + 1.1 * len(selectors), 4))
        ax.bar(range(len(selectors)), vals, yerr=errs, capsize=4,
               color="tab:blue", alpha=0.85)
        ax.set_xticks(range(len(selectors)))
        ax.set_xticklabels(selectors, rotation=20, ha="right")
        ax.set_ylabel(label)
        ax.grid(axis="y", alpha=0.3)
        path = out_dir / fname
        fig.savefig(path, dpi=110, bbox_inches="tight")
        plt.close(fig)
        written.append(path)

    bar("accuracy", "best test accuracy", "compare_accuracy.png")
    if any(agg[s]["f1"] for s in selectors):
        bar("f1", "clean-detection F1", "compare_f1.png")

    runs = [r for r in compare["runs"]
            if r.get("clean_rate") is not None and r.get("selection_size") is not None]
    if runs:
        fig, ax = plt.subplots(figsize=(6, 4.5))
        for s in selectors:
            pts = [(r["selection_size"], r["clean_rate"]) for r in runs
                   if r["selector"] == s]
            if pts:
                xs, ys = zip(*pts)
                ax.scatter(xs, ys, label=s, s=28)
        ax.set_xlabel("selection size")
        ax.set_ylabel("clean rate")
        ax.set_title("Clean rate vs selection size")
        ax.legend(fontsize=8)
        ax.grid(alpha=0.3)
        path = out_dir / "compare_tradeoff.png"
        fig.savefig(path, dpi=110, bbox_inches="tight")
        plt.close(fig)
        written.append(path)
    return written
