"""Selection-quality and classification metrics.

Clean detection is scored against the ground-truth clean mask
(current label == hidden true label); open-set samples carry the sentinel
true label equal to class_count and therefore never count as clean.
Empty-denominator conventions: precision of an empty selection is 0; metrics
of an empty subset are reported as absent (None), not zero.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyTestSet, MissingTrueLabels


@dataclass(frozen=True)
class SelectionMetrics:
    precision: float
    recall: float
    f1: float
    selection_size: int
    clean_rate: float
    noisy_precision: float
    noisy_recall: float

    def to_dict(self):
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "selection_size": self.selection_size,
            "clean_rate": self.clean_rate,
            "noisy_precision": self.noisy_precision,
            "noisy_recall": self.noisy_recall,
        }


def _rate(num, den):
    return float(num / den) if den else 0.0


def _metrics_from_masks(selected_clean, truly_clean):
    tp = int((selected_clean & truly_clean).sum())
    p = _rate(tp, selected_clean.sum())
    r = _rate(tp, truly_clean.sum())
    f1 = _rate(2 * p * r, p + r) if (p + r) else 0.0

    sel_noisy = ~selected_clean
    truly_noisy = ~truly_clean
    tn = int((sel_noisy & truly_noisy).sum())
    return SelectionMetrics(
        precision=p,
        recall=r,
        f1=f1,
        selection_size=int(selected_clean.sum()),
        clean_rate=p,
        noisy_precision=_rate(tn, sel_noisy.sum()),
        noisy_recall=_rate(tn, truly_noisy.sum()),
    )


def selection_metrics(result, dataset):
    """Precision/recall/F1 of clean detection for a SelectionResult.

    `dataset` must carry true labels and the same (post-relabel) observed
    labels the selector judged.
    """
    if dataset.true_labels is None:
        raise MissingTrueLabels("selection metrics need ground truth")
    n = dataset.n
    selected = np.zeros(n, dtype=bool)
    selected[result.clean] = True
    truly_clean = dataset.noisy_labels.astype(np.int64) == dataset.true_labels.astype(np.int64)
    return _metrics_from_masks(selected, truly_clean)


def per_subset_metrics(result, partition, dataset):
    """Selection metrics restricted to the confidence subsets.

    Returns {"hcs": SelectionMetrics | None, "lcs": ...}; an empty subset is
    reported as None.
    """
    if dataset.true_labels is None:
        raise MissingTrueLabels("selection metrics need ground truth")
    n = dataset.n
    selected = np.zeros(n, dtype=bool)
    selected[result.clean] = True
    truly_clean = dataset.noisy_labels.astype(np.int64) == dataset.true_labels.astype(np.int64)

    out = {}
    for name, idx in (("hcs", partition.hcs), ("lcs", partition.lcs)):
        idx = np.asarray(idx, dtype=np.int64)
        out[name] = _metrics_from_masks(selected[idx], truly_clean[idx]) if idx.size else None
    return out


def evaluate_accuracy(model, testset):
    """Fraction of argmax-correct predictions on a ground-truth test set.

    Argmax ties resolve to the smallest class id.
    """
    if testset.n == 0:
        raise EmptyTestSet("cannot evaluate on an empty test set")
    feats = testset.features.astype(np.float64)
    if feats.shape[1] != model.W.shape[1]:
        raise DimensionMismatch(
            f"test dim {feats.shape[1]} != model dim {model.W.shape[1]}")
    pred = (feats @ model.W.T + model.b).argmax(axis=1)
    truth = testset.true_labels if testset.true_labels is not None else testset.noisy_labels
    return float((pred == truth.astype(np.int64)).mean())
