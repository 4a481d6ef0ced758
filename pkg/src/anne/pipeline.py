"""Selection pipeline: relabeling, the hybrid selector, and baselines.

The hybrid flow is relabel -> confidence split -> eigenvector filtering on
the high-confidence subset -> adaptive KNN on the low-confidence subset ->
union of the per-subset decisions. When the confidence scores cannot be
split (e.g. a fully confident model), selection falls back to an all-clean
passthrough, mirroring warm-up behavior.

Baselines cover whole-set variants of both feature methods, a small-loss
Gaussian-mixture split, a fixed-K nearest-neighbor vote, and the four
subset-placement ablations (which method runs on which confidence subset).
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import aknn as _aknn
from . import fine as _fine
from .aknn import AknnConfig, select_on_pool
from .confidence import split_confidence
from .dataset import is_normalized
from .errors import (
    DegenerateLosses,
    DegenerateScores,
    InsufficientSamples,
    LengthMismatch,
    NotNormalized,
)

SELECTORS = (
    "anne",
    "fine_only",
    "aknn_only",
    "small_loss_gmm",
    "fixed_knn",
    "fine_hcs_fine_lcs",
    "aknn_hcs_aknn_lcs",
    "aknn_hcs_fine_lcs",
    "passthrough",
)

# subset placements: selector -> (method on HCS, method on LCS)
_PLACEMENTS = {
    "anne": ("fine", "aknn"),
    "fine_hcs_fine_lcs": ("fine", "fine"),
    "aknn_hcs_aknn_lcs": ("aknn", "aknn"),
    "aknn_hcs_fine_lcs": ("aknn", "fine"),
}


@dataclass(frozen=True)
class PipelineConfig:
    """Selection hyperparameters.

    gamma_r: relabeling confidence threshold; gamma_e: eigenvector alignment
    threshold; fixed_k: K for the fixed-KNN baseline; select_every: epochs
    between selection passes after warm-up.
    """

    gamma_r: float = 0.9
    gamma_e: float = 0.1
    aknn: AknnConfig = field(default_factory=AknnConfig)
    selector: str = "anne"
    warmup_epochs: int = 4
    fixed_k: int = 200
    select_every: int = 1

    def __post_init__(self):
        for name in ("gamma_r", "gamma_e"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name}={v} outside [0, 1]")
        if self.selector not in SELECTORS:
            raise ValueError(f"selector {self.selector!r} not one of {SELECTORS}")
        if self.fixed_k < 1:
            raise ValueError("fixed_k must be >= 1")
        if self.warmup_epochs < 0:
            raise ValueError("warmup_epochs must be >= 0")
        if self.select_every < 1:
            raise ValueError("select_every must be >= 1")


@dataclass(frozen=True)
class SelectionResult:
    """Clean/noisy partition with per-sample diagnostics.

    provenance holds one of 'fine', 'aknn', 'passthrough', 'small_loss',
    'fixed_knn' per sample. labels are the post-relabel labels the selector
    judged. k/omega/knn_pred are NaN/-1 outside the KNN-judged subset;
    fine_score is NaN outside the eigenvector-judged subset.
    """

    clean: np.ndarray
    noisy: np.ndarray
    provenance: np.ndarray
    labels: np.ndarray
    relabel_count: int = 0
    partition: object = None
    degenerate_split: bool = False
    k: np.ndarray | None = None
    omega: np.ndarray | None = None
    knn_pred: np.ndarray | None = None
    fine_score: np.ndarray | None = None

    @property
    def n(self):
        return self.labels.size

    def mean_k(self):
        if self.k is None or not np.isfinite(self.k).any():
            return float("nan")
        return float(np.nanmean(self.k))

    def summary(self):
        out = {
            "n": int(self.n),
            "n_clean": int(self.clean.size),
            "n_noisy": int(self.noisy.size),
            "relabel_count": int(self.relabel_count),
            "degenerate_split": bool(self.degenerate_split),
            "mean_k": self.mean_k(),
            "provenance_counts": {
                tag: int((self.provenance == tag).sum())
                for tag in np.unique(self.provenance)
            },
        }
        if self.partition is not None:
            out["partition"] = self.partition.summary()
        return out


def relabel(dataset, preds, gamma_r):
    """Replace labels with the model argmax wherever max probability
    strictly exceeds gamma_r. Returns (dataset, count of changed labels)."""
    if preds.n != dataset.n:
        raise LengthMismatch(f"{preds.n} predictions for {dataset.n} samples")
    scores = preds.max_scores()
    argmax = preds.probs.argmax(axis=1).astype(np.int32)
    take = scores > gamma_r
    new = np.where(take, argmax, dataset.noisy_labels).astype(np.int32)
    count = int((new != dataset.noisy_labels).sum())
    return dataset.with_labels(new), count


def _empty_diag(n):
    return {
        "k": np.full(n, np.nan),
        "omega": np.full(n, np.nan),
        "knn_pred": np.full(n, -1, dtype=np.int64),
        "fine_score": np.full(n, np.nan),
    }


def _passthrough(dataset, relabel_count, degenerate):
    n = dataset.n
    return SelectionResult(
        clean=np.arange(n, dtype=np.int64),
        noisy=np.empty(0, dtype=np.int64),
        provenance=np.full(n, "passthrough"),
        labels=dataset.noisy_labels.copy(),
        relabel_count=relabel_count,
        partition=None,
        degenerate_split=degenerate,
        **_empty_diag(n),
    )


def _apply_fine(ds, subset, gamma_e, diag, provenance):
    clean, noisy, scores = _fine.fine_select(subset, ds, gamma_e)
    diag["fine_score"][np.sort(subset)] = scores
    provenance[subset] = "fine"
    return clean, noisy


def _apply_aknn(ds, pool, kmins, config, diag, provenance):
    clean, noisy, nd = select_on_pool(ds.features.astype(np.float64), pool,
                                      ds.noisy_labels, kmins, ds.class_count, config)
    diag["k"][nd.indices] = nd.k
    diag["omega"][nd.indices] = nd.omega
    diag["knn_pred"][nd.indices] = nd.predicted
    provenance[pool] = "aknn"
    return clean, noisy


def _placement_select(dataset, preds, config, hcs_method, lcs_method):
    if not is_normalized(dataset.features):
        raise NotNormalized("selection requires unit-norm features")
    ds, count = relabel(dataset, preds, config.gamma_r)
    try:
        part = split_confidence(preds)
    except DegenerateScores:
        return _passthrough(ds, count, degenerate=True)

    n = ds.n
    diag = _empty_diag(n)
    provenance = np.full(n, "passthrough")
    clean_parts, noisy_parts = [], []

    ak = config.aknn
    if part.hcs.size:
        if hcs_method == "fine":
            c, x = _apply_fine(ds, part.hcs, config.gamma_e, diag, provenance)
        else:
            kmins = np.full(part.hcs.size, ak.k_min_hcs, dtype=np.int64)
            c, x = _apply_aknn(ds, part.hcs, kmins, ak, diag, provenance)
        clean_parts.append(c)
        noisy_parts.append(x)

    lcs = part.lcs
    if lcs.size:
        if lcs_method == "fine":
            c, x = _apply_fine(ds, lcs, config.gamma_e, diag, provenance)
        else:
            kmins = np.where(np.isin(lcs, part.lcs1), ak.k_min_lcs1, ak.k_min_lcs2)
            c, x = _apply_aknn(ds, lcs, kmins, ak, diag, provenance)
        clean_parts.append(c)
        noisy_parts.append(x)

    return SelectionResult(
        clean=np.sort(np.concatenate(clean_parts)) if clean_parts else np.empty(0, np.int64),
        noisy=np.sort(np.concatenate(noisy_parts)) if noisy_parts else np.empty(0, np.int64),
        provenance=provenance,
        labels=ds.noisy_labels.copy(),
        relabel_count=count,
        partition=part,
        degenerate_split=False,
        **diag,
    )


def anne_select(dataset, preds, config):
    """Hybrid selection: eigenvector filtering on the high-confidence subset,
    adaptive KNN on the low-confidence subset."""
    return _placement_select(dataset, preds, config, "fine", "aknn")


def ablation_select(dataset, preds, config):
    """Selection with the subset placement named by config.selector."""
    try:
        hcs_m, lcs_m = _PLACEMENTS[config.selector]
    except KeyError:
        raise ValueError(f"{config.selector!r} is not a placement selector") from None
    return _placement_select(dataset, preds, config, hcs_m, lcs_m)


def fine_only_select(dataset, preds, config):
    """Eigenvector filtering over the whole training set (no split)."""
    if not is_normalized(dataset.features):
        raise NotNormalized("selection requires unit-norm features")
    ds, count = relabel(dataset, preds, config.gamma_r)
    n = ds.n
    diag = _empty_diag(n)
    provenance = np.full(n, "passthrough")
    clean, noisy = _apply_fine(ds, np.arange(n, dtype=np.int64), config.gamma_e,
                               diag, provenance)
    return SelectionResult(np.sort(clean), np.sort(noisy), provenance,
                           ds.noisy_labels.copy(), count, None, False, **diag)


def aknn_only_select(dataset, preds, config):
    """Adaptive KNN over the whole training set.

    The confidence split still runs, but only to assign minimum neighborhood
    sizes (k_min_hcs / k_min_lcs1 / k_min_lcs2); the neighbor pool is the
    full set. Falls back to passthrough when the split is degenerate.
    """
    if not is_normalized(dataset.features):
        raise NotNormalized("selection requires unit-norm features")
    ds, count = relabel(dataset, preds, config.gamma_r)
    try:
        part = split_confidence(preds)
    except DegenerateScores:
        return _passthrough(ds, count, degenerate=True)

    n = ds.n
    ak = config.aknn
    kmins = np.full(n, ak.k_min_hcs, dtype=np.int64)
    kmins[part.lcs1] = ak.k_min_lcs1
    kmins[part.lcs2] = ak.k_min_lcs2
    diag = _empty_diag(n)
    provenance = np.full(n, "passthrough")
    clean, noisy = _apply_aknn(ds, np.arange(n, dtype=np.int64), kmins, ak,
                               diag, provenance)
    return SelectionResult(np.sort(clean), np.sort(noisy), provenance,
                           ds.noisy_labels.copy(), count, part, False, **diag)


def fit_two_gaussian_em(values, max_iter=500, tol=1e-8):
    """EM fit of a two-component 1-d Gaussian mixture.

    Component means start at the 0.25/0.75 quantiles. Returns
    (weights, means, stds, log_likelihood); components are ordered by mean.
    """
    x = np.asarray(values, dtype=np.float64)
    if x.size < 2:
        raise InsufficientSamples("need at least 2 values for a mixture fit")
    if x.std() == 0.0:
        raise DegenerateLosses("values have zero variance")

    means = np.quantile(x, [0.25, 0.75])
    stds = np.full(2, max(x.std(), 1e-3))
    weights = np.array([0.5, 0.5])
    var_floor = 1e-12

    prev_ll = -np.inf
    for _ in range(max_iter):
        # E step in log space
        log_pdf = (-0.5 * ((x[:, None] - means[None, :]) / stds[None, :]) ** 2
                   - np.log(stds[None, :]) - 0.5 * np.log(2 * np.pi))
        log_w = np.log(weights)[None, :] + log_pdf
        mx = log_w.max(axis=1, keepdims=True)
        lse = mx[:, 0] + np.log(np.exp(log_w - mx).sum(axis=1))
        resp = np.exp(log_w - lse[:, None])

        ll = float(lse.sum())
        nk = resp.sum(axis=0)
        nk = np.maximum(nk, 1e-12)
        means = (resp * x[:, None]).sum(axis=0) / nk
        var = (resp * (x[:, None] - means[None, :]) ** 2).sum(axis=0) / nk
        stds = np.sqrt(np.maximum(var, var_floor))
        weights = nk / x.size

        if ll - prev_ll < tol and np.isfinite(prev_ll):
            prev_ll = ll
            break
        prev_ll = ll

    order = np.argsort(means)
    return weights[order], means[order], stds[order], prev_ll


def gmm_posterior_low(values, weights, means, stds):
    """Posterior probability of the lower-mean component for each value."""
    x = np.asarray(values, dtype=np.float64)
    log_pdf = (-0.5 * ((x[:, None] - means[None, :]) / stds[None, :]) ** 2
               - np.log(stds[None, :]))
    log_w = np.log(weights)[None, :] + log_pdf
    mx = log_w.max(axis=1, keepdims=True)
    p = np.exp(log_w - mx)
    return p[:, 0] / p.sum(axis=1)


def small_loss_gmm_select(losses):
    """Small-loss split: min-max normalize, fit a two-component mixture,
    keep samples whose lower-mean-component posterior exceeds 0.5."""
    x = np.asarray(losses, dtype=np.float64)
    if x.size < 2:
        raise InsufficientSamples("need at least 2 losses")
    if not np.isfinite(x).all():
        raise ValueError("losses must be finite")
    lo, hi = x.min(), x.max()
    if hi == lo:
        raise DegenerateLosses("all losses are equal")
    z = (x - lo) / (hi - lo)
    weights, means, stds, _ = fit_two_gaussian_em(z)
    post = gmm_posterior_low(z, weights, means, stds)
    idx = np.arange(x.size, dtype=np.int64)
    clean = post > 0.5
    return idx[clean], idx[~clean]


def fixed_knn_select(dataset, k):
    """Fixed-K nearest-neighbor baseline: a sample is clean iff its label
    matches the vote of its K most cosine-similar samples (self excluded)."""
    n = dataset.n
    if n <= k:
        raise InsufficientSamples(f"need more than K={k} samples, have {n}")
    feats = dataset.features.astype(np.float64)
    if not is_normalized(feats):
        raise NotNormalized("fixed KNN requires unit-norm features")
    labels = dataset.noisy_labels.astype(np.int64)
    c = dataset.class_count

    clean_mask = np.zeros(n, dtype=bool)
    block = max(1, int(2e6) // max(n, 1))
    for start in range(0, n, block):
        stop = min(start + block, n)
        sims = np.clip(feats[start:stop] @ feats.T, -1.0, 1.0)
        sims[np.arange(stop - start), np.arange(start, stop)] = -2.0
        # exact top-K with deterministic ties: similarity desc, then index asc
        for r in range(stop - start):
            row = sims[r]
            order = np.lexsort((np.arange(n), -row))[:k]
            vote = _aknn.knn_vote(order, labels, row[order])
            clean_mask[start + r] = labels[start + r] == vote

    idx = np.arange(n, dtype=np.int64)
    return idx[clean_mask], idx[~clean_mask]


def select(dataset, preds, config):
    """Dispatch to the selector named in config. small_loss_gmm derives its
    per-sample losses as the cross-entropy of preds against current labels."""
    name = config.selector
    if name == "anne":
        return anne_select(dataset, preds, config)
    if name in _PLACEMENTS:
        return ablation_select(dataset, preds, config)
    if name == "fine_only":
        return fine_only_select(dataset, preds, config)
    if name == "aknn_only":
        return aknn_only_select(dataset, preds, config)
    if name == "passthrough":
        return _passthrough(dataset, 0, degenerate=False)
    if name == "small_loss_gmm":
        ds, count = relabel(dataset, preds, config.gamma_r)
        p = preds.probs[np.arange(ds.n), ds.noisy_labels]
        losses = -np.log(np.maximum(p, 1e-300))
        clean, noisy = small_loss_gmm_select(losses)
        res = _passthrough(ds, count, degenerate=False)
        return replace(res, clean=clean, noisy=noisy,
                       provenance=np.full(ds.n, "small_loss"))
    if name == "fixed_knn":
        ds, count = relabel(dataset, preds, config.gamma_r)
        clean, noisy = fixed_knn_select(ds, config.fixed_k)
        res = _passthrough(ds, count, degenerate=False)
        return replace(res, clean=clean, noisy=noisy,
                       provenance=np.full(ds.n, "fixed_knn"))
    raise ValueError(f"unknown selector {name!r}")
