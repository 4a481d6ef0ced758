"""Desk-scale iterative trainer driving per-epoch selection.

The model is a linear softmax classifier over fixed input features (the
encoder is the identity), plus a projector/predictor pair used by the
consistency loss on the noisy subset:

    loss = CE(softmax(W x + b), mixed targets)            over the clean batch
         + w_cons * mean(-cos(h1(x), h2(x)))              over the noisy batch

with h1 = predictor @ projector @ a1(x), h2 = projector @ a2(x), where a1/a2
add independent Gaussian feature noise and the h2 branch is treated as a
constant (stop-gradient). All gradients are analytic; see loss_and_grad.

Per epoch after warm-up: predict -> select -> relabel carry-over ->
class-balanced oversampling of the clean set -> MixUp -> SGD with momentum
and weight decay. Every random draw is keyed by (seed, epoch, purpose), so
runs are reproducible bit-for-bit.
"""

from dataclasses import dataclass

import numpy as np

from .dataset import Predictions, normalize_features
from .errors import (
    DimensionMismatch,
    EmptyBatch,
    EmptyCleanSet,
    LengthMismatch,
    NonFiniteLoss,
)
from .metrics import evaluate_accuracy, selection_metrics
from .pipeline import select


@dataclass
class SoftmaxModel:
    """Linear classifier (W, b) with projector/predictor consistency heads."""

    W: np.ndarray
    b: np.ndarray
    projector: np.ndarray
    predictor: np.ndarray
    aug_sigma: float = 0.1

    def params(self):
        return {"W": self.W, "b": self.b,
                "projector": self.projector, "predictor": self.predictor}

    def copy(self):
        return SoftmaxModel(self.W.copy(), self.b.copy(), self.projector.copy(),
                            self.predictor.copy(), self.aug_sigma)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 24
    batch_size: int = 128
    learning_rate: float = 0.5
    momentum: float = 0.9
    weight_decay: float = 0.0005
    mixup_alpha: float = 1.0
    aug_sigma: float = 0.1
    warmup_epochs: int = 4
    consistency_weight: float = 1.0
    projector_dim: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.mixup_alpha <= 0:
            raise ValueError("mixup_alpha must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.projector_dim < 1:
            raise ValueError("projector_dim must be >= 1")
        if not (0 <= self.warmup_epochs <= self.epochs):
            raise ValueError("warmup_epochs must lie in [0, epochs]")


def init_model(dim, class_count, config):
    """Zero classifier, small random consistency heads; deterministic."""
    rng = np.random.default_rng(np.random.SeedSequence([int(config.seed), 11]))
    p = config.projector_dim
    return SoftmaxModel(
        W=np.zeros((class_count, dim)),
        b=np.zeros(class_count),
        projector=rng.standard_normal((p, dim)) / np.sqrt(dim),
        predictor=rng.standard_normal((p, p)) / np.sqrt(p),
        aug_sigma=config.aug_sigma,
    )


def _softmax(z):
    with np.errstate(invalid="ignore"):
        z = z - z.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)


def predict_probs(model, features, epoch=0):
    """Softmax class probabilities for every feature row."""
    feats = np.asarray(features, dtype=np.float64)
    if feats.shape[1] != model.W.shape[1]:
        raise DimensionMismatch(
            f"features dim {feats.shape[1]} != model dim {model.W.shape[1]}")
    return Predictions(_softmax(feats @ model.W.T + model.b), epoch=epoch)


def mixup_batch(features, targets, alpha, seed, lam=None):
    """MixUp a batch against a seeded shuffle of itself.

    Returns (mixed features, mixed targets, lam). One lam ~ Beta(alpha,
    alpha) per batch; pass `lam` to pin it (used by tests and the noisy
    branch, whose targets are irrelevant).
    """
    x = np.asarray(features, dtype=np.float64)
    if x.shape[0] == 0:
        raise EmptyBatch("mixup over an empty batch")
    if alpha <= 0:
        raise ValueError("alpha must be > 0")
    rng = np.random.default_rng(np.random.SeedSequence(
        [int(s) & 0xFFFFFFFFFFFFFFFF for s in np.atleast_1d(seed)]))
    if lam is None:
        lam = float(rng.beta(alpha, alpha))
    perm = rng.permutation(x.shape[0])
    mixed_x = lam * x + (1.0 - lam) * x[perm]
    if targets is None:
        return mixed_x, None, lam
    t = np.asarray(targets, dtype=np.float64)
    return mixed_x, lam * t + (1.0 - lam) * t[perm], lam


def oversample(clean, noisy, labels, seed):
    """Class-balanced resampling of the clean set.

    First every class inside `clean` is resampled with replacement up to the
    majority class count; the balanced multiset is then topped up with
    replacement to size |clean| + |noisy| (or sampled down to it when the
    balancing overshoots). Already-balanced clean sets with no noisy samples
    come back unchanged (shuffled).
    """
    clean = np.asarray(clean, dtype=np.int64)
    noisy = np.asarray(noisy, dtype=np.int64)
    if clean.size == 0:
        raise EmptyCleanSet("cannot oversample an empty clean set")
    labels = np.asarray(labels)
    rng = np.random.default_rng(np.random.SeedSequence(
        [int(s) & 0xFFFFFFFFFFFFFFFF for s in np.atleast_1d(seed)]))

    groups = [clean[labels[clean] == c] for c in np.unique(labels[clean])]
    majority = max(g.size for g in groups)
    balanced = []
    for g in groups:
        balanced.append(g)
        if g.size < majority:
            balanced.append(rng.choice(g, size=majority - g.size, replace=True))
    balanced = np.concatenate(balanced)

    target = clean.size + noisy.size
    if balanced.size < target:
        extra = rng.choice(balanced, size=target - balanced.size, replace=True)
        out = np.concatenate([balanced, extra])
    elif balanced.size > target:
        out = rng.choice(balanced, size=target, replace=True)
    else:
        out = balanced
    return rng.permutation(out)


def _neg_cosine(v1, v2):
    n1 = np.linalg.norm(v1, axis=1)
    n2 = np.linalg.norm(v2, axis=1)
    dot = (v1 * v2).sum(axis=1)
    return dot, n1, n2


def loss_and_grad(model, clean_batch, noisy_batch, config,
                  aug_noise=None, h2_model=None):
    """Total loss and analytic gradients for one step.

    clean_batch: (mixed features, mixed simplex targets); noisy_batch:
    feature array (may be empty/None). aug_noise: pre-drawn pair of standard
    normal arrays shaped like the noisy batch (drawn from config.seed when
    omitted). h2_model supplies the frozen parameters for the stop-gradient
    branch; defaults to `model` itself, which is the training semantics.

    Returns (loss, grads, parts) with parts = {"ce": ..., "consistency": ...}
    reported separately.
    """
    xc, tc = clean_batch
    xc = np.asarray(xc, dtype=np.float64)
    tc = np.asarray(tc, dtype=np.float64)
    if xc.shape[0] == 0:
        raise EmptyBatch("empty clean batch")
    if xc.shape[0] != tc.shape[0]:
        raise LengthMismatch("clean features/targets misaligned")

    grads = {k: np.zeros_like(v) for k, v in model.params().items()}

    probs = _softmax(xc @ model.W.T + model.b)
    ce = float(-(tc * np.log(np.maximum(probs, 1e-300))).sum() / xc.shape[0])
    dz = (probs - tc) / xc.shape[0]
    grads["W"] = dz.T @ xc
    grads["b"] = dz.sum(axis=0)

    cons = 0.0
    xn = None if noisy_batch is None else np.asarray(noisy_batch, dtype=np.float64)
    if xn is not None and xn.shape[0] > 0:
        if aug_noise is None:
            rng = np.random.default_rng(np.random.SeedSequence([int(config.seed), 23]))
            aug_noise = (rng.standard_normal(xn.shape), rng.standard_normal(xn.shape))
        e1, e2 = aug_noise
        x1 = xn + config.aug_sigma * np.asarray(e1, dtype=np.float64)
        x2 = xn + config.aug_sigma * np.asarray(e2, dtype=np.float64)

        frozen = model if h2_model is None else h2_model
        u = x1 @ model.projector.T           # (B, p)
        v1 = u @ model.predictor.T           # (B, p)
        v2 = x2 @ frozen.projector.T         # (B, p), constant branch

        dot, n1, n2 = _neg_cosine(v1, v2)
        if (n1 == 0).any() or (n2 == 0).any():
            raise NonFiniteLoss("zero-norm consistency head output")
        cos = dot / (n1 * n2)
        m = xn.shape[0]
        cons = float(-cos.mean())

        # d(-cos)/dv1 = -(v2/(n1 n2) - cos * v1/n1^2)
        dv1 = -(v2 / (n1 * n2)[:, None] - (cos / n1 ** 2)[:, None] * v1) / m
        w = config.consistency_weight
        grads["predictor"] += w * (dv1.T @ u)
        du = dv1 @ model.predictor
        grads["projector"] += w * (du.T @ x1)

    loss = ce + config.consistency_weight * cons
    if not np.isfinite(loss):
        raise NonFiniteLoss(f"loss became {loss}")
    return loss, grads, {"ce": ce, "consistency": cons}


def sgd_step(model, grads, velocity, config):
    """SGD with momentum and decoupled-from-nothing classic weight decay:
    v <- mu v + (g + wd p); p <- p - lr v."""
    for name, p in model.params().items():
        g = grads[name] + config.weight_decay * p
        velocity[name] = config.momentum * velocity[name] + g
        p -= config.learning_rate * velocity[name]


def one_hot(labels, class_count):
    out = np.zeros((len(labels), class_count))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def _epoch_rng(seed, epoch, tag):
    return np.random.default_rng(np.random.SeedSequence(
        [int(seed) & 0xFFFFFFFFFFFFFFFF, int(epoch), int(tag)]))


def _warmup_epoch(model, feats, labels, c, velocity, config, epoch):
    rng = _epoch_rng(config.seed, epoch, 1)
    perm = rng.permutation(feats.shape[0])
    total, nb = 0.0, 0
    for start in range(0, perm.size, config.batch_size):
        idx = perm[start:start + config.batch_size]
        batch = (feats[idx], one_hot(labels[idx], c))
        loss, grads, _ = loss_and_grad(model, batch, None, config)
        sgd_step(model, grads, velocity, config)
        total += loss
        nb += 1
    return total / max(nb, 1)


def _selection_epoch(model, feats, result, c, velocity, config, epoch):
    labels = result.labels
    rng = _epoch_rng(config.seed, epoch, 2)
    order = oversample(result.clean, result.noisy, labels,
                       [config.seed, epoch, 3])
    noisy_idx = result.noisy
    ce_total, cons_total, nb = 0.0, 0.0, 0
    for start in range(0, order.size, config.batch_size):
        idx = order[start:start + config.batch_size]
        mx, mt, _ = mixup_batch(feats[idx], one_hot(labels[idx], c),
                                config.mixup_alpha,
                                [config.seed, epoch, 4, nb])
        noisy_batch = None
        aug = None
        if noisy_idx.size:
            pick = rng.choice(noisy_idx, size=idx.size, replace=True)
            noisy_batch, _, _ = mixup_batch(feats[pick], None, config.mixup_alpha,
                                            [config.seed, epoch, 5, nb])
            aug = (rng.standard_normal(noisy_batch.shape),
                   rng.standard_normal(noisy_batch.shape))
        loss, grads, parts = loss_and_grad(model, (mx, mt), noisy_batch, config,
                                           aug_noise=aug)
        sgd_step(model, grads, velocity, config)
        ce_total += parts["ce"]
        cons_total += parts["consistency"]
        nb += 1
    return ce_total / max(nb, 1), cons_total / max(nb, 1)


def train_loop(dataset, testset, pipeline_config, train_config):
    """Warm-up epochs of plain cross-entropy, then per-epoch select/train.

    Both datasets are normalized internally. Relabeled labels persist across
    epochs. Returns (model, history) where history holds one dict per epoch
    with test accuracy and selection quality (when true labels are known).
    """
    if dataset.dim != testset.dim:
        raise DimensionMismatch("train/test feature dimensions differ")
    train = normalize_features(dataset)
    test = normalize_features(testset)
    feats = train.features.astype(np.float64)
    c = train.class_count

    cfg = train_config
    model = init_model(train.dim, c, cfg)
    velocity = {k: np.zeros_like(v) for k, v in model.params().items()}
    current = train
    history = []
    last_result = None

    for epoch in range(cfg.epochs):
        record = {"epoch": epoch}
        if epoch < cfg.warmup_epochs:
            record["phase"] = "warmup"
            record["loss_ce"] = _warmup_epoch(model, feats, current.noisy_labels,
                                              c, velocity, cfg, epoch)
            record["loss_consistency"] = None
            record["selection"] = None
        else:
            record["phase"] = "select"
            since = epoch - cfg.warmup_epochs
            if last_result is None or since % pipeline_config.select_every == 0:
                preds = predict_probs(model, feats, epoch=epoch)
                last_result = select(current, preds, pipeline_config)
                current = current.with_labels(last_result.labels)
            result = last_result
            ce, cons = _selection_epoch(model, feats, result, c, velocity, cfg, epoch)
            record["loss_ce"] = ce
            record["loss_consistency"] = cons
            sel = {
                "size": int(result.clean.size),
                "relabel_count": int(result.relabel_count),
                "degenerate_split": bool(result.degenerate_split),
                "mean_k": None,
                "tau": None,
            }
            mk = result.mean_k()
            if np.isfinite(mk):
                sel["mean_k"] = mk
            if result.partition is not None:
                sel["tau"] = result.partition.tau
            if current.true_labels is not None:
                m = selection_metrics(result, current)
                sel.update({
                    "precision": m.precision,
                    "recall": m.recall,
                    "f1": m.f1,
                    "clean_rate": m.clean_rate,
                })
            record["selection"] = sel
        record["test_accuracy"] = evaluate_accuracy(model, test)
        history.append(record)
    return model, history
