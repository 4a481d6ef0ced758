"""Synthetic cluster datasets and label-noise injection.

Four corruption models over a clean dataset with known ground truth:

  symmetric            flip to a uniformly random other class with prob eta
  asymmetric           flip c -> mapping[c] with prob eta
  instance_dependent   per-sample flip rate drawn around eta; flipped samples
                       take the class of the nearest foreign centroid
  openset_combined     rate rho split omega/(1-omega) between symmetric flips
                       and feature replacement from an out-of-distribution
                       pool (replaced samples get true label = class_count)

All decisions are keyed by (seed, sample_id), so outputs are independent of
sample order. The instance-dependent rate distribution is a Gaussian with
mean eta and std eta/4 truncated to [0, 1); this is a feature-space stand-in
for part-based constructions that need image structure.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .dataset import Dataset
from .errors import (
    DimensionMismatch,
    InsufficientOodPool,
    InvalidMapping,
    InvalidSpec,
    MissingTrueLabels,
)
from .rand import stream_integers, stream_uniforms

NOISE_KINDS = ("symmetric", "asymmetric", "instance_dependent", "openset_combined")

# stream tags for per-sample draws
_S_FLIP = 1
_S_TARGET = 2
_S_RATE = 3
_S_OPEN_LABEL = 4


@dataclass(frozen=True)
class NoiseSpec:
    """Noise kind plus its parameters; `mapping` only applies to asymmetric,
    (rho, omega) only to openset_combined."""

    kind: str
    eta: float = 0.0
    mapping: dict | None = None
    rho: float = 0.0
    omega: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise InvalidSpec(f"noise kind {self.kind!r} not one of {NOISE_KINDS}")
        if not (0.0 <= self.eta < 1.0):
            raise InvalidSpec(f"eta={self.eta} outside [0, 1)")
        if self.kind == "openset_combined":
            for name, val in (("rho*omega", self.rho * self.omega),
                              ("rho*(1-omega)", self.rho * (1.0 - self.omega))):
                if not (0.0 <= val <= 1.0):
                    raise InvalidSpec(f"{name}={val} outside [0, 1]")


@dataclass(frozen=True)
class ClusterSpec:
    """Gaussian cluster layout for a synthetic embedding dataset."""

    class_count: int
    dim: int
    samples_per_class: int
    centroid_separation: float
    intra_class_std: float = 1.0
    ood_class_count: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.class_count < 2:
            raise InvalidSpec(f"class_count={self.class_count} must be >= 2")
        if self.dim < 1:
            raise InvalidSpec(f"dim={self.dim} must be positive")
        if self.samples_per_class < 1:
            raise InvalidSpec(f"samples_per_class={self.samples_per_class} must be positive")
        if self.centroid_separation <= 0:
            raise InvalidSpec(f"centroid_separation={self.centroid_separation} must be > 0")
        if self.intra_class_std < 0:
            raise InvalidSpec(f"intra_class_std={self.intra_class_std} must be >= 0")
        if self.ood_class_count < 0:
            raise InvalidSpec("ood_class_count must be >= 0")


def _cluster_means(class_count, dim, separation, rng):
    # standard-normal directions rescaled so the minimum pairwise distance
    # equals the requested separation
    means = rng.standard_normal((class_count, dim))
    diff = means[:, None, :] - means[None, :, :]
    dist = np.sqrt((diff ** 2).sum(-1))
    iu = np.triu_indices(class_count, k=1)
    min_dist = dist[iu].min()
    if min_dist <= 0:
        raise InvalidSpec("degenerate centroid draw; choose another seed")
    return means * (separation / min_dist)


def generate_clusters(spec, class_count=None, seed_salt=0):
    """Sample a clean clustered dataset (true_labels == noisy_labels).

    `class_count`/`seed_salt` support carving out-of-distribution pools from
    the same spec without touching its main stream.
    """
    c = spec.class_count if class_count is None else class_count
    if c < 2:
        raise InvalidSpec(f"class_count={c} must be >= 2")
    rng = np.random.default_rng(np.random.SeedSequence([int(spec.seed), 77_1000 + seed_salt]))
    means = _cluster_means(c, spec.dim, spec.centroid_separation, rng)
    noise = rng.standard_normal((c, spec.samples_per_class, spec.dim))
    feats = (means[:, None, :] + spec.intra_class_std * noise).reshape(-1, spec.dim)
    labels = np.repeat(np.arange(c, dtype=np.int32), spec.samples_per_class)
    return Dataset(feats.astype(np.float32), labels, c, labels.copy(),
                   np.arange(feats.shape[0], dtype=np.int64))


def generate_openset_pool(spec):
    """Clusters from `spec.ood_class_count` foreign classes in the same space."""
    if spec.ood_class_count < 2:
        raise InvalidSpec("ood_class_count must be >= 2 to build an open-set pool")
    return generate_clusters(spec, class_count=spec.ood_class_count, seed_salt=1)


def _require_true(dataset):
    if dataset.true_labels is None:
        raise MissingTrueLabels("injection requires a dataset with true labels")


def inject_symmetric(dataset, eta, seed):
    """Flip each label to a uniformly random other class with probability eta."""
    _require_true(dataset)
    true = dataset.true_labels.astype(np.int64)
    c = dataset.class_count
    flip = stream_uniforms(seed, dataset.sample_ids, _S_FLIP) < eta
    offset = stream_integers(seed, dataset.sample_ids, _S_TARGET, c - 1)
    flipped = (true + 1 + offset) % c
    noisy = np.where(flip, flipped, true).astype(np.int32)
    return dataset.with_labels(noisy)


def default_asymmetric_mapping(class_count):
    """Cyclic shift c -> (c+1) mod C."""
    return {c: (c + 1) % class_count for c in range(class_count)}


def _validate_mapping(mapping, class_count, eta):
    items = {int(k): int(v) for k, v in mapping.items()}
    for src, dst in items.items():
        if not (0 <= src < class_count and 0 <= dst < class_count):
            raise InvalidMapping(f"mapping entry {src}->{dst} outside [0, {class_count})")
        if src == dst and eta > 0:
            raise InvalidMapping(f"mapping sends class {src} to itself with eta > 0")
    if set(items.values()) != set(items.keys()):
        raise InvalidMapping("mapping must permute the classes it touches")
    return items


def inject_asymmetric(dataset, eta, mapping, seed):
    """Flip label c to mapping[c] with probability eta; classes absent from
    the mapping are untouched. mapping=None uses the cyclic shift."""
    _require_true(dataset)
    c = dataset.class_count
    if mapping is None:
        mapping = default_asymmetric_mapping(c)
    items = _validate_mapping(mapping, c, eta)
    table = np.arange(c, dtype=np.int64)
    for src, dst in items.items():
        table[src] = dst

    true = dataset.true_labels.astype(np.int64)
    flip = stream_uniforms(seed, dataset.sample_ids, _S_FLIP) < eta
    noisy = np.where(flip, table[true], true).astype(np.int32)
    return dataset.with_labels(noisy)


def _truncated_rates(eta, seed, sample_ids):
    # inverse-CDF sampling of N(eta, (eta/4)^2) truncated to [0, 1)
    sigma = eta / 4.0
    lo = ndtr((0.0 - eta) / sigma)
    hi = ndtr((1.0 - eta) / sigma)
    u = stream_uniforms(seed, sample_ids, _S_RATE)
    q = eta + sigma * ndtri(lo + u * (hi - lo))
    return np.clip(q, 0.0, np.nextafter(1.0, 0.0))


def class_centroids(dataset):
    """Per-class feature means computed from true labels (float64, C x d)."""
    _require_true(dataset)
    feats = dataset.features.astype(np.float64)
    c = dataset.class_count
    cents = np.zeros((c, dataset.dim))
    counts = np.bincount(dataset.true_labels, minlength=c).astype(np.float64)
    np.add.at(cents, dataset.true_labels, feats)
    counts[counts == 0] = 1.0
    return cents / counts[:, None]


def inject_instance_dependent(dataset, eta, seed):
    """Feature-dependent flips: per-sample rate around eta; the flipped label
    is the class of the nearest foreign centroid."""
    _require_true(dataset)
    if eta == 0.0:
        return dataset.with_labels(dataset.true_labels)
    q = _truncated_rates(eta, seed, dataset.sample_ids)
    flip = stream_uniforms(seed, dataset.sample_ids, _S_FLIP) < q

    cents = class_centroids(dataset)
    feats = dataset.features.astype(np.float64)
    d2 = ((feats ** 2).sum(1)[:, None] - 2.0 * feats @ cents.T
          + (cents ** 2).sum(1)[None, :])
    true = dataset.true_labels.astype(np.int64)
    d2[np.arange(dataset.n), true] = np.inf
    target = d2.argmin(axis=1)
    noisy = np.where(flip, target, true).astype(np.int32)
    return dataset.with_labels(noisy)


def inject_openset(dataset, ood_pool, rho, omega, seed):
    """Combined closed/open-set corruption.

    floor(rho*omega*N) samples get symmetric flips; a disjoint
    floor(rho*(1-omega)*N) samples have their features replaced by pool rows
    and get a uniformly random in-distribution label, with true label set to
    the sentinel class_count.
    """
    _require_true(dataset)
    if ood_pool.dim != dataset.dim:
        raise DimensionMismatch(
            f"ood pool dim {ood_pool.dim} != dataset dim {dataset.dim}")
    n = dataset.n
    n_closed = int(np.floor(rho * omega * n))
    n_open = int(np.floor(rho * (1.0 - omega) * n))
    if n_open > ood_pool.n:
        raise InsufficientOodPool(f"need {n_open} pool rows, pool has {ood_pool.n}")

    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 77_2000]))
    perm = rng.permutation(n)
    closed_idx = np.sort(perm[:n_closed])
    open_idx = np.sort(perm[n_closed:n_closed + n_open])

    c = dataset.class_count
    true = dataset.true_labels.astype(np.int64)
    noisy = true.copy()

    offs = stream_integers(seed, dataset.sample_ids[closed_idx], _S_TARGET, c - 1)
    noisy[closed_idx] = (true[closed_idx] + 1 + offs) % c

    feats = dataset.features.copy()
    new_true = true.copy()
    if n_open:
        pool_rows = rng.permutation(ood_pool.n)[:n_open]
        feats[open_idx] = ood_pool.features[pool_rows]
        noisy[open_idx] = stream_integers(seed, dataset.sample_ids[open_idx],
                                          _S_OPEN_LABEL, c)
        new_true[open_idx] = c  # out-of-distribution sentinel

    return Dataset(feats, noisy.astype(np.int32), c, new_true.astype(np.int32),
                   dataset.sample_ids)


def inject(dataset, spec, ood_pool=None):
    """Apply a NoiseSpec to a clean dataset."""
    if spec.kind == "symmetric":
        return inject_symmetric(dataset, spec.eta, spec.seed)
    if spec.kind == "asymmetric":
        return inject_asymmetric(dataset, spec.eta, spec.mapping, spec.seed)
    if spec.kind == "instance_dependent":
        return inject_instance_dependent(dataset, spec.eta, spec.seed)
    if ood_pool is None:
        raise InvalidSpec("openset_combined injection needs an ood_pool")
    return inject_openset(dataset, ood_pool, spec.rho, spec.omega, spec.seed)
