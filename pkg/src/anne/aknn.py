"""Adaptive K-nearest-neighbor clean/noisy classification.

Each sample's neighborhood is the set of pool members with cosine similarity
strictly above a per-sample threshold omega_i. omega_i starts high and steps
down a fixed grid

    omega_init, omega_init - delta_s, omega_init - 2*delta_s, ...

until the neighborhood reaches the sample's minimum size
min(k_min, |pool| - 1); samples already dense enough at omega_init never
descend. If the grid passes omega_floor without satisfying the bound, the
search gives up at the sentinel value omega_floor - delta_s and the
neighborhood becomes the whole pool minus the sample itself. The sample is
classified clean iff its label matches the majority label of the final
neighborhood (ties: larger summed similarity, then smaller class id).

Because the neighborhood count #{s > omega} is a step function of omega,
the first satisfying grid index can be located directly from the
k-th largest similarity instead of literally iterating; both paths are
implemented against the same grid arithmetic and agree exactly.
"""

from dataclasses import dataclass

import numpy as np

from .dataset import is_normalized
from .errors import (
    EmptyNeighborhood,
    EmptyPool,
    NotNormalized,
    ZeroVector,
)


@dataclass(frozen=True)
class AknnConfig:
    """Neighborhood-search parameters.

    k_min_lcs1/k_min_lcs2 are the minimum neighborhood sizes for the low and
    medium-low confidence groups; k_min_hcs applies when the search runs on
    high-confidence samples (whole-set selector and ablation placements).
    """

    k_min_lcs1: int = 40
    k_min_lcs2: int = 80
    k_min_hcs: int = 5
    omega_init: float = 0.99
    delta_s: float = 0.01
    omega_floor: float = -1.0

    def __post_init__(self):
        if not (0.0 < self.delta_s <= 1.0):
            raise ValueError(f"delta_s={self.delta_s} outside (0, 1]")
        if not (self.omega_floor < self.omega_init <= 1.0):
            raise ValueError("need omega_floor < omega_init <= 1")
        for name in ("k_min_lcs1", "k_min_lcs2", "k_min_hcs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    def omega_at(self, m):
        """m-th grid value omega_init - m*delta_s."""
        return self.omega_init - m * self.delta_s

    @property
    def max_steps(self):
        """Largest valid grid index (omega still >= omega_floor)."""
        return int(np.floor((self.omega_init - self.omega_floor) / self.delta_s + 1e-9))

    @property
    def omega_sentinel(self):
        """Value recorded when the search exhausts the grid."""
        return self.omega_floor - self.delta_s


@dataclass(frozen=True)
class NeighborDiagnostics:
    """Per-sample search outcome, aligned with `indices`."""

    indices: np.ndarray
    k: np.ndarray
    omega: np.ndarray
    predicted: np.ndarray
    agree: np.ndarray

    def mean_k(self):
        return float(self.k.mean()) if self.k.size else float("nan")


def cosine_similarity(u, v):
    """Cosine of the angle between u and v, clamped to [-1, 1]."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ZeroVector("cosine similarity undefined for a zero vector")
    return float(np.clip(u @ v / (nu * nv), -1.0, 1.0))


class SimilarityAccessor:
    """Lazy row-cached cosine similarities over unit-norm features.

    Rows are (n,) float64 similarity vectors computed on first access and
    cached; release() drops a row once a caller is done with it. Safe for
    concurrent reads when rows are pre-populated; population is
    single-writer.
    """

    def __init__(self, features):
        feats = np.asarray(features, dtype=np.float64)
        if not is_normalized(feats):
            raise NotNormalized("similarity accessor needs unit-norm features")
        self._feats = feats
        self._rows = {}

    @property
    def n(self):
        return self._feats.shape[0]

    def row(self, i):
        got = self._rows.get(i)
        if got is None:
            got = np.clip(self._feats @ self._feats[i], -1.0, 1.0)
            self._rows[i] = got
        return got

    def release(self, i):
        self._rows.pop(i, None)

    def pair(self, i, j):
        return float(np.clip(self._feats[i] @ self._feats[j], -1.0, 1.0))


def _first_satisfying_step(t_k, config):
    """Smallest grid index m with omega_at(m) < t_k, where t_k is the
    k-th largest similarity; the neighborhood bound holds exactly there."""
    if t_k > config.omega_init:
        return 0
    m = int(np.floor((config.omega_init - t_k) / config.delta_s)) + 1
    while m > 0 and config.omega_at(m - 1) < t_k:
        m -= 1
    while config.omega_at(m) >= t_k:
        m += 1
    return m


def _descend(sims_to_others, k_min, config):
    """Run the threshold descent on one row of similarities (self excluded).

    Returns (k, neighbor_mask, omega_final).
    """
    pool_others = sims_to_others.size
    if pool_others == 0:
        raise EmptyPool("no candidate neighbors")
    k_eff = min(k_min, pool_others)
    t_k = np.partition(sims_to_others, pool_others - k_eff)[pool_others - k_eff]
    m = _first_satisfying_step(t_k, config)
    if m > config.max_steps:
        omega = config.omega_sentinel
        mask = np.ones(pool_others, dtype=bool)
    else:
        omega = config.omega_at(m)
        mask = sims_to_others > omega
    return int(mask.sum()), mask, float(omega)


def adaptive_neighborhood(i, pool, k_min, config, sims):
    """Adaptive neighborhood of sample `i` within `pool`.

    `sims` is a SimilarityAccessor over the full feature set; `pool` holds
    global sample indices including i. Returns (K_i, neighbor index array,
    final omega).
    """
    pool = np.asarray(pool, dtype=np.int64)
    if pool.size < 2:
        raise EmptyPool("pool must contain at least 2 samples")
    others = pool[pool != i]
    if others.size == pool.size:
        raise ValueError(f"sample {i} not in pool")
    row = sims.row(i)[others]
    k, mask, omega = _descend(row, k_min, config)
    return k, others[mask], omega


def knn_vote(neighbors, labels, sims):
    """Majority class among `neighbors`; ties broken by the larger summed
    similarity, then by the smaller class id.

    `labels` is the full label array; `sims` holds the similarity of each
    neighbor to the query sample, aligned with `neighbors`.
    """
    neighbors = np.asarray(neighbors, dtype=np.int64)
    if neighbors.size == 0:
        raise EmptyNeighborhood("vote over an empty neighbor set")
    labs = np.asarray(labels)[neighbors]
    sims = np.asarray(sims, dtype=np.float64)
    c = int(labs.max()) + 1
    counts = np.bincount(labs, minlength=c)
    weights = np.bincount(labs, weights=sims, minlength=c)
    best = counts.max()
    cand = counts == best
    wbest = weights[cand].max()
    return int(np.nonzero(cand & (weights == wbest))[0][0])


def _vote_block(sim_block, mask, pool_labels, class_count):
    """Vectorized knn_vote for every row of a similarity block."""
    rows, cols = np.nonzero(mask)
    labs = pool_labels[cols]
    flat = rows * class_count + labs
    size = mask.shape[0] * class_count
    counts = np.bincount(flat, minlength=size).reshape(-1, class_count)
    weights = np.bincount(flat, weights=sim_block[rows, cols],
                          minlength=size).reshape(-1, class_count)
    best = counts.max(axis=1)
    cand = counts == best[:, None]
    w = np.where(cand, weights, -np.inf)
    wbest = w.max(axis=1)
    return (cand & (w == wbest[:, None])).argmax(axis=1)


def select_on_pool(features, pool, labels, k_min_per_sample, class_count, config,
                   block_rows=256):
    """Adaptive-KNN clean/noisy split over an arbitrary pool.

    features: (N, d) unit-norm float64; pool: sorted global indices;
    k_min_per_sample: per-pool-member minimum neighborhood size. Returns
    (clean indices, noisy indices, NeighborDiagnostics), all in global index
    space. A singleton pool is classified noisy with K=0.
    """
    pool = np.asarray(pool, dtype=np.int64)
    if pool.size == 0:
        raise EmptyPool("selection requested on an empty pool")
    if pool.size == 1:
        diag = NeighborDiagnostics(pool, np.zeros(1, dtype=np.int64),
                                   np.full(1, config.omega_init),
                                   np.full(1, -1, dtype=np.int64),
                                   np.zeros(1, dtype=bool))
        return pool[:0].copy(), pool.copy(), diag

    feats = np.asarray(features, dtype=np.float64)
    if not is_normalized(feats[pool]):
        raise NotNormalized("adaptive KNN needs unit-norm features")
    pf = feats[pool]
    pool_labels = np.asarray(labels)[pool].astype(np.int64)
    kmins = np.minimum(np.asarray(k_min_per_sample, dtype=np.int64), pool.size - 1)

    L = pool.size
    k_out = np.empty(L, dtype=np.int64)
    omega_out = np.empty(L, dtype=np.float64)
    pred_out = np.empty(L, dtype=np.int64)
    max_steps = config.max_steps

    for start in range(0, L, block_rows):
        stop = min(start + block_rows, L)
        block = np.clip(pf[start:stop] @ pf.T, -1.0, 1.0)
        # remove self-similarity: below every real similarity, so it can
        # never enter a top-k selection or a > omega mask
        block[np.arange(stop - start), np.arange(start, stop)] = -2.0

        bk = kmins[start:stop]
        t_k = np.empty(stop - start)
        for k in np.unique(bk):
            rows = np.nonzero(bk == k)[0]
            part = np.partition(block[rows], L - int(k), axis=1)
            t_k[rows] = part[:, L - int(k)]

        m = np.where(t_k > config.omega_init, 0,
                     np.floor((config.omega_init - t_k) / config.delta_s).astype(np.int64) + 1)
        # settle float rounding at grid boundaries, same rule as _first_satisfying_step
        for _ in range(4):
            down = (m > 0) & (config.omega_at(m - 1) < t_k)
            up = ~down & (config.omega_at(m) >= t_k)
            if not (down.any() or up.any()):
                break
            m = m - down.astype(np.int64) + up.astype(np.int64)

        exhausted = m > max_steps
        omega = np.where(exhausted, config.omega_sentinel, config.omega_at(m))
        mask = block > omega[:, None]
        k_out[start:stop] = mask.sum(axis=1)
        omega_out[start:stop] = omega
        pred_out[start:stop] = _vote_block(block, mask, pool_labels, class_count)

    agree = pred_out == pool_labels
    diag = NeighborDiagnostics(pool, k_out, omega_out, pred_out, agree)
    return pool[agree], pool[~agree], diag


def aknn_select(partition, dataset, config):
    """Clean/noisy split of the low-confidence pool LCS1 | LCS2.

    LCS1 members use k_min_lcs1, LCS2 members k_min_lcs2. Votes use the
    dataset's current (post-relabel) labels.
    """
    lcs1 = np.asarray(partition.lcs1, dtype=np.int64)
    lcs2 = np.asarray(partition.lcs2, dtype=np.int64)
    pool = np.sort(np.concatenate([lcs1, lcs2]))
    if pool.size == 0:
        raise EmptyPool("both low-confidence groups are empty")
    kmins = np.where(np.isin(pool, lcs1), config.k_min_lcs1, config.k_min_lcs2)
    return select_on_pool(dataset.features.astype(np.float64), pool,
                          dataset.noisy_labels, kmins, dataset.class_count, config)
