"""Eigenvector-based clean/noisy classification.

For each class, the dominant eigenvector of the second-moment (Gram) matrix
of its unit-norm member features is computed by power iteration. A member is
kept as clean when the squared inner product between its feature and the
class eigenvector reaches a threshold gamma_e; for unit vectors this
alignment score lies in [0, 1]. Classes with fewer than two members have no
meaningful direction and pass through as clean.
"""

from dataclasses import dataclass

import numpy as np

from .errors import (
    EmptySubset,
    InsufficientSamples,
    NoConvergence,
    NotNormalized,
)

_POWER_TOL = 1e-10
_POWER_MAX_ITER = 10000
_NORM_TOL = 1e-4


@dataclass(frozen=True)
class ClassEigenbasis:
    """Dominant eigenpair per class; `count` is the members used."""

    vectors: dict
    eigenvalues: dict
    counts: dict


def class_dominant_eigenvector(class_features):
    """Top eigenpair (u, lambda) of Sigma = F^T F / m for m x d features F.

    Power iteration starts from the normalized class-mean direction (first
    basis vector when the mean vanishes) and stops when successive iterates
    differ by less than 1e-10; the sign is fixed so the largest-magnitude
    component of u is positive.
    """
    feats = np.asarray(class_features, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[0] < 2:
        raise InsufficientSamples("need at least 2 samples for an eigenvector")
    m, d = feats.shape
    sigma = feats.T @ feats / m

    x = feats.mean(axis=0)
    nx = np.linalg.norm(x)
    if nx < 1e-12:
        x = np.zeros(d)
        x[0] = 1.0
    else:
        x = x / nx

    for _ in range(_POWER_MAX_ITER):
        y = sigma @ x
        ny = np.linalg.norm(y)
        if ny == 0.0:
            # started in the null space; restart off-axis
            x = np.ones(d) / np.sqrt(d)
            continue
        y /= ny
        if np.linalg.norm(y - x) < _POWER_TOL:
            x = y
            break
        x = y
    else:
        raise NoConvergence(
            f"power iteration did not converge in {_POWER_MAX_ITER} steps "
            "(top eigenvalues likely tied)")

    lam = float(x @ sigma @ x)
    residual = float(np.linalg.norm(sigma @ x - lam * x))
    if residual > 1e-6:
        raise NoConvergence(f"eigenpair residual {residual:.2e} above 1e-6")
    j = int(np.abs(x).argmax())
    if x[j] < 0:
        x = -x
    return x, lam


def alignment_score(f, u):
    """Squared inner product of two unit vectors, clamped to [0, 1]."""
    f = np.asarray(f, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    for name, v in (("f", f), ("u", u)):
        if abs(np.linalg.norm(v) - 1.0) > _NORM_TOL:
            raise NotNormalized(f"{name} is not unit-norm")
    return float(np.clip((f @ u) ** 2, 0.0, 1.0))


def class_eigenbasis(features, labels, subset, class_count):
    """Dominant eigenpairs for every class with >= 2 members in `subset`."""
    subset = np.asarray(subset, dtype=np.int64)
    feats = np.asarray(features, dtype=np.float64)
    labs = np.asarray(labels)
    vectors, eigenvalues, counts = {}, {}, {}
    for c in range(class_count):
        members = subset[labs[subset] == c]
        counts[c] = int(members.size)
        if members.size >= 2:
            u, lam = class_dominant_eigenvector(feats[members])
            vectors[c] = u
            eigenvalues[c] = lam
    return ClassEigenbasis(vectors, eigenvalues, counts)


def fine_select(hcs, dataset, gamma_e):
    """Clean/noisy split of `hcs` by alignment with class eigenvectors.

    Returns (clean indices, noisy indices, scores) with `scores` aligned to
    the sorted hcs index array; members of classes too small to score carry
    NaN and are kept clean.
    """
    if not (0.0 <= gamma_e <= 1.0):
        raise ValueError(f"gamma_e={gamma_e} outside [0, 1]")
    hcs = np.sort(np.asarray(hcs, dtype=np.int64))
    if hcs.size == 0:
        raise EmptySubset("high-confidence subset is empty")

    feats = dataset.features.astype(np.float64)
    norms = np.linalg.norm(feats[hcs], axis=1)
    if np.abs(norms - 1.0).max() > _NORM_TOL:
        raise NotNormalized("eigenvector selection needs unit-norm features")

    labs = dataset.noisy_labels
    basis = class_eigenbasis(feats, labs, hcs, dataset.class_count)

    scores = np.full(hcs.size, np.nan)
    clean_mask = np.ones(hcs.size, dtype=bool)
    for c, u in basis.vectors.items():
        pos = np.nonzero(labs[hcs] == c)[0]
        sc = np.clip((feats[hcs[pos]] @ u) ** 2, 0.0, 1.0)
        scores[pos] = sc
        clean_mask[pos] = sc >= gamma_e
    return hcs[clean_mask], hcs[~clean_mask], scores
