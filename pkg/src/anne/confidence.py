"""Confidence splitting via a threshold grid search.

The training set is split on maximum prediction probability at the threshold
tau maximizing

    [n_H (mu_H - mu)^2 + n_L (mu_L - mu)^2] / [n_H var_H + n_L var_L]

over the grid {0.000, 0.001, ..., 1.000}, where H is {score >= tau} and
L is {score < tau}. Grid points leaving either side empty are skipped. A
perfect split (both sides constant, so the denominator is exactly zero while
the numerator is positive) scores +inf. Ties break toward the smaller tau.
The low side is further divided at its mean score into LCS1 (above) and
LCS2 (below).
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateScores

GRID_STEP = 0.001
_GRID = np.arange(1001, dtype=np.float64) / 1000.0


def _objective_curve(scores):
    """Objective value at every grid point; -inf marks skipped points."""
    s = np.sort(np.asarray(scores, dtype=np.float64))
    n = s.size
    mu = s.mean()
    centered = s - mu
    p1 = np.concatenate(([0.0], np.cumsum(centered)))
    p2 = np.concatenate(([0.0], np.cumsum(centered ** 2)))

    n_lo = np.searchsorted(s, _GRID, side="left").astype(np.int64)
    valid = (n_lo >= 1) & (n_lo <= n - 1)
    n_lo_c = np.clip(n_lo, 1, n - 1)
    n_hi = n - n_lo_c

    s1_lo = p1[n_lo_c]
    s2_lo = p2[n_lo_c]
    s1_hi = p1[n] - s1_lo
    s2_hi = p2[n] - s2_lo

    # var * count, with exact zero when a side is constant
    ss_lo = np.maximum(s2_lo - s1_lo ** 2 / n_lo_c, 0.0)
    ss_hi = np.maximum(s2_hi - s1_hi ** 2 / n_hi, 0.0)
    ss_lo[s[n_lo_c - 1] == s[0]] = 0.0
    ss_hi[s[n_lo_c] == s[-1]] = 0.0

    num = s1_lo ** 2 / n_lo_c + s1_hi ** 2 / n_hi
    den = ss_lo + ss_hi

    with np.errstate(divide="ignore", invalid="ignore"):
        obj = num / den
    obj[den == 0.0] = np.inf
    obj[(den == 0.0) & (num == 0.0)] = -np.inf
    obj[~valid] = -np.inf
    return obj


def _best_threshold(scores):
    s = np.asarray(scores, dtype=np.float64)
    if s.size < 2:
        raise DegenerateScores("need at least 2 scores")
    if s.min() < 0.0 or s.max() > 1.0:
        raise ValueError("scores must lie in [0, 1]")
    obj = _objective_curve(s)
    best = int(obj.argmax())
    if obj[best] == -np.inf:
        raise DegenerateScores("no grid threshold separates the scores")
    return float(_GRID[best]), float(obj[best])


def otsu_threshold(scores):
    """Best split threshold for `scores` (values in [0, 1]).

    Raises DegenerateScores when no grid point yields two nonempty sides
    (e.g. all scores equal).
    """
    return _best_threshold(scores)[0]


@dataclass(frozen=True)
class ConfidencePartition:
    """Index partition from the confidence split.

    hcs holds scores >= tau; lcs1 holds mu_lcs <= score < tau; lcs2 holds
    scores below mu_lcs. Index arrays are sorted ascending.
    """

    tau: float
    hcs: np.ndarray
    lcs1: np.ndarray
    lcs2: np.ndarray
    mu_hcs: float
    sigma_hcs: float
    mu_lcs: float
    sigma_lcs: float
    mu_all: float
    objective_value: float

    @property
    def lcs(self):
        return np.sort(np.concatenate([self.lcs1, self.lcs2]))

    def summary(self):
        return {
            "tau": self.tau,
            "n_hcs": int(self.hcs.size),
            "n_lcs1": int(self.lcs1.size),
            "n_lcs2": int(self.lcs2.size),
            "mu_hcs": self.mu_hcs,
            "sigma_hcs": self.sigma_hcs,
            "mu_lcs": self.mu_lcs,
            "sigma_lcs": self.sigma_lcs,
            "mu_all": self.mu_all,
            "objective_value": self.objective_value,
        }


def split_confidence(preds):
    """Partition sample indices of `preds` by maximum class probability."""
    scores = preds.max_scores()
    tau, obj = _best_threshold(scores)

    idx = np.arange(scores.size)
    high = scores >= tau
    hcs = idx[high]
    lcs_scores = scores[~high]
    mu_lcs = float(lcs_scores.mean())
    low_idx = idx[~high]
    in_lcs1 = lcs_scores >= mu_lcs
    return ConfidencePartition(
        tau=float(tau),
        hcs=hcs,
        lcs1=low_idx[in_lcs1],
        lcs2=low_idx[~in_lcs1],
        mu_hcs=float(scores[high].mean()),
        sigma_hcs=float(scores[high].std()),
        mu_lcs=mu_lcs,
        sigma_lcs=float(lcs_scores.std()),
        mu_all=float(scores.mean()),
        objective_value=float(obj),
    )
