"""Nearest-neighbour matching with replacement across treatment arms.

Each unit is matched to the ``m`` closest units of the opposite arm. Its
missing potential outcome is imputed by the mean of their outcomes, and the
observed one is kept. Distances are computed by brute force over all
opposite-arm units. A stable sort resolves equal distances by ascending unit
index, so results are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .exceptions import DimensionError, InsufficientMatchesError
from .validation import as_float_vector

METRICS = ("euclidean", "manhattan", "canberra")

# rows of the (query x candidate x p) difference tensor processed per block
_BLOCK_ELEMS = 4_000_000


@dataclass(frozen=True)
class MatchConfig:
    m: int = 5
    metric: str = "euclidean"
    standardize: bool = False

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise ValueError(f"m must be a positive integer, got {self.m!r}")
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}, got {self.metric!r}")

    def check(self, d: Dataset):
        smallest = min(d.treated.size, d.control.size)
        if self.m > smallest:
            raise InsufficientMatchesError(
                f"m={self.m} exceeds the smaller arm size {smallest}"
            )


@dataclass(frozen=True, eq=False)
class ImputedOutcomes:
    """Matching output.

    Attributes
    ----------
    y0_hat, y1_hat : ndarray of shape (n,)
        Imputed potential outcomes. The observed arm keeps the unit's own outcome.
    match_sets : ndarray of shape (n, m)
        Row ``i`` lists the indices of unit ``i``'s matches ordered by distance.
    usage_counts : ndarray of shape (n,)
        Number of times each unit serves as a match for another unit.
    """

    y0_hat: np.ndarray
    y1_hat: np.ndarray
    match_sets: np.ndarray
    usage_counts: np.ndarray

    @property
    def m(self):
        return self.match_sets.shape[1]

    @property
    def contrast(self):
        return self.y1_hat - self.y0_hat


def compute_distance(u, v, metric="euclidean"):
    """Distance between two covariate vectors.

    For ``canberra``, coordinates where both entries are zero contribute 0.

    >>> compute_distance((0, 0), (3, 4))
    5.0
    >>> compute_distance((1, 2), (3, 2), "canberra")
    0.5
    """
    u = as_float_vector(u, "u")
    v = as_float_vector(v, "v")
    if u.shape != v.shape:
        raise DimensionError(f"length mismatch: {u.size} vs {v.size}")
    if u.size == 0:
        raise DimensionError("vectors must have at least one coordinate")
    return float(_pairwise(u[None, :], v[None, :], metric)[0, 0])


def _pairwise(q, c, metric):
    """Distance matrix between query rows ``q`` and candidate rows ``c``."""
    diff = np.abs(q[:, None, :] - c[None, :, :])
    if metric == "euclidean":
        return np.sqrt(np.sum(diff * diff, axis=2))
    if metric == "manhattan":
        return np.sum(diff, axis=2)
    if metric == "canberra":
        denom = np.abs(q)[:, None, :] + np.abs(c)[None, :, :]
        with np.errstate(invalid="ignore", divide="ignore"):
            ratio = np.where(denom > 0, diff / denom, 0.0)
        return np.sum(ratio, axis=2)
    raise ValueError(f"unknown metric {metric!r}")


def matching_covariates(d: Dataset, cfg: MatchConfig):
    x = np.asarray(d.x, dtype=float)
    if cfg.standardize:
        sd = x.std(axis=0, ddof=1)
        sd[sd == 0] = 1.0
        x = x / sd
    return x


def _nearest(x, queries, candidates, m, metric):
    """For each query row, the ``m`` nearest candidate indices (stable order)."""
    out = np.empty((queries.size, m), dtype=np.int64)
    if queries.size == 0:
        return out
    cx = x[candidates]
    block = max(1, _BLOCK_ELEMS // max(1, candidates.size * x.shape[1]))
    for start in range(0, queries.size, block):
        q = queries[start:start + block]
        dist = _pairwise(x[q], cx, metric)
        out[start:start + q.size] = candidates[_smallest_stable(dist, m)]
    return out


def _smallest_stable(dist, m):
    """Column positions of the ``m`` smallest entries per row, ties by position."""
    if m >= dist.shape[1]:
        return np.argsort(dist, axis=1, kind="stable")[:, :m]
    part = np.argpartition(dist, m - 1, axis=1)[:, :m]
    kth = np.take_along_axis(dist, part, axis=1).max(axis=1, keepdims=True)
    n_within = np.count_nonzero(dist <= kth, axis=1)
    pos = np.empty((dist.shape[0], m), dtype=np.int64)
    clean = n_within == m
    if clean.any():
        # the partition holds exactly the candidates within the m-th distance
        p = part[clean]
        dv = np.take_along_axis(dist[clean], p, axis=1)
        order = np.lexsort((p, dv), axis=1)
        pos[clean] = np.take_along_axis(p, order, axis=1)
    tied = ~clean
    if tied.any():
        pos[tied] = np.argsort(dist[tied], axis=1, kind="stable")[:, :m]
    return pos


def find_matches(d: Dataset, i: int, cfg: MatchConfig):
    """Indices of the ``cfg.m`` opposite-arm matches of unit ``i``."""
    opposite = np.flatnonzero(d.a != d.a[i])
    if cfg.m > opposite.size:
        raise InsufficientMatchesError(
            f"m={cfg.m} exceeds the opposite-arm size {opposite.size} of unit {i}"
        )
    x = matching_covariates(d, cfg)
    return _nearest(x, np.array([i]), opposite, cfg.m, cfg.metric)[0]


def match_all(d: Dataset, cfg: MatchConfig):
    """Match sets for every unit, shape (n, m)."""
    cfg.check(d)
    x = matching_covariates(d, cfg)
    treated, control = d.treated, d.control
    sets = np.empty((d.n, cfg.m), dtype=np.int64)
    sets[treated] = _nearest(x, treated, control, cfg.m, cfg.metric)
    sets[control] = _nearest(x, control, treated, cfg.m, cfg.metric)
    return sets


def impute_potential_outcomes(d: Dataset, cfg: MatchConfig) -> ImputedOutcomes:
    sets = match_all(d, cfg)
    return imputed_from_matches(d, sets)


def imputed_from_matches(d: Dataset, sets) -> ImputedOutcomes:
    sets = np.asarray(sets, dtype=np.int64)
    matched_mean = d.y[sets].mean(axis=1)
    treated = d.a == 1
    y1_hat = np.where(treated, d.y, matched_mean)
    y0_hat = np.where(treated, matched_mean, d.y)
    usage = np.bincount(sets.ravel(), minlength=d.n)
    return ImputedOutcomes(y0_hat, y1_hat, sets, usage)


def weight_form_total(io: ImputedOutcomes, d: Dataset, m: int | None = None) -> float:
    """Total of (2a - 1) * (1 + K/m) * y, where K counts how often a unit is used as a match.

    Equals ``sum(y1_hat - y0_hat)`` exactly in exact arithmetic.
    """
    m = io.m if m is None else m
    if io.usage_counts.shape[0] != d.n:
        raise DimensionError("imputed outcomes do not match the dataset")
    sign = 2.0 * d.a - 1.0
    return float(np.sum(sign * (1.0 + io.usage_counts / m) * d.y))
