"""Training-set resampling: Gaussian-noise augmentation and ADASYN balancing.

Both operate on standardized feature matrices and are meant for the training
side of a split only. Outputs always keep the original rows, unchanged and in
order, as a prefix; a boolean mask marks the generated rows.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import EmptyDataset, InputError, SingleClass, UnscaledData

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AugmentConfig:
    sigma: float = 0.05
    factor: int = 1
    seed: int = 0

    def __post_init__(self):
        if not (self.sigma >= 0 and np.isfinite(self.sigma)):
            raise InputError(f"sigma must be a finite value >= 0, got {self.sigma}")
        if int(self.factor) != self.factor or self.factor < 0:
            raise InputError(f"factor must be a non-negative integer, got {self.factor}")


@dataclass(frozen=True)
class AdasynConfig:
    k_neighbors: int = 5
    beta: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.k_neighbors < 1:
            raise InputError("k_neighbors must be >= 1")
        if not (0 < self.beta <= 1):
            raise InputError("beta must lie in (0, 1]")


def _row_rng(seed, index):
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), int(index)]))


def check_scaled(X):
    """Raise UnscaledData when columns do not look z-scored.

    Zero-variance columns are exempt as long as they are centred.
    """
    X = np.asarray(X, dtype=float)
    mean = X.mean(axis=0)
    sd = X.std(axis=0)
    const = sd == 0
    bad = (np.abs(mean) > 0.5) | (~const & ((sd < 0.5) | (sd > 2.0)))
    if bad.any():
        cols = np.flatnonzero(bad).tolist()
        raise UnscaledData(f"columns {cols} do not look standardized (|mean| > 0.5 or sd outside [0.5, 2])")


def gaussian_augment(X, y, cfg: AugmentConfig, allow_unscaled=False):
    """Append ``cfg.factor`` noisy copies of every row.

    Noise is i.i.d. ``N(0, sigma**2)`` per feature, drawn from a stream
    seeded by ``(cfg.seed, row index)``. Targets are copied unchanged.

    Returns ``(X_out, y_out, synthetic)``; output size is ``(1 + factor) * n``.
    """
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    if n == 0:
        raise EmptyDataset("nothing to augment")
    if not allow_unscaled and n > 1:
        check_scaled(X)
    y = None if y is None else np.asarray(y)
    f = int(cfg.factor)
    copies = np.empty((n, f, p))
    for i in range(n):
        noise = _row_rng(cfg.seed, i).normal(0.0, 1.0, size=(f, p)) * cfg.sigma
        copies[i] = X[i] + noise
    X_out = np.vstack([X, copies.reshape(n * f, p)])
    synthetic = np.r_[np.zeros(n, bool), np.ones(n * f, bool)]
    if y is None:
        return X_out, None, synthetic
    y_out = np.concatenate([y, np.repeat(y, f, axis=0)], axis=0)
    return X_out, y_out, synthetic


def largest_remainder(weights, total):
    """Integer allocation of ``total`` proportional to ``weights`` summing exactly."""
    raw = weights * total
    base = np.floor(raw).astype(int)
    short = int(total - base.sum())
    if short > 0:
        rem = raw - base
        order = np.lexsort((np.arange(len(rem)), -rem))
        base[order[:short]] += 1
    return base


def _knn(A, B, k, exclude_self):
    """Indices of the ``k`` Euclidean nearest rows of ``B`` for each row of ``A``."""
    d = ((A[:, None, :] - B[None, :, :]) ** 2).sum(axis=2)
    if exclude_self:
        np.fill_diagonal(d, np.inf)
    return np.argsort(d, axis=1, kind="stable")[:, :k]


def adasyn_balance(X, y, cfg: AdasynConfig):
    """Oversample the minority class with ADASYN.

    ``G = round((N_maj - N_min) * beta)`` synthetic rows are allocated over
    minority points in proportion to the majority share of their k nearest
    neighbours (largest-remainder rounding). Each synthetic row is
    ``x_i + lam * (x_z - x_i)`` with ``x_z`` a random minority neighbour of
    ``x_i`` and ``lam ~ U[0, 1]``.

    Returns ``(X_out, y_out, synthetic)``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).astype(int)
    n = len(y)
    if n == 0:
        raise EmptyDataset("cannot balance an empty dataset")
    labels, counts = np.unique(y, return_counts=True)
    if len(labels) < 2:
        raise SingleClass("ADASYN needs both classes present")
    if len(labels) > 2:
        raise InputError("ADASYN here supports binary labels only")
    if counts[0] == counts[1]:
        return X.copy(), y.copy(), np.zeros(n, bool)
    minority = labels[np.argmin(counts)]
    n_min, n_maj = counts.min(), counts.max()
    G = int(np.floor((n_maj - n_min) * cfg.beta + 0.5))
    if G == 0:
        return X.copy(), y.copy(), np.zeros(n, bool)

    min_idx = np.flatnonzero(y == minority)
    X_min = X[min_idx]
    k_all = min(cfg.k_neighbors, n - 1)
    nn_all = _knn(X_min, X, k_all + 1, exclude_self=False)
    # drop each point itself from its neighbourhood
    ratios = np.empty(n_min)
    for j, i in enumerate(min_idx):
        neigh = [q for q in nn_all[j] if q != i][:k_all]
        ratios[j] = np.mean(y[neigh] != minority)
    if ratios.sum() > 0:
        weights = ratios / ratios.sum()
    else:
        log.warning("ADASYN: no majority points near the minority class; allocating uniformly")
        weights = np.full(n_min, 1.0 / n_min)
    per_point = largest_remainder(weights, G)

    k_min = max(1, min(cfg.k_neighbors, n_min - 1))
    if n_min > 1:
        nn_min = _knn(X_min, X_min, k_min, exclude_self=True)
    else:
        nn_min = np.zeros((1, 1), dtype=int)
    synth = []
    for j in range(n_min):
        g = per_point[j]
        if g == 0:
            continue
        rng = _row_rng(cfg.seed, j)
        picks = nn_min[j][rng.integers(0, nn_min.shape[1], size=g)]
        lam = rng.random(g)[:, None]
        synth.append(X_min[j] + lam * (X_min[picks] - X_min[j]))
    S = np.vstack(synth)
    X_out = np.vstack([X, S])
    y_out = np.r_[y, np.full(len(S), minority)]
    synthetic = np.r_[np.zeros(n, bool), np.ones(len(S), bool)]
    return X_out, y_out, synthetic
