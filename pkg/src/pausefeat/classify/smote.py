"""Synthetic minority oversampling by interpolation between nearest neighbours."""

from __future__ import annotations

import numpy as np


def smote(minority: np.ndarray, n_new: int, k_neighbors: int = 5, seed: int = 0) -> np.ndarray:
    """``n_new`` rows, each ``x + u (nn - x)`` for a random minority row ``x``,
    one of its ``k`` nearest minority neighbours ``nn`` and ``u ~ U(0, 1)``."""
    minority = np.asarray(minority, dtype=float)
    m = len(minority)
    if m < 2:
        raise ValueError("SMOTE needs at least two minority rows")
    if n_new <= 0:
        return np.zeros((0, minority.shape[1]))
    k = min(k_neighbors, m - 1)
    sq = (minority * minority).sum(axis=1)
    dist = sq[:, None] + sq[None, :] - 2.0 * minority @ minority.T
    np.fill_diagonal(dist, np.inf)
    neighbours = np.argsort(dist, axis=1, kind="stable")[:, :k]
    rng = np.random.default_rng(seed)
    base = rng.integers(0, m, n_new)
    pick = neighbours[base, rng.integers(0, k, n_new)]
    u = rng.random(n_new)[:, None]
    return minority[base] + u * (minority[pick] - minority[base])


def oversample(X: np.ndarray, y: np.ndarray, k_neighbors: int = 5, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Append SMOTE rows to the smaller class until both classes are equal in size."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) < 2 or counts[0] == counts[1]:
        return X, y
    minority = classes[np.argmin(counts)]
    extra = smote(X[y == minority], int(counts.max() - counts.min()), k_neighbors, seed)
    return np.vstack([X, extra]), np.concatenate([y, np.full(len(extra), minority, dtype=y.dtype)])
