"""Univariate ANOVA F scores and top-k column selection."""

from __future__ import annotations

import logging
import math
from typing import Sequence, Union

import numpy as np

log = logging.getLogger(__name__)

ALL = "ALL"
K = Union[int, str]

# k grid for sets that extend the baseline, and for selection on the baseline itself
EXTENDING_K_GRID: tuple[K, ...] = (3, 5, 7, 9, 11, 13, 15, 20, 25, 30, ALL)
ORIGINAL_K_GRID: tuple[K, ...] = (20, 25, 30, 35, 40, 45, 50, 55, 60, 65, 70, 75, 80, 85, 90, 95, 100,
                                  150, 200, 250, 300, 350)


def anova_f(values: Sequence[float], labels: Sequence[int]) -> float:
    """One-way ANOVA F of ``values`` grouped by ``labels``.

    A zero within-group sum of squares gives ``inf`` when the groups differ
    and 0 when they do not.
    """
    x = np.asarray(values, dtype=float)
    g = np.asarray(labels)
    classes = np.unique(g)
    if len(classes) < 2:
        raise ValueError("anova_f needs at least two non-empty classes")
    return float(anova_f_columns(x[:, None], g)[0])


def anova_f_columns(X: np.ndarray, labels: Sequence[int]) -> np.ndarray:
    """F score of every column of ``X`` (rows grouped by ``labels``)."""
    X = np.asarray(X, dtype=float)
    g = np.asarray(labels)
    classes = np.unique(g)
    if len(classes) < 2:
        raise ValueError("anova_f needs at least two non-empty classes")
    n, k = len(g), len(classes)
    grand = X.mean(axis=0)
    ssb = np.zeros(X.shape[1])
    ssw = np.zeros(X.shape[1])
    for c in classes:
        rows = X[g == c]
        mean = rows.mean(axis=0)
        ssb += len(rows) * (mean - grand) ** 2
        ssw += ((rows - mean) ** 2).sum(axis=0)
    df_b, df_w = k - 1, n - k
    out = np.zeros(X.shape[1])
    pos_w = ssw > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        out[pos_w] = (ssb[pos_w] / df_b) / (ssw[pos_w] / df_w) if df_w > 0 else np.inf
    out[~pos_w & (ssb > 0)] = math.inf
    return out


def resolve_k(k: K, available: int, warn: bool = True) -> int:
    """Number of columns a k setting yields; oversize requests clamp with a warning."""
    if k == ALL:
        return available
    k = int(k)
    if k < 1:
        raise ValueError("k must be positive")
    if k > available:
        if warn:
            log.warning("k=%d exceeds the %d available columns; using all of them", k, available)
        return available
    return k


def rank_columns(scores: Sequence[float], names: Sequence[str]) -> list[int]:
    """Column indices by descending score, ties by column name."""
    return sorted(range(len(names)), key=lambda i: (-scores[i], names[i]))


def select_top_k(scores: Sequence[float], names: Sequence[str], k: K) -> list[str]:
    order = rank_columns(scores, names)
    return [names[i] for i in order[: resolve_k(k, len(names))]]
