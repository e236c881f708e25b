"""Fold assignment, classification metrics and a small task runner."""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence, TypeVar

import numpy as np

METRICS = ("acc", "prec", "sens", "spec")

T = TypeVar("T")
R = TypeVar("R")


@dataclass(frozen=True)
class FoldPlan:
    n_folds: int
    assignment: np.ndarray  # row -> fold index
    stratified: bool
    grouped: bool
    seed: int

    def split(self, fold: int) -> tuple[np.ndarray, np.ndarray]:
        test = np.flatnonzero(self.assignment == fold)
        train = np.flatnonzero(self.assignment != fold)
        return train, test

    def __iter__(self):
        for f in range(self.n_folds):
            yield self.split(f)


def make_folds(
    labels: Sequence[int],
    n_folds: int,
    seed: int = 0,
    groups: Optional[Sequence[str]] = None,
    stratified: bool = True,
) -> FoldPlan:
    """Seeded fold assignment.

    Without groups, each class is shuffled and dealt round-robin, continuing
    the rotation across classes, so every fold holds its class share to
    within one row.  With groups, whole groups are placed (largest first,
    shuffled within equal sizes) on the fold currently holding the fewest
    rows of that group's majority class.
    """
    y = np.asarray(labels)
    n = len(y)
    if n_folds < 2:
        raise ValueError("n_folds must be at least 2")
    if n < n_folds:
        raise ValueError(f"cannot split {n} rows into {n_folds} folds")
    rng = np.random.default_rng(seed)
    assignment = np.full(n, -1, dtype=np.int64)
    strata = np.unique(y) if stratified else np.array([0])
    key = y if stratified else np.zeros(n, dtype=y.dtype if n else int)

    if groups is None:
        offset = 0
        for c in strata:
            idx = np.flatnonzero(key == c)
            idx = idx[rng.permutation(len(idx))]
            assignment[idx] = (offset + np.arange(len(idx))) % n_folds
            offset = (offset + len(idx)) % n_folds
        return FoldPlan(n_folds, assignment, stratified, False, seed)

    g = np.asarray(groups)
    names, inverse = np.unique(g, return_inverse=True)
    if len(names) < n_folds:
        raise ValueError(f"cannot split {len(names)} groups into {n_folds} folds")
    members = [np.flatnonzero(inverse == i) for i in range(len(names))]
    group_class = []
    for m in members:
        vals, counts = np.unique(key[m], return_counts=True)
        group_class.append(vals[np.argmax(counts)])
    load = {c: np.zeros(n_folds, dtype=np.int64) for c in strata}
    total = np.zeros(n_folds, dtype=np.int64)
    for c in strata:
        gids = [i for i in range(len(names)) if group_class[i] == c]
        gids = [gids[j] for j in rng.permutation(len(gids))]
        gids.sort(key=lambda i: -len(members[i]))
        for i in gids:
            fold = min(range(n_folds), key=lambda f: (load[c][f], total[f], f))
            assignment[members[i]] = fold
            load[c][fold] += len(members[i])
            total[fold] += len(members[i])
    return FoldPlan(n_folds, assignment, stratified, True, seed)


def metrics(truth: Sequence[int], pred: Sequence[int]) -> dict[str, float]:
    """Accuracy, precision, sensitivity and specificity with CI (1) as positive.

    Ratios with a zero denominator come back as NaN.
    """
    t = np.asarray(truth).astype(int)
    p = np.asarray(pred).astype(int)
    if len(t) == 0 or len(t) != len(p):
        raise ValueError("truth and predictions must be non-empty and of equal length")
    tp = int(np.sum((t == 1) & (p == 1)))
    tn = int(np.sum((t == 0) & (p == 0)))
    fp = int(np.sum((t == 0) & (p == 1)))
    fn = int(np.sum((t == 1) & (p == 0)))

    def ratio(a: int, b: int) -> float:
        return a / b if b else math.nan

    return {"acc": (tp + tn) / len(t), "prec": ratio(tp, tp + fp), "sens": ratio(tp, tp + fn),
            "spec": ratio(tn, tn + fp)}


def summarize(values: Iterable[float]) -> tuple[float, float]:
    """Mean and population std over the non-missing values."""
    arr = np.array([v for v in values if v is not None and not math.isnan(v)], dtype=float)
    if arr.size == 0:
        return math.nan, math.nan
    return float(arr.mean()), float(arr.std())


def default_workers() -> int:
    return max(1, os.cpu_count() or 1)


def run_tasks(fn: Callable[[T], R], tasks: Sequence[T], workers: int = 1) -> list[R]:
    """Apply ``fn`` to every task, in parallel processes when ``workers > 1``.

    Results come back in task order regardless of completion order.
    """
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
