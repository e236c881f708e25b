"""CART trees, a random forest and gradient boosting for two classes.

Trees are stored as flat arrays (``feature``, ``threshold``, ``left``,
``right``, ``value``); ``feature == -1`` marks a leaf.  A sample goes left
when ``x[feature] <= threshold``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit


@dataclass(frozen=True)
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def apply(self, X: np.ndarray) -> np.ndarray:
        return _apply(np.ascontiguousarray(X, dtype=np.float64), self.feature, self.threshold, self.left, self.right)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]


@njit(cache=True)
def _apply(X, feature, threshold, left, right):
    out = np.empty(X.shape[0], dtype=np.int64)
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


@njit(cache=True)
def _midpoint(a, b):
    t = 0.5 * (a + b)
    if t >= b:  # rounding collapsed the gap
        t = a
    return t


@njit(cache=True)
def _sort_pairs(vals, idx, m, tmp_v, tmp_i):
    """Stable in-place sort of ``vals[:m]`` carrying ``idx`` along."""
    if m <= 24:
        for a in range(1, m):
            v, j = vals[a], idx[a]
            b = a - 1
            while b >= 0 and vals[b] > v:
                vals[b + 1] = vals[b]
                idx[b + 1] = idx[b]
                b -= 1
            vals[b + 1] = v
            idx[b + 1] = j
        return
    order = np.argsort(vals[:m], kind="mergesort")
    for q in range(m):
        tmp_v[q] = vals[order[q]]
        tmp_i[q] = idx[order[q]]
    for q in range(m):
        vals[q] = tmp_v[q]
        idx[q] = tmp_i[q]


@njit(cache=True)
def _build_gini_tree(XT, y, rows, max_features, seed):
    """Fully grown Gini tree on ``rows`` (duplicates allowed, as in a bootstrap).

    ``XT`` is the transposed design matrix.  Duplicate rows are folded into
    integer weights so each distinct row is sorted once per node.
    """
    np.random.seed(seed)
    d, n_all = XT.shape
    weight = np.zeros(n_all, dtype=np.int64)
    for r in rows:
        weight[r] += 1
    n = 0
    for r in range(n_all):
        if weight[r] > 0:
            n += 1
    idx = np.empty(n, dtype=np.int64)
    q = 0
    for r in range(n_all):
        if weight[r] > 0:
            idx[q] = r
            q += 1
    n_total = len(rows)
    inv = np.zeros(n_total + 1)
    for c in range(1, n_total + 1):
        inv[c] = 1.0 / c
    cap = 2 * n + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    stack = np.empty((cap, 3), dtype=np.int64)  # node, start, end
    stack[0, 0], stack[0, 1], stack[0, 2] = 0, 0, n
    top = 1
    n_nodes = 1
    perm = np.arange(d)
    vals = np.empty(n)
    ord_ = np.empty(n, dtype=np.int64)
    tmp_v = np.empty(n)
    tmp_i = np.empty(n, dtype=np.int64)
    while top > 0:
        top -= 1
        node, start, end = stack[top, 0], stack[top, 1], stack[top, 2]
        m = end - start
        pos = 0
        tot = 0
        for k in range(start, end):
            pos += y[idx[k]] * weight[idx[k]]
            tot += weight[idx[k]]
        value[node] = pos / tot
        if m < 2 or pos == 0 or pos == tot:
            continue
        best_score = np.inf
        best_f = -1
        best_t = 0.0
        visited = 0
        for k in range(d):
            r = k + np.random.randint(0, d - k)
            perm[k], perm[r] = perm[r], perm[k]
            f = perm[k]
            row = XT[f]
            for q in range(m):
                ord_[q] = idx[start + q]
                vals[q] = row[ord_[q]]
            _sort_pairs(vals, ord_, m, tmp_v, tmp_i)
            posL = 0
            nL = 0
            for q in range(m - 1):
                w = weight[ord_[q]]
                posL += y[ord_[q]] * w
                nL += w
                a = vals[q]
                b = vals[q + 1]
                if a < b:
                    nR = tot - nL
                    posR = pos - posL
                    score = posL * (nL - posL) * inv[nL] + posR * (nR - posR) * inv[nR]
                    if score < best_score:
                        best_score = score
                        best_f = f
                        best_t = _midpoint(a, b)
            visited += 1
            if visited >= max_features and best_f >= 0:
                break
        if best_f < 0:
            continue
        lo, hi = start, end - 1
        while lo <= hi:
            if XT[best_f, idx[lo]] <= best_t:
                lo += 1
            else:
                idx[lo], idx[hi] = idx[hi], idx[lo]
                hi -= 1
        feature[node] = best_f
        threshold[node] = best_t
        left[node] = n_nodes
        right[node] = n_nodes + 1
        stack[top, 0], stack[top, 1], stack[top, 2] = n_nodes, start, lo
        top += 1
        stack[top, 0], stack[top, 1], stack[top, 2] = n_nodes + 1, lo, end
        top += 1
        n_nodes += 2
    return feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes], value[:n_nodes]


@njit(cache=True)
def _build_regression_tree(X, order, sorted_vals, target, max_depth):
    """Depth-limited least-squares tree grown level by level over presorted columns.

    ``order[f]`` lists the rows sorted by column ``f`` and ``sorted_vals[f]``
    the matching values.  Returns the tree
    arrays and the leaf reached by every training row.
    """
    n, d = X.shape
    cap = 2 ** (max_depth + 1)
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    node_of = np.zeros(n, dtype=np.int64)
    inv = np.zeros(n + 1)
    for c in range(1, n + 1):
        inv[c] = 1.0 / c
    n_nodes = 1
    level_lo, level_hi = 0, 1
    s_tot = np.zeros(cap)
    ss_tot = np.zeros(cap)
    c_tot = np.zeros(cap)
    for depth in range(max_depth + 1):
        s_tot[:] = 0.0
        ss_tot[:] = 0.0
        c_tot[:] = 0.0
        for i in range(n):
            nd = node_of[i]
            s_tot[nd] += target[i]
            ss_tot[nd] += target[i] * target[i]
            c_tot[nd] += 1.0
        active = np.zeros(cap, dtype=np.bool_)
        for nd in range(level_lo, level_hi):
            if c_tot[nd] > 0:
                value[nd] = s_tot[nd] / c_tot[nd]
            if depth < max_depth and c_tot[nd] >= 2:
                var = ss_tot[nd] / c_tot[nd] - value[nd] * value[nd]
                if var > 1e-14 * (1.0 + value[nd] * value[nd]):
                    active[nd] = True
        if depth == max_depth:
            break
        best = np.full(cap, -np.inf)
        best_f = np.full(cap, -1, dtype=np.int64)
        best_t = np.zeros(cap)
        sL = np.zeros(cap)
        cL = np.zeros(cap, dtype=np.int64)
        c_int = np.zeros(cap, dtype=np.int64)
        for nd in range(level_lo, level_hi):
            c_int[nd] = int(c_tot[nd])
        prev = np.zeros(cap)
        for f in range(d):
            for nd in range(level_lo, level_hi):
                sL[nd] = 0.0
                cL[nd] = 0
            for k in range(n):
                i = order[f, k]
                nd = node_of[i]
                if not active[nd]:
                    continue
                v = sorted_vals[f, k]
                c = cL[nd]
                if c > 0 and v > prev[nd]:
                    a = sL[nd]
                    b = s_tot[nd] - a
                    proxy = a * a * inv[c] + b * b * inv[c_int[nd] - c]
                    if proxy > best[nd]:
                        best[nd] = proxy
                        best_f[nd] = f
                        best_t[nd] = _midpoint(prev[nd], v)
                sL[nd] += target[i]
                cL[nd] = c + 1
                prev[nd] = v
        next_lo = n_nodes
        for nd in range(level_lo, level_hi):
            if active[nd] and best_f[nd] >= 0:
                feature[nd] = best_f[nd]
                threshold[nd] = best_t[nd]
                left[nd] = n_nodes
                right[nd] = n_nodes + 1
                n_nodes += 2
        for i in range(n):
            nd = node_of[i]
            if feature[nd] >= 0:
                node_of[i] = left[nd] if X[i, feature[nd]] <= threshold[nd] else right[nd]
        level_lo, level_hi = next_lo, n_nodes
        if level_lo == level_hi:
            break
    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes], value[:n_nodes], node_of)


def _check_xy(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.int64)
    if X.ndim != 2 or len(X) != len(y) or len(y) == 0:
        raise ValueError("X must be 2-D with one row per label")
    if len(np.unique(y)) < 2:
        raise ValueError("training data holds a single class")
    if not np.isfinite(X).all():
        raise ValueError("X contains missing or non-finite values")
    return X, y


def gini_tree(X: np.ndarray, y: np.ndarray, rows: np.ndarray | None = None, max_features: int | None = None,
              seed: int = 0) -> Tree:
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.int64)
    rows = np.arange(len(y), dtype=np.int64) if rows is None else np.ascontiguousarray(rows, dtype=np.int64)
    mf = X.shape[1] if max_features is None else max_features
    return Tree(*_build_gini_tree(np.ascontiguousarray(X.T), y, rows, mf, seed))


class RandomForest:
    """Bootstrap forest of fully grown Gini trees, ``sqrt(d)`` candidate columns per split."""

    def __init__(self, n_estimators: int = 100, seed: int = 0):
        self.n_estimators = n_estimators
        self.seed = seed
        self.trees: list[Tree] = []

    def fit(self, X: np.ndarray, y: np.ndarray) -> "RandomForest":
        X, y = _check_xy(X, y)
        rng = np.random.default_rng(self.seed)
        n, d = X.shape
        mf = max(1, int(math.sqrt(d)))
        XT = np.ascontiguousarray(X.T)
        self.trees = []
        for _ in range(self.n_estimators):
            rows = rng.integers(0, n, n)
            self.trees.append(Tree(*_build_gini_tree(XT, y, rows, mf, int(rng.integers(2**31 - 1)))))
        return self

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        return np.mean([t.predict(X) for t in self.trees], axis=0)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return (self.predict_proba(X) > 0.5).astype(np.int64)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


class GradientBoosting:
    """Logistic-loss boosting with depth-limited regression trees and Newton leaf values."""

    def __init__(self, n_estimators: int = 150, learning_rate: float = 0.1, max_depth: int = 3):
        self.n_estimators = n_estimators
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.trees: list[Tree] = []
        self.init_score = 0.0

    def fit(self, X: np.ndarray, y: np.ndarray) -> "GradientBoosting":
        X, y = _check_xy(X, y)
        order = np.ascontiguousarray(np.argsort(X, axis=0, kind="mergesort").T)
        sorted_vals = np.ascontiguousarray(np.take_along_axis(X.T, order, axis=1))
        p0 = float(np.mean(y))
        self.init_score = math.log(p0 / (1.0 - p0))
        F = np.full(len(y), self.init_score)
        self.trees = []
        for _ in range(self.n_estimators):
            p = _sigmoid(F)
            resid = y - p
            feature, threshold, left, right, value, leaf_of = _build_regression_tree(X, order, sorted_vals, resid, self.max_depth)
            num = np.bincount(leaf_of, weights=resid, minlength=len(value))
            den = np.bincount(leaf_of, weights=p * (1.0 - p), minlength=len(value))
            gamma = np.where(np.abs(den) < 1e-150, 0.0, num / np.where(den == 0, 1.0, den))
            tree = Tree(feature, threshold, left, right, gamma)
            F += self.learning_rate * gamma[leaf_of]
            self.trees.append(tree)
        return self

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        F = np.full(len(X), self.init_score)
        for t in self.trees:
            F += self.learning_rate * t.predict(X)
        return F

    def predict(self, X: np.ndarray) -> np.ndarray:
        return (self.decision_function(X) > 0).astype(np.int64)
