"""Soft-margin RBF support vector classifier trained with a second-order SMO solver."""

from __future__ import annotations

import numpy as np
from numba import njit

_TAU = 1e-12


@njit(cache=True)
def _smo(K, y, C, eps, max_iter):
    """Dual coordinate ascent on pairs (maximal-violating pair, second-order choice of j).

    Returns the dual coefficients and the offset ``rho``; the decision value is
    ``sum_t alpha_t y_t K(x_t, x) - rho``.
    """
    n = len(y)
    alpha = np.zeros(n)
    G = -np.ones(n)
    for _ in range(max_iter):
        Gmax = -np.inf
        i = -1
        for t in range(n):
            if y[t] > 0:
                if alpha[t] < C and -G[t] >= Gmax:
                    Gmax = -G[t]
                    i = t
            else:
                if alpha[t] > 0 and G[t] >= Gmax:
                    Gmax = G[t]
                    i = t
        if i < 0:
            break
        Gmax2 = -np.inf
        j = -1
        obj_min = np.inf
        for t in range(n):
            Qit = y[i] * y[t] * K[i, t]
            if y[t] > 0:
                if alpha[t] > 0:
                    diff = Gmax + G[t]
                    if G[t] >= Gmax2:
                        Gmax2 = G[t]
                    if diff > 0:
                        quad = K[i, i] + K[t, t] - 2.0 * y[i] * Qit
                        if quad <= 0:
                            quad = _TAU
                        obj = -(diff * diff) / quad
                        if obj <= obj_min:
                            obj_min = obj
                            j = t
            else:
                if alpha[t] < C:
                    diff = Gmax - G[t]
                    if -G[t] >= Gmax2:
                        Gmax2 = -G[t]
                    if diff > 0:
                        quad = K[i, i] + K[t, t] + 2.0 * y[i] * Qit
                        if quad <= 0:
                            quad = _TAU
                        obj = -(diff * diff) / quad
                        if obj <= obj_min:
                            obj_min = obj
                            j = t
        if Gmax + Gmax2 < eps or j < 0:
            break
        Qij = y[i] * y[j] * K[i, j]
        old_i, old_j = alpha[i], alpha[j]
        if y[i] != y[j]:
            quad = K[i, i] + K[j, j] + 2.0 * Qij
            if quad <= 0:
                quad = _TAU
            delta = (-G[i] - G[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = C - diff
            else:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = C + diff
        else:
            quad = K[i, i] + K[j, j] - 2.0 * Qij
            if quad <= 0:
                quad = _TAU
            delta = (G[i] - G[j]) / quad
            total = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if total > C:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = total - C
            else:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = total
            if total > C:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = total - C
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = total
        di, dj = alpha[i] - old_i, alpha[j] - old_j
        for t in range(n):
            G[t] += y[t] * y[i] * K[t, i] * di + y[t] * y[j] * K[t, j] * dj

    ub, lb = np.inf, -np.inf
    n_free, sum_free = 0, 0.0
    for t in range(n):
        yG = y[t] * G[t]
        if alpha[t] >= C:
            if y[t] < 0:
                ub = min(ub, yG)
            else:
                lb = max(lb, yG)
        elif alpha[t] <= 0:
            if y[t] > 0:
                ub = min(ub, yG)
            else:
                lb = max(lb, yG)
        else:
            n_free += 1
            sum_free += yG
    rho = sum_free / n_free if n_free > 0 else 0.5 * (ub + lb)
    return alpha, rho


def rbf_kernel(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    sq = (A * A).sum(axis=1)[:, None] + (B * B).sum(axis=1)[None, :] - 2.0 * A @ B.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


class RBFSVM:
    """Binary SVM, labels 0/1; ``gamma`` defaults to 1 / n_features."""

    def __init__(self, C: float = 1.0, gamma: float | None = None, tol: float = 1e-3, max_iter: int = 1_000_000):
        self.C = C
        self.gamma = gamma
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X: np.ndarray, y: np.ndarray) -> "RBFSVM":
        X = np.ascontiguousarray(X, dtype=np.float64)
        y = np.asarray(y)
        if len(np.unique(y)) < 2:
            raise ValueError("training data holds a single class")
        self.gamma_ = 1.0 / X.shape[1] if self.gamma is None else self.gamma
        ys = np.where(y == 1, 1.0, -1.0)
        K = rbf_kernel(X, X, self.gamma_)
        alpha, rho = _smo(K, ys, float(self.C), self.tol, self.max_iter)
        sv = alpha > 0
        self.support_ = X[sv]
        self.coef_ = (alpha * ys)[sv]
        self.rho_ = rho
        return self

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        if len(self.coef_) == 0:
            return np.full(len(X), -self.rho_)
        return rbf_kernel(X, self.support_, self.gamma_) @ self.coef_ - self.rho_

    def predict(self, X: np.ndarray) -> np.ndarray:
        return (self.decision_function(X) > 0).astype(np.int64)
