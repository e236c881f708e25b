"""One-hidden-layer ReLU network with a logistic output, trained by Adam."""

from __future__ import annotations

import numpy as np


class MLP:
    def __init__(
        self,
        hidden: int = 10,
        epochs: int = 200,
        lr: float = 0.01,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        l2: float = 1e-4,
        batch_size: int = 200,
        seed: int = 0,
    ):
        self.hidden = hidden
        self.epochs = epochs
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.l2 = l2
        self.batch_size = batch_size
        self.seed = seed

    def _init(self, d: int, rng: np.random.Generator) -> list[np.ndarray]:
        # Glorot-uniform weights and biases, as in common MLP libraries
        b_in = np.sqrt(6.0 / (d + self.hidden))
        b_out = np.sqrt(6.0 / (self.hidden + 1))
        return [rng.uniform(-b_in, b_in, (d, self.hidden)), rng.uniform(-b_in, b_in, self.hidden),
                rng.uniform(-b_out, b_out, self.hidden), rng.uniform(-b_out, b_out, 1)]

    def fit(self, X: np.ndarray, y: np.ndarray) -> "MLP":
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if len(np.unique(y)) < 2:
            raise ValueError("training data holds a single class")
        rng = np.random.default_rng(self.seed)
        params = self._init(X.shape[1], rng)
        m = [np.zeros_like(p) for p in params]
        v = [np.zeros_like(p) for p in params]
        b1, b2 = self.betas
        step = 0
        n = len(y)
        bs = min(self.batch_size, n)
        for _ in range(self.epochs):
            order = rng.permutation(n)
            for start in range(0, n, bs):
                idx = order[start : start + bs]
                grads = self._grads(params, X[idx], y[idx], len(idx))
                step += 1
                for p, g, mi, vi in zip(params, grads, m, v):
                    mi *= b1
                    mi += (1 - b1) * g
                    vi *= b2
                    vi += (1 - b2) * g * g
                    mhat = mi / (1 - b1**step)
                    vhat = vi / (1 - b2**step)
                    p -= self.lr * mhat / (np.sqrt(vhat) + self.eps)
        self.params_ = params
        return self

    def _grads(self, params, X, y, n):
        W1, b1, w2, b2 = params
        pre = X @ W1 + b1
        h = np.maximum(pre, 0.0)
        z = h @ w2 + b2[0]
        p = 0.5 * (1.0 + np.tanh(0.5 * z))
        dz = (p - y) / n
        gw2 = h.T @ dz + self.l2 * w2 / n
        gb2 = np.array([dz.sum()])
        dh = np.outer(dz, w2) * (pre > 0)
        gW1 = X.T @ dh + self.l2 * W1 / n
        gb1 = dh.sum(axis=0)
        return [gW1, gb1, gw2, gb2]

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        W1, b1, w2, b2 = self.params_
        return np.maximum(np.asarray(X, float) @ W1 + b1, 0.0) @ w2 + b2[0]

    def predict(self, X: np.ndarray) -> np.ndarray:
        return (self.decision_function(X) > 0).astype(np.int64)
