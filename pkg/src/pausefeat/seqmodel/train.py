"""SGD training with momentum, L2 and a cosine-annealed learning rate."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .model import ModelConfig, SeqBatch, SeqModel


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 600
    lr: float = 0.01
    momentum: float = 0.9
    l2: float = 1e-4
    batch_size: int = 20
    eta_min: float = 0.0
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def cosine_lr(epoch: int, total: int, base: float, eta_min: float = 0.0) -> float:
    """Single-cycle cosine annealing: ``base`` at epoch 0, ``eta_min`` at ``total``."""
    return eta_min + 0.5 * (base - eta_min) * (1.0 + math.cos(math.pi * epoch / total))


@dataclass
class SeqData:
    """Padded, already-normalised sequences with labels (0 = HC, 1 = CI)."""

    numeric: np.ndarray  # (N, Tmax, numeric_dim)
    pos: np.ndarray  # (N, Tmax)
    lengths: np.ndarray  # (N,)
    labels: np.ndarray  # (N,)

    def __len__(self) -> int:
        return len(self.labels)

    def batch(self, idx: np.ndarray) -> SeqBatch:
        T = int(self.lengths[idx].max())
        return SeqBatch(self.numeric[idx, :T], self.pos[idx, :T], self.lengths[idx])

    def subset(self, idx: np.ndarray) -> "SeqData":
        idx = np.asarray(idx)
        T = int(self.lengths[idx].max()) if len(idx) else 0
        return SeqData(self.numeric[idx, :T], self.pos[idx, :T], self.lengths[idx], self.labels[idx])


@dataclass
class TrainedSeqModel:
    model: SeqModel
    losses: list[float]
    config: TrainConfig


def sgd_step(theta: np.ndarray, velocity: np.ndarray, grad: np.ndarray, lr: float, momentum: float) -> None:
    """In-place momentum step; ``grad`` already includes the L2 term."""
    velocity *= momentum
    velocity += grad
    theta -= lr * velocity


def train(model: SeqModel, data: SeqData, config: TrainConfig = TrainConfig()) -> TrainedSeqModel:
    """Train ``model`` in place and return it with the per-epoch mean loss."""
    if len(data) == 0:
        raise TrainingError("no training data")
    rng = np.random.default_rng(config.seed)
    velocity = np.zeros_like(model.theta)
    losses = []
    n = len(data)
    for epoch in range(config.epochs):
        lr = cosine_lr(epoch, config.epochs, config.lr, config.eta_min)
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            loss, grad = model.loss_and_grad(data.batch(idx), data.labels[idx], config.l2, train=True, rng=rng)
            if not np.isfinite(grad).all() or not math.isfinite(loss):
                bad = [name for name, _ in model.layout if not np.isfinite(model.params[name]).all()]
                raise TrainingError(f"non-finite loss/gradient at epoch {epoch}, batch {start // config.batch_size}; "
                                    f"loss={loss}, non-finite params: {bad or 'none'}")
            sgd_step(model.theta, velocity, grad, lr, config.momentum)
            total += loss * len(idx)
        losses.append(total / n)
    return TrainedSeqModel(model, losses, config)


def predict(model: SeqModel, data: SeqData, batch_size: int = 256) -> np.ndarray:
    out = np.empty(len(data), dtype=np.int64)
    for start in range(0, len(data), batch_size):
        idx = np.arange(start, min(start + batch_size, len(data)))
        out[idx] = model.predict_scores(data.batch(idx)).argmax(axis=1)
    return out


def fit(config: ModelConfig, data: SeqData, train_config: TrainConfig = TrainConfig(),
        init_seed: Optional[int] = None) -> TrainedSeqModel:
    model = SeqModel(config, seed=train_config.seed if init_seed is None else init_seed)
    return train(model, data, train_config)
