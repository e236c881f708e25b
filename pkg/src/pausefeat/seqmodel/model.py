"""GRU encoder with additive attention and a feed-forward classifier head.

All parameters live in one flat float64 vector; named views expose the
individual tensors.  Gradients are computed by hand (reverse mode) and are
returned in the same flat layout, which keeps the optimiser a three-line
vector update.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..lexicon import N_NUMERIC, TAGS
from .kernels import gru_backward, gru_forward

CHECKPOINT_FORMAT = "pausefeat-seqmodel"
CHECKPOINT_VERSION = 1


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    bidirectional: bool = False
    gru_hidden: int = 12
    ffn_layers: tuple[int, ...] = (10, 5)
    dropout_p: float = 0.0
    pos_embed_dim: int = 5
    input_dim: int = N_NUMERIC + 5
    n_tags: int = len(TAGS)
    n_classes: int = 2

    def __post_init__(self):
        object.__setattr__(self, "ffn_layers", tuple(int(v) for v in self.ffn_layers))
        if not 1 <= len(self.ffn_layers) <= 3:
            raise ModelError("ffn_layers must have 1 to 3 entries")
        if self.dropout_p not in (0.0, 0.5):
            raise ModelError("dropout_p must be 0 or 0.5")
        if self.input_dim <= self.pos_embed_dim:
            raise ModelError("input_dim must exceed pos_embed_dim")

    @property
    def numeric_dim(self) -> int:
        return self.input_dim - self.pos_embed_dim

    @property
    def directions(self) -> int:
        return 2 if self.bidirectional else 1

    @property
    def summary_dim(self) -> int:
        return self.gru_hidden * self.directions

    def describe(self) -> str:
        return (f"bi={self.bidirectional}({self.gru_hidden}) layers={len(self.ffn_layers)}"
                f"{self.ffn_layers} dropout={self.dropout_p}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ffn_layers"] = list(self.ffn_layers)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**{**d, "ffn_layers": tuple(d["ffn_layers"])})


def param_layout(cfg: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    H, D, G = cfg.gru_hidden, cfg.input_dim, cfg.summary_dim
    layout: list[tuple[str, tuple[int, ...]]] = [("emb", (cfg.n_tags, cfg.pos_embed_dim))]
    for d in ("f", "b")[: cfg.directions]:
        layout += [(f"gru_{d}.W_ih", (3 * H, D)), (f"gru_{d}.W_hh", (3 * H, H)),
                   (f"gru_{d}.b_ih", (3 * H,)), (f"gru_{d}.b_hh", (3 * H,))]
    layout += [("att.W", (G, G)), ("att.b", (G,)), ("att.u", (G,))]
    fan_in = G
    for i, width in enumerate(cfg.ffn_layers):
        layout += [(f"ffn{i}.W", (width, fan_in)), (f"ffn{i}.b", (width,))]
        fan_in = width
    layout += [("out.W", (cfg.n_classes, fan_in)), ("out.b", (cfg.n_classes,))]
    return layout


def _views(flat: np.ndarray, layout) -> dict[str, np.ndarray]:
    views, offset = {}, 0
    for name, shape in layout:
        size = math.prod(shape)
        views[name] = flat[offset : offset + size].reshape(shape)
        offset += size
    return views


@dataclass
class SeqBatch:
    numeric: np.ndarray  # (B, T, numeric_dim), zero padded
    pos: np.ndarray  # (B, T) int tag ids
    lengths: np.ndarray  # (B,)

    def __post_init__(self):
        self.numeric = np.ascontiguousarray(self.numeric, dtype=np.float64)
        self.pos = np.ascontiguousarray(self.pos, dtype=np.int64)
        self.lengths = np.ascontiguousarray(self.lengths, dtype=np.int64)

    @classmethod
    def from_sequences(cls, seqs: list[tuple[np.ndarray, np.ndarray]]) -> "SeqBatch":
        lengths = np.array([len(p) for _, p in seqs], dtype=np.int64)
        T = int(lengths.max()) if len(seqs) else 0
        dim = seqs[0][0].shape[1] if seqs else N_NUMERIC
        numeric = np.zeros((len(seqs), T, dim))
        pos = np.zeros((len(seqs), T), dtype=np.int64)
        for i, (x, p) in enumerate(seqs):
            numeric[i, : len(p)] = x
            pos[i, : len(p)] = p
        return cls(numeric, pos, lengths)


class SeqModel:
    def __init__(self, config: ModelConfig, theta: Optional[np.ndarray] = None, seed: int = 0):
        self.config = config
        self.layout = param_layout(config)
        size = sum(math.prod(s) for _, s in self.layout)
        if theta is None:
            theta = self._init(np.random.default_rng(seed), size)
        theta = np.ascontiguousarray(theta, dtype=np.float64)
        if theta.shape != (size,):
            raise ModelError(f"expected {size} parameters, got {theta.shape}")
        self.theta = theta
        self.params = _views(self.theta, self.layout)

    @property
    def n_params(self) -> int:
        return self.theta.size

    def _init(self, rng: np.random.Generator, size: int) -> np.ndarray:
        flat = np.zeros(size)
        views = _views(flat, self.layout)
        H = self.config.gru_hidden
        for name, v in views.items():
            if name == "emb":
                v[...] = rng.standard_normal(v.shape)
            elif name.startswith("gru_"):
                v[...] = rng.uniform(-1 / np.sqrt(H), 1 / np.sqrt(H), v.shape)
            elif name == "att.u":
                v[...] = rng.uniform(-1 / np.sqrt(v.shape[0]), 1 / np.sqrt(v.shape[0]), v.shape)
            else:
                weight = views[name[:-1] + "W"]
                bound = 1 / np.sqrt(weight.shape[1])
                v[...] = rng.uniform(-bound, bound, v.shape)
        return flat

    def copy(self) -> "SeqModel":
        return SeqModel(self.config, self.theta.copy())

    # -- forward -----------------------------------------------------------

    def _check(self, batch: SeqBatch) -> None:
        if batch.numeric.ndim != 3 or batch.numeric.shape[2] != self.config.numeric_dim:
            raise ModelError(f"expected numeric features of width {self.config.numeric_dim}, "
                             f"got shape {batch.numeric.shape}")
        if batch.numeric.shape[1] == 0 or (batch.lengths < 1).any():
            raise ModelError("sequences must contain at least one token")
        if batch.lengths.max() > batch.numeric.shape[1]:
            raise ModelError("length exceeds padded width")
        if (batch.pos < 0).any() or (batch.pos >= self.config.n_tags).any():
            raise ModelError("POS id outside the embedding table")

    def forward(self, batch: SeqBatch, train: bool = False, rng: Optional[np.random.Generator] = None):
        """Return class scores ``(B, n_classes)`` and the cache for :meth:`backward`."""
        self._check(batch)
        cfg, P = self.config, self.params
        B, T = batch.pos.shape
        mask = np.arange(T)[None, :] < batch.lengths[:, None]
        x = np.concatenate([batch.numeric, P["emb"][batch.pos]], axis=2)
        hidden, gru_cache = [], []
        for d, reverse in (("f", False), ("b", True))[: cfg.directions]:
            gi = x @ P[f"gru_{d}.W_ih"].T + P[f"gru_{d}.b_ih"]
            out = gru_forward(gi, batch.lengths, P[f"gru_{d}.W_hh"], P[f"gru_{d}.b_hh"], reverse)
            hidden.append(out[0])
            gru_cache.append(out)
        Hc = hidden[0] if len(hidden) == 1 else np.concatenate(hidden, axis=2)

        u = np.tanh(Hc @ P["att.W"].T + P["att.b"])
        e = np.where(mask, u @ P["att.u"], -np.inf)
        e = np.exp(e - e.max(axis=1, keepdims=True))
        a = e / e.sum(axis=1, keepdims=True)
        s = np.einsum("bt,btg->bg", a, Hc)

        drop = train and cfg.dropout_p > 0
        if drop and rng is None:
            raise ModelError("training-mode dropout needs an rng")
        keep = 1.0 - cfg.dropout_p
        masks = []
        act = s
        if drop:
            m = (rng.random(act.shape) < keep) / keep
            masks.append(m)
            act = act * m
        acts, pres = [act], []
        for i in range(len(cfg.ffn_layers)):
            pre = act @ P[f"ffn{i}.W"].T + P[f"ffn{i}.b"]
            act = np.maximum(pre, 0.0)
            if drop:
                m = (rng.random(act.shape) < keep) / keep
                masks.append(m)
                act = act * m
            pres.append(pre)
            acts.append(act)
        logits = act @ P["out.W"].T + P["out.b"]
        cache = dict(batch=batch, mask=mask, x=x, gru=gru_cache, Hc=Hc, u=u, a=a,
                     masks=masks, acts=acts, pres=pres, drop=drop)
        return logits, cache

    def backward(self, cache: dict, dlogits: np.ndarray) -> np.ndarray:
        """Gradient of ``sum(dlogits * logits)`` w.r.t. every parameter (flat)."""
        cfg, P = self.config, self.params
        grad = np.zeros_like(self.theta)
        G_ = _views(grad, self.layout)
        batch, acts, pres, masks = cache["batch"], cache["acts"], cache["pres"], cache["masks"]
        drop = cache["drop"]

        G_["out.W"][...] = dlogits.T @ acts[-1]
        G_["out.b"][...] = dlogits.sum(axis=0)
        dact = dlogits @ P["out.W"]
        for i in range(len(cfg.ffn_layers) - 1, -1, -1):
            if drop:
                dact = dact * masks[i + 1]
            dpre = dact * (pres[i] > 0)
            G_[f"ffn{i}.W"][...] = dpre.T @ acts[i]
            G_[f"ffn{i}.b"][...] = dpre.sum(axis=0)
            dact = dpre @ P[f"ffn{i}.W"]
        ds = dact * masks[0] if drop else dact

        Hc, u, a = cache["Hc"], cache["u"], cache["a"]
        dHc = a[:, :, None] * ds[:, None, :]
        da = np.einsum("btg,bg->bt", Hc, ds)
        de = a * (da - (a * da).sum(axis=1, keepdims=True))
        G_["att.u"][...] = np.einsum("bt,btg->g", de, u)
        dpre = (de[:, :, None] * P["att.u"]) * (1.0 - u * u)
        G = Hc.shape[2]
        G_["att.W"][...] = dpre.reshape(-1, G).T @ Hc.reshape(-1, G)
        G_["att.b"][...] = dpre.sum(axis=(0, 1))
        dHc = dHc + dpre @ P["att.W"]

        x = cache["x"]
        D = x.shape[2]
        dx = np.zeros_like(x)
        H = cfg.gru_hidden
        for k, (d, reverse) in enumerate((("f", False), ("b", True))[: cfg.directions]):
            hs, r, z, n, ghn = cache["gru"][k]
            dhs = np.ascontiguousarray(dHc[:, :, k * H : (k + 1) * H])
            d_gi, dW_hh, db_hh = gru_backward(dhs, hs, r, z, n, ghn, batch.lengths, P[f"gru_{d}.W_hh"], reverse)
            G_[f"gru_{d}.W_hh"][...] = dW_hh
            G_[f"gru_{d}.b_hh"][...] = db_hh
            G_[f"gru_{d}.W_ih"][...] = d_gi.reshape(-1, 3 * H).T @ x.reshape(-1, D)
            G_[f"gru_{d}.b_ih"][...] = d_gi.sum(axis=(0, 1))
            dx += d_gi @ P[f"gru_{d}.W_ih"]
        mask = cache["mask"]
        np.add.at(G_["emb"], batch.pos[mask], dx[mask][:, cfg.numeric_dim :])
        return grad

    # -- objective -----------------------------------------------------------

    def loss_and_grad(
        self,
        batch: SeqBatch,
        labels: np.ndarray,
        l2: float = 0.0,
        train: bool = False,
        rng: Optional[np.random.Generator] = None,
    ) -> tuple[float, np.ndarray]:
        """Mean cross entropy plus ``l2/2 * ||theta||^2`` and its exact gradient."""
        logits, cache = self.forward(batch, train=train, rng=rng)
        labels = np.asarray(labels, dtype=np.int64)
        shifted = logits - logits.max(axis=1, keepdims=True)
        logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        B = len(labels)
        loss = -logp[np.arange(B), labels].mean()
        dlogits = np.exp(logp)
        dlogits[np.arange(B), labels] -= 1.0
        grad = self.backward(cache, dlogits / B)
        if l2:
            loss += 0.5 * l2 * float(self.theta @ self.theta)
            grad += l2 * self.theta
        return float(loss), grad

    def predict_scores(self, batch: SeqBatch) -> np.ndarray:
        return self.forward(batch, train=False)[0]

    def attention(self, batch: SeqBatch) -> np.ndarray:
        return self.forward(batch, train=False)[1]["a"]

    # -- checkpoint ------------------------------------------------------------

    def save(self, path: str | Path) -> None:
        doc = {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "config": self.config.to_dict(),
            "params": {name: {"shape": list(v.shape), "data": v.ravel().tolist()} for name, v in self.params.items()},
        }
        Path(path).write_text(json.dumps(doc), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "SeqModel":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        if doc.get("format") != CHECKPOINT_FORMAT or doc.get("version") != CHECKPOINT_VERSION:
            raise ModelError(f"{path}: not a version-{CHECKPOINT_VERSION} checkpoint")
        config = ModelConfig.from_dict(doc["config"])
        parts = []
        for name, shape in param_layout(config):
            entry = doc["params"][name]
            if tuple(entry["shape"]) != shape:
                raise ModelError(f"{path}: {name} has shape {entry['shape']}, expected {list(shape)}")
            parts.append(np.asarray(entry["data"], dtype=np.float64))
        return cls(config, np.concatenate(parts))
