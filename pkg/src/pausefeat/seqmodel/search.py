"""Cross-validated model selection over the 24-configuration grid."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import partial
from typing import Optional, Sequence

import numpy as np

from ..cv import METRICS, make_folds, metrics, run_tasks, summarize
from ..lexicon import N_NUMERIC, Lexicons, NormalizationStats, fit_normalization, token_matrix
from ..subseq import SubsetTable
from .model import ModelConfig, SeqModel
from .train import SeqData, TrainConfig, predict, train

SPECIFICITY_GATE = 0.288

# (gru hidden, FFN widths for 1/2/3 layers); large is about four times small
SIZES: dict[str, tuple[int, tuple[int, int, int]]] = {
    "small": (12, (10, 5, 3)),
    "large": (50, (40, 20, 12)),
}
# same grid shape at a size where finite-difference checks are cheap
REDUCED_SIZES: dict[str, tuple[int, tuple[int, int, int]]] = {
    "small": (2, (3, 2, 2)),
    "large": (4, (4, 2, 2)),
}


class SpecificityGateError(RuntimeError):
    pass


def model_grid(sizes: dict[str, tuple[int, tuple[int, int, int]]] = SIZES) -> list[ModelConfig]:
    """Direction x FFN depth x dropout x size, in a fixed order."""
    grid = []
    for bidirectional in (False, True):
        for depth in (1, 2, 3):
            for dropout in (0.0, 0.5):
                for size in ("small", "large"):
                    hidden, widths = sizes[size]
                    grid.append(ModelConfig(bidirectional, hidden, widths[:depth], dropout))
    return grid


# --- encoded subsets -------------------------------------------------------------


@dataclass
class SubsetArrays:
    """Raw (un-imputed) token rows of a subset table, padded to a common length."""

    raw: np.ndarray  # (N, T, 18), NaN where a norm is missing
    pos: np.ndarray  # (N, T)
    lengths: np.ndarray  # (N,)
    is_word: np.ndarray  # (N, T)
    labels: np.ndarray  # (N,) 1 = CI
    groups: list[str]

    def __len__(self) -> int:
        return len(self.labels)


def encode_subset(table: SubsetTable, lexicons: Lexicons) -> SubsetArrays:
    subs = table.subsequences
    if not subs:
        raise ValueError(f"subset {table.context.value} is empty")
    T = max(len(s) for s in subs)
    N = len(subs)
    raw = np.zeros((N, T, N_NUMERIC))
    pos = np.zeros((N, T), dtype=np.int64)
    is_word = np.zeros((N, T), dtype=bool)
    lengths = np.zeros(N, dtype=np.int64)
    for i, s in enumerate(subs):
        r, p, w = token_matrix(s.tokens, lexicons)
        L = len(s)
        raw[i, :L], pos[i, :L], is_word[i, :L], lengths[i] = r, p, w, L
    labels = np.array([1 if s.label.value == "CI" else 0 for s in subs], dtype=np.int64)
    return SubsetArrays(raw, pos, lengths, is_word, labels, [s.source for s in subs])


def fit_stats(arrays: SubsetArrays, rows: Optional[np.ndarray] = None) -> NormalizationStats:
    """Normalization statistics from the Word tokens of ``rows`` (all rows by default)."""
    rows = np.arange(len(arrays)) if rows is None else rows
    return fit_normalization(arrays.raw[rows][arrays.is_word[rows]])


def to_seqdata(arrays: SubsetArrays, stats: NormalizationStats, rows: Optional[np.ndarray] = None) -> SeqData:
    rows = np.arange(len(arrays)) if rows is None else np.asarray(rows)
    T = int(arrays.lengths[rows].max())
    raw = arrays.raw[rows, :T]
    w = arrays.is_word[rows, :T]
    z = (np.where(np.isnan(raw), stats.mean, raw) - stats.mean) / stats.std
    numeric = np.where(w[:, :, None], z, 0.0)
    return SeqData(numeric, arrays.pos[rows, :T], arrays.lengths[rows], arrays.labels[rows])


# --- search -----------------------------------------------------------------------


@dataclass(frozen=True)
class SearchConfig:
    n_folds: int = 5
    seeds: tuple[int, ...] = (0, 1, 2, 3)
    group_by_source: bool = True
    global_norm: bool = False
    spec_gate: float = SPECIFICITY_GATE
    train: TrainConfig = field(default_factory=TrainConfig)
    workers: int = 1


@dataclass
class ConfigSummary:
    index: int
    config: ModelConfig
    n_params: int
    seed_means: dict[str, list[float]]  # metric -> one fold-averaged value per seed
    passed_gate: bool

    def mean(self, metric: str) -> float:
        return summarize(self.seed_means[metric])[0]

    def std(self, metric: str) -> float:
        return summarize(self.seed_means[metric])[1]


@dataclass
class GridResult:
    best: ConfigSummary
    summaries: list[ConfigSummary]
    trials: list[dict]

    def trial_log_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["config", "fold", "seed", *METRICS])
        for row in self.trials:
            writer.writerow([row["config"], row["fold"], row["seed"], *(_fmt(row[m]) for m in METRICS)])
        return buf.getvalue()


def _fmt(v: float) -> str:
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.6f}"


def task_seed(seed: int, fold: int) -> int:
    return int(np.random.SeedSequence([seed, fold]).generate_state(1)[0])


def _run_trial(task, arrays: SubsetArrays, grid: Sequence[ModelConfig], search: SearchConfig) -> dict:
    ci, seed, fold = task
    plan = make_folds(arrays.labels, search.n_folds, seed, arrays.groups if search.group_by_source else None)
    train_rows, test_rows = plan.split(fold)
    stats = fit_stats(arrays, None if search.global_norm else train_rows)
    s = task_seed(seed, fold)
    model = SeqModel(grid[ci], seed=s)
    train_cfg = TrainConfig(**{**search.train.to_dict(), "seed": s})
    train(model, to_seqdata(arrays, stats, train_rows), train_cfg)
    pred = predict(model, to_seqdata(arrays, stats, test_rows))
    return {"config": ci, "fold": fold, "seed": seed, **metrics(arrays.labels[test_rows], pred)}


def grid_search(
    arrays: SubsetArrays,
    search: SearchConfig = SearchConfig(),
    grid: Optional[Sequence[ModelConfig]] = None,
) -> GridResult:
    """Evaluate every configuration by k-fold CV averaged over the seed list.

    Configurations whose mean specificity falls below the gate are dropped;
    the winner has the highest mean accuracy, ties going to the smaller
    parameter count and then to the earlier grid position.
    """
    grid = list(model_grid() if grid is None else grid)
    tasks = [(ci, seed, fold) for ci in range(len(grid)) for seed in search.seeds for fold in range(search.n_folds)]
    trials = run_tasks(partial(_run_trial, arrays=arrays, grid=grid, search=search), tasks, search.workers)

    summaries = []
    for ci, cfg in enumerate(grid):
        seed_means: dict[str, list[float]] = {m: [] for m in METRICS}
        for seed in search.seeds:
            rows = [t for t in trials if t["config"] == ci and t["seed"] == seed]
            for m in METRICS:
                seed_means[m].append(summarize(r[m] for r in rows)[0])
        spec = summarize(seed_means["spec"])[0]
        passed = not math.isnan(spec) and spec >= search.spec_gate
        summaries.append(ConfigSummary(ci, cfg, SeqModel(cfg).n_params, seed_means, passed))

    survivors = [s for s in summaries if s.passed_gate]
    if not survivors:
        raise SpecificityGateError(
            f"no configuration reached the specificity gate of {search.spec_gate} (mean specificity)"
        )
    best = max(survivors, key=lambda s: (s.mean("acc"), -s.n_params, -s.index))
    return GridResult(best, summaries, trials)
