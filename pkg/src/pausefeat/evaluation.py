"""Cross-validation protocols, the guidance rule and significance counts."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from functools import partial
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import stats

from .classify import (ALL, BASE_KINDS, EXTENDING_K_GRID, MODEL_KINDS, ORIGINAL_K_GRID, ClassifierParams,
                       anova_f_columns, base_predictions, resolve_k)
from .classify.selection import rank_columns
from .corpus import Corpus
from .cv import METRICS, FoldPlan, make_folds, metrics, run_tasks, summarize
from .features import FEATURE_SETS, ORIGINAL, FeatureTable, RobustScaler
from .lexicon import FEATURE_NAMES, Lexicons, raw_features
from .seqmodel.search import (GridResult, SearchConfig, SpecificityGateError, SubsetArrays, grid_search,
                              model_grid)
from .seqmodel.model import ModelConfig
from .subseq import Context, extract_distance_tokens

log = logging.getLogger(__name__)

CONTEXT_ORDER = (Context.C1, Context.C2, Context.C3, Context.UTT)
SIGNIFICANCE_LEVEL = 0.05


def fmt_pm(mean: float, std: float, scale: float = 100.0) -> str:
    if math.isnan(mean):
        return "n/a"
    return f"{mean * scale:.2f}±{std * scale:.2f}"


def _csv(rows: Sequence[Sequence], header: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _num(v: float) -> str:
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.6f}"


# --- subsequence protocol ------------------------------------------------------------


@dataclass
class SubsetOutcome:
    context: Context
    n_samples: int
    result: Optional[GridResult]
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.result is not None

    def mean(self, metric: str) -> float:
        return self.result.best.mean(metric) if self.result else math.nan

    def std(self, metric: str) -> float:
        return self.result.best.std(metric) if self.result else math.nan


@dataclass
class SubseqReport:
    outcomes: dict[Context, SubsetOutcome]
    seeds: tuple[int, ...]

    def ranked(self) -> list[SubsetOutcome]:
        ok = [self.outcomes[c] for c in CONTEXT_ORDER if c in self.outcomes and self.outcomes[c].ok]
        return sorted(ok, key=lambda o: (-o.mean("acc"), CONTEXT_ORDER.index(o.context)))

    @property
    def winner(self) -> Optional[Context]:
        r = self.ranked()
        return r[0].context if r else None

    def overlap_warning(self) -> Optional[str]:
        r = self.ranked()
        if len(r) < 2:
            return None
        a, b = r[0], r[1]
        if a.mean("acc") - a.std("acc") <= b.mean("acc") + b.std("acc"):
            return (f"subset accuracies are statistically indistinguishable: {a.context.value} "
                    f"{fmt_pm(a.mean('acc'), a.std('acc'))} overlaps {b.context.value} "
                    f"{fmt_pm(b.mean('acc'), b.std('acc'))}")
        return None

    def table3_csv(self) -> str:
        rows = []
        for c in CONTEXT_ORDER:
            if c in self.outcomes:
                o = self.outcomes[c]
                rows.append([f"M-{c.value}", fmt_pm(o.mean("acc"), o.std("acc")), _num(o.mean("acc")),
                             _num(o.std("acc"))])
        return _csv(rows, ["model", "accuracy", "acc_mean", "acc_std"])

    def table6_csv(self) -> str:
        rows = []
        for c in CONTEXT_ORDER:
            o = self.outcomes.get(c)
            if o is None or not o.ok:
                continue
            cfg = o.result.best.config
            rows.append([f"M-{c.value}", "yes" if cfg.bidirectional else "no", len(cfg.ffn_layers),
                         cfg.gru_hidden, " ".join(str(w) for w in cfg.ffn_layers),
                         "yes" if cfg.dropout_p > 0 else "no"])
        return _csv(rows, ["model", "bidirectional", "ffn_layers", "gru_hidden", "ffn_widths", "dropout"])

    def to_dict(self) -> dict:
        subsets = {}
        for c in CONTEXT_ORDER:
            o = self.outcomes.get(c)
            if o is None:
                continue
            entry: dict = {"n_samples": o.n_samples, "ok": o.ok, "error": o.error}
            if o.ok:
                best = o.result.best
                entry.update({
                    "best_config": best.config.to_dict(),
                    "best_index": best.index,
                    "n_params": best.n_params,
                    **{f"{m}_mean": _round(best.mean(m)) for m in METRICS},
                    **{f"{m}_std": _round(best.std(m)) for m in METRICS},
                    "per_seed_acc": [_round(v) for v in best.seed_means["acc"]],
                    "configs": [{"index": s.index, "config": s.config.describe(), "n_params": s.n_params,
                                 "acc_mean": _round(s.mean("acc")), "spec_mean": _round(s.mean("spec")),
                                 "passed_gate": s.passed_gate} for s in o.result.summaries],
                })
            subsets[c.value] = entry
        winner = self.winner
        return {"seeds": list(self.seeds), "subsets": subsets, "winner": winner.value if winner else None,
                "warnings": [w for w in [self.overlap_warning()] if w]}


def _round(v: float) -> Optional[float]:
    return None if v is None or math.isnan(v) else round(float(v), 10)


def run_subsequence_cv(
    arrays: dict[Context, SubsetArrays],
    search: SearchConfig = SearchConfig(),
    grid: Optional[Sequence[ModelConfig]] = None,
) -> SubseqReport:
    """Grid search per subset; a subset where every configuration fails the gate is reported, not raised."""
    outcomes = {}
    for c in CONTEXT_ORDER:
        if c not in arrays:
            continue
        a = arrays[c]
        try:
            outcomes[c] = SubsetOutcome(c, len(a), grid_search(a, search, grid))
        except SpecificityGateError as exc:
            log.warning("%s: %s", c.value, exc)
            outcomes[c] = SubsetOutcome(c, len(a), None, str(exc))
    return SubseqReport(outcomes, tuple(search.seeds))


@dataclass(frozen=True)
class Guidance:
    winner: Optional[Context]
    distances: tuple[int, ...]
    warnings: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {"winner": self.winner.value if self.winner else None, "distances": list(self.distances),
                "warnings": list(self.warnings)}


def distances_for(winner: Context | str) -> tuple[int, ...]:
    """Ck selects distances 1..k; the whole-utterance subset selects all three."""
    c = Context(winner)
    return (1, 2, 3) if c is Context.UTT else tuple(range(1, c.radius + 1))


def guide_aggregates(report: SubseqReport) -> Guidance:
    warnings = []
    winner = report.winner
    if winner is None:
        raise SpecificityGateError("no subset produced a model that passes the specificity gate")
    if winner is Context.UTT:
        warnings.append("whole-utterance subset won; aggregating all three distances")
    overlap = report.overlap_warning()
    if overlap:
        warnings.append(overlap)
    for w in warnings:
        log.warning(w)
    return Guidance(winner, distances_for(winner), tuple(warnings))


# --- transcript protocol ---------------------------------------------------------------


@dataclass(frozen=True)
class TranscriptConfig:
    n_folds: int = 10
    seeds: tuple[int, ...] = (0, 1, 2, 3)
    group_by_participant: bool = True
    extending_k_grid: tuple = EXTENDING_K_GRID
    original_k_grid: tuple = ORIGINAL_K_GRID
    smote_options: tuple[bool, ...] = (False, True)
    params: ClassifierParams = field(default_factory=ClassifierParams)
    workers: int = 1


def feature_set_plan(table: FeatureTable, config: TranscriptConfig = TranscriptConfig()) -> dict[str, list]:
    """Feature-set name -> list of (k label, extension provenances) to evaluate."""
    present = {p for p in table.provenance}
    plan: dict[str, list] = {ORIGINAL: [(None, ())]}
    plan["Original w/ selection"] = [(k, ()) for k in config.original_k_grid]
    for name, provs in FEATURE_SETS.items():
        if all(p in present for p in provs):
            plan[f"Original+{name}"] = [(k, provs) for k in config.extending_k_grid]
    for name, entries in plan.items():
        for k, provs in entries:
            if k is not None:
                resolve_k(k, len(table.columns_of(provs or [ORIGINAL])))
    return plan


def _columns_for(table: FeatureTable, k, provs: tuple[str, ...],
                 f_scores: dict[str, float]) -> tuple[list[str], list[str]]:
    """Model input columns and the subset of them picked by top-k selection."""
    original = table.columns_of([ORIGINAL])
    if k is None:
        return original, []
    pool = original if not provs else table.columns_of(provs)
    n = resolve_k(k, len(pool), warn=False)
    chosen = set(pool[i] for i in rank_columns([f_scores[c] for c in pool], pool)[:n])
    picked = [c for c in pool if c in chosen]
    return (picked if not provs else original + picked), picked


def _transcript_fold(task, table: FeatureTable, plan: dict[str, list], config: TranscriptConfig) -> list[dict]:
    seed, fold = task
    folds = make_folds(table.labels, config.n_folds, seed,
                       table.groups if config.group_by_participant else None)
    train, test = folds.split(fold)
    scaler = RobustScaler.fit(table.values[train])
    X = scaler.transform(table.values)
    f = anova_f_columns(X[train], table.labels[train])
    f_scores = dict(zip(table.columns, f))
    col_index = {c: i for i, c in enumerate(table.columns)}
    cache: dict[tuple, dict[str, np.ndarray]] = {}
    rows = []
    for set_name, entries in plan.items():
        for k, provs in entries:
            cols, picked = _columns_for(table, k, provs, f_scores)
            idx = [col_index[c] for c in cols]
            for smote in config.smote_options:
                key = (tuple(idx), smote)
                if key not in cache:
                    cache[key] = base_predictions(X[np.ix_(train, idx)], table.labels[train], X[np.ix_(test, idx)],
                                                  smote, seed, config.params)
                preds = cache[key]
                for kind in MODEL_KINDS:
                    rows.append({"set": set_name, "k": "ALL" if k == ALL else k, "n_selected": len(picked) or len(cols),
                                 "smote": smote, "model": kind, "seed": seed, "fold": fold,
                                 "test_rows": test, "pred": preds[kind], "votes": {b: preds[b] for b in BASE_KINDS},
                                 "selected": picked,
                                 **metrics(table.labels[test], preds[kind])})
    return rows


@dataclass
class SetResult:
    name: str
    model: str
    k: object
    n_selected: int
    smote: bool
    seed_means: dict[str, list[float]]
    trials: list[dict]

    def mean(self, m: str) -> float:
        return summarize(self.seed_means[m])[0]

    def std(self, m: str) -> float:
        return summarize(self.seed_means[m])[1]


@dataclass
class TranscriptReport:
    results: dict[str, SetResult]
    seeds: tuple[int, ...]
    table: FeatureTable
    selection: dict[str, list[tuple[str, float, int]]]  # set -> (column, mean F, folds selected)
    n_folds: int

    def table2_csv(self) -> str:
        rows = []
        for name, r in self.results.items():
            rows.append([name, *(fmt_pm(r.mean(m), r.std(m)) for m in METRICS),
                         *(_num(r.mean(m)) for m in METRICS), *(_num(r.std(m)) for m in METRICS)])
        header = ["feature_set", *METRICS, *(f"{m}_mean" for m in METRICS), *(f"{m}_std" for m in METRICS)]
        return _csv(rows, header)

    def table7_csv(self) -> str:
        rows = [[name, r.model, "all" if r.k is None else r.k, r.n_selected, "yes" if r.smote else "no"]
                for name, r in self.results.items()]
        return _csv(rows, ["feature_set", "model", "k", "n_features", "smote"])

    def plot_csv(self) -> str:
        rows = [[name, _num(r.mean("acc")), _num(r.std("acc"))] for name, r in self.results.items()]
        return _csv(rows, ["feature_set", "acc_mean", "acc_std"])

    def predictions_csv(self) -> str:
        rows = []
        for name, r in self.results.items():
            for t in sorted(r.trials, key=lambda t: (t["seed"], t["fold"])):
                for j, row in enumerate(t["test_rows"]):
                    rows.append([name, self.table.ids[row], t["seed"], t["fold"],
                                 "CI" if self.table.labels[row] else "HC", "CI" if t["pred"][j] else "HC",
                                 *("CI" if t["votes"][b][j] else "HC" for b in BASE_KINDS)])
        return _csv(rows, ["feature_set", "id", "seed", "fold", "truth", "prediction",
                           *(f"vote_{b}" for b in BASE_KINDS)])

    def selection_csv(self) -> str:
        rows = []
        for name, entries in self.selection.items():
            for col, fval, count in entries:
                rows.append([name, col, _num(fval), count, "yes" if 2 * count >= self.n_folds * len(self.seeds) else "no"])
        return _csv(rows, ["feature_set", "column", "f_value_mean", "folds_selected", "selected"])

    def to_dict(self) -> dict:
        return {
            "seeds": list(self.seeds),
            "n_folds": self.n_folds,
            "feature_sets": {
                name: {"model": r.model, "k": r.k, "n_selected": r.n_selected, "smote": r.smote,
                       **{f"{m}_mean": _round(r.mean(m)) for m in METRICS},
                       **{f"{m}_std": _round(r.std(m)) for m in METRICS},
                       "per_seed_acc": [_round(v) for v in r.seed_means["acc"]],
                       "per_fold_acc": [_round(t["acc"]) for t in sorted(r.trials, key=lambda t: (t["seed"], t["fold"]))]}
                for name, r in self.results.items()
            },
            "column_counts": self.table.column_counts(),
        }


def run_transcript_cv(table: FeatureTable, config: TranscriptConfig = TranscriptConfig()) -> TranscriptReport:
    """Joint choice of (k, SMOTE, model) per feature set by mean fold accuracy over all seeds."""
    plan = feature_set_plan(table, config)
    tasks = [(s, f) for s in config.seeds for f in range(config.n_folds)]
    per_task = run_tasks(partial(_transcript_fold, table=table, plan=plan, config=config), tasks, config.workers)
    trials = [row for rows in per_task for row in rows]

    results: dict[str, SetResult] = {}
    selection: dict[str, list[tuple[str, float, int]]] = {}
    for set_name in plan:
        groups: dict[tuple, list[dict]] = {}
        for t in trials:
            if t["set"] == set_name:
                groups.setdefault((str(t["k"]), t["smote"], t["model"]), []).append(t)
        order = [(str(k), s, m) for k, _ in plan[set_name] for s in config.smote_options for m in MODEL_KINDS]
        best_key, best_acc = None, -math.inf
        for key in order:
            acc = float(np.mean([t["acc"] for t in groups[key]]))
            if acc > best_acc:
                best_key, best_acc = key, acc
        chosen = groups[best_key]
        seed_means = {m: [summarize(t[m] for t in chosen if t["seed"] == s)[0] for s in config.seeds]
                      for m in METRICS}
        k_label = chosen[0]["k"]
        results[set_name] = SetResult(set_name, best_key[2], k_label, chosen[0]["n_selected"], best_key[1],
                                      seed_means, chosen)
        if k_label is not None:
            counts: dict[str, int] = {}
            for t in chosen:
                for c in t["selected"]:
                    counts[c] = counts.get(c, 0) + 1
            selection[set_name] = [(c, math.nan, counts.get(c, 0)) for c in sorted(counts)]
    _fill_selection_f(table, selection, config)
    return TranscriptReport(results, tuple(config.seeds), table, selection, config.n_folds)


def _fill_selection_f(table: FeatureTable, selection: dict, config: TranscriptConfig) -> None:
    """Mean training-fold F value for every column named in the selection report."""
    sums = np.zeros(len(table.columns))
    n = 0
    for seed in config.seeds:
        folds = make_folds(table.labels, config.n_folds, seed, table.groups if config.group_by_participant else None)
        for train, _ in folds:
            X = RobustScaler.fit(table.values[train]).transform(table.values[train])
            sums += anova_f_columns(X, table.labels[train])
            n += 1
    mean_f = dict(zip(table.columns, sums / n))
    for name, entries in selection.items():
        selection[name] = [(c, float(mean_f[c]), count) for c, _, count in entries]


# --- significance -----------------------------------------------------------------------------


def welch_test(a: Sequence[float], b: Sequence[float]) -> tuple[float, float]:
    """Two-sided unequal-variance t-test; identical constant samples give (0, 1)."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    if len(a) < 2 or len(b) < 2:
        raise ValueError("each sample needs at least two values")
    if np.var(a) == 0 and np.var(b) == 0:
        return (0.0, 1.0) if a[0] == b[0] else (math.copysign(math.inf, a[0] - b[0]), 0.0)
    res = stats.ttest_ind(a, b, equal_var=False)
    return float(res.statistic), float(res.pvalue)


def _count_significant(pairs: Iterable[tuple[str, np.ndarray, np.ndarray]]) -> tuple[int, int]:
    hits = tested = 0
    for name, a, b in pairs:
        a, b = a[~np.isnan(a)], b[~np.isnan(b)]
        if len(a) < 2 or len(b) < 2:
            log.info("significance: %s skipped (fewer than two values in a class)", name)
            continue
        tested += 1
        if welch_test(a, b)[1] < SIGNIFICANCE_LEVEL:
            hits += 1
    return hits, tested


@dataclass
class SignificanceTable:
    rows: list[dict]

    def to_csv(self) -> str:
        return _csv([[r["distance"], r["token_level"], r["token_tested"], r["transcript_level"],
                      r["transcript_tested"]] for r in self.rows],
                    ["distance", "token_level", "token_tested", "transcript_level", "transcript_tested"])


def significance_analysis(corpus: Corpus, lexicons: Lexicons, table: FeatureTable,
                          distances: Sequence[int] = (1, 2, 3), skip_boundaries: bool = False) -> SignificanceTable:
    """Per distance: how many token-level and transcript-level features differ between classes."""
    rows = []
    for d in distances:
        pools = {0: [], 1: []}
        for t in corpus.transcripts:
            y = 1 if t.label.value == "CI" else 0
            for tok, _ in extract_distance_tokens(t, d, skip_boundaries):
                if tok.is_word:
                    pools[y].append(raw_features(tok, lexicons))
        hc = np.array(pools[0]).reshape(-1, len(FEATURE_NAMES))
        ci = np.array(pools[1]).reshape(-1, len(FEATURE_NAMES))
        tok_hits, tok_tested = _count_significant((n, hc[:, i], ci[:, i]) for i, n in enumerate(FEATURE_NAMES))
        cols = [c for c in table.columns if c.startswith(f"FD{d}.")]
        y = table.labels
        tr_hits, tr_tested = _count_significant(
            (c, table.values[y == 0, table.columns.index(c)], table.values[y == 1, table.columns.index(c)]) for c in cols
        )
        rows.append({"distance": f"D{d}", "token_level": tok_hits, "token_tested": tok_tested,
                     "transcript_level": tr_hits, "transcript_tested": tr_tested})
    return SignificanceTable(rows)
