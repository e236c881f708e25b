"""Transcript-level feature tables.

Two families of columns are produced:

* ``ORIG.*``: a baseline bank of lexical, sentiment, pause, speech-graph,
  information-unit and utterance-length measures computed over the whole
  transcript.
* ``FD{d}.*``: aggregates over the tokens lying exactly ``d`` positions from
  a pause (means of the token-level numeric features, plus part-of-speech
  ratios normalised by pause count and the tag's overall share).

Missing values are NaN.  :class:`RobustScaler` imputes and scales them using
training rows only.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Sequence

import networkx as nx
import numpy as np

from .corpus import Corpus, Token, TokenKind, Transcript, count_pauses
from .lexicon import FEATURE_NAMES, NORMS, WORD_TAGS, Lexicons, lemmatize, raw_features
from .subseq import extract_distance_tokens

ORIGINAL = "Original"
PROVENANCES = (ORIGINAL, "F-D1", "F-D2", "F-D3")
PREFIX = {ORIGINAL: "ORIG", "F-D1": "FD1", "F-D2": "FD2", "F-D3": "FD3"}
# combined sets are unions of the per-distance ones
FEATURE_SETS: dict[str, tuple[str, ...]] = {
    "F-D1": ("F-D1",),
    "F-D2": ("F-D2",),
    "F-D3": ("F-D3",),
    "F-C2": ("F-D1", "F-D2"),
    "F-C3": ("F-D1", "F-D2", "F-D3"),
}


def provenance_of(column: str) -> str:
    head = column.split(".", 1)[0]
    for prov, prefix in PREFIX.items():
        if head == prefix:
            return prov
    raise ValueError(f"column {column!r} has no known provenance prefix")


def load_info_units(path: str | Path | None = None) -> tuple[str, ...]:
    """Keyword list, one per line, ``#`` comments allowed."""
    if path is None:
        text = (resources.files("pausefeat") / "data" / "info_units.txt").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    words = []
    for line in text.splitlines():
        line = line.strip().lower()
        if line and not line.startswith("#") and line not in words:
            words.append(line)
    return tuple(words)


# --- original bank ------------------------------------------------------------------


def speech_graph(words: Sequence[str]) -> dict[str, float]:
    """Structural counts of the word-adjacency multigraph (consecutive words linked)."""
    g = nx.MultiDiGraph()
    g.add_nodes_from(words)
    g.add_edges_from(zip(words, words[1:]))
    n_nodes, n_edges = g.number_of_nodes(), g.number_of_edges()
    distinct = {(u, v) for u, v in g.edges()}
    return {
        "graph_nodes": n_nodes,
        "graph_edges": n_edges,
        "graph_self_loops": nx.number_of_selfloops(g),
        "graph_parallel_edges": n_edges - len(distinct),
        "graph_avg_degree": 2.0 * n_edges / n_nodes if n_nodes else math.nan,
        "graph_lsc": max((len(c) for c in nx.strongly_connected_components(g)), default=0),
        "graph_lcc": max((len(c) for c in nx.weakly_connected_components(g)), default=0),
    }


def _nanmean(values: Iterable[float]) -> float:
    arr = np.array([v for v in values if not math.isnan(v)], dtype=float)
    return float(arr.mean()) if arr.size else math.nan


def original_feature_names(info_units: Sequence[str]) -> list[str]:
    names = ["n_words", "n_types", "type_token_ratio", "avg_letters", "avg_syllables"]
    names += [f"avg_{n}" for n in NORMS[3:]] + [f"avg_{n}_lemma" for n in NORMS[3:]]
    names += [f"count_{t.lower()}" for t in WORD_TAGS] + [f"ratio_{t.lower()}" for t in WORD_TAGS]
    names += ["pronoun_noun_ratio", "noun_verb_ratio"]
    names += [f"{scope}_{n}" for scope in ("mean", "noun_mean", "verb_mean") for n in NORMS[:3]]
    names += ["filled_pauses", "unfilled_pauses", "total_pauses", "pause_word_ratio", "pauses_per_utterance"]
    names += list(speech_graph([]).keys())
    names += [f"iu_{w}" for w in info_units] + ["iu_distinct", "iu_total"]
    names += ["n_utterances", "mean_utterance_length_proxy", "max_utterance_length"]
    return names


def original_features(t: Transcript, lexicons: Lexicons, info_units: Sequence[str] = ()) -> dict[str, float]:
    """One row of the baseline bank; a transcript without words gives an all-missing row."""
    names = original_feature_names(info_units)
    words = t.words
    if not words:
        return {n: math.nan for n in names}
    surfaces = [w.surface for w in words]
    lemmas = [w.lemma or lemmatize(w.surface) for w in words]
    raw = np.array([raw_features(w, lexicons) for w in words])
    col = {name: i for i, name in enumerate(FEATURE_NAMES)}
    n = len(words)
    # filled pauses are spoken, so they count towards the word total
    spoken = n + sum(1 for tok in t.tokens() if tok.kind is TokenKind.FILLED_PAUSE)
    out: dict[str, float] = {
        "n_words": spoken,
        "n_types": len(set(surfaces)),
        "type_token_ratio": len(set(surfaces)) / n,
        "avg_letters": float(raw[:, col["letters"]].mean()),
        "avg_syllables": float(raw[:, col["syllables"]].mean()),
    }
    for norm in NORMS[3:]:
        out[f"avg_{norm}"] = _nanmean(raw[:, col[norm]])
        out[f"avg_{norm}_lemma"] = _nanmean(raw[:, col[f"{norm}_lemma"]])

    tags = [w.pos or "OTHER" for w in words]
    for tag in WORD_TAGS:
        c = sum(1 for x in tags if x == tag)
        out[f"count_{tag.lower()}"] = c
        out[f"ratio_{tag.lower()}"] = c / n
    nouns, verbs = out["count_noun"], out["count_verb"]
    out["pronoun_noun_ratio"] = out["count_pron"] / nouns if nouns else math.nan
    out["noun_verb_ratio"] = nouns / verbs if verbs else math.nan

    for scope, mask in (("mean", None), ("noun_mean", "NOUN"), ("verb_mean", "VERB")):
        rows = raw if mask is None else raw[[x == mask for x in tags]]
        for norm in NORMS[:3]:
            out[f"{scope}_{norm}"] = _nanmean(rows[:, col[norm]]) if len(rows) else math.nan

    pauses = count_pauses(t)
    out["filled_pauses"] = pauses["filled"]
    out["unfilled_pauses"] = pauses["unfilled"]
    out["total_pauses"] = pauses["total"]
    out["pause_word_ratio"] = pauses["total"] / spoken
    out["pauses_per_utterance"] = pauses["total"] / len(t.utterances)

    out.update(speech_graph(surfaces))

    hits = {w: 0 for w in info_units}
    for s, lem in zip(surfaces, lemmas):
        key = s if s in hits else lem
        if key in hits:
            hits[key] += 1
    for w in info_units:
        out[f"iu_{w}"] = hits[w]
    out["iu_distinct"] = sum(1 for v in hits.values() if v)
    out["iu_total"] = sum(hits.values())

    lengths = [len(u.words) for u in t.utterances]
    out["n_utterances"] = len(lengths)
    # utterances stand in for clauses: no parser is involved
    out["mean_utterance_length_proxy"] = float(np.mean(lengths))
    out["max_utterance_length"] = max(lengths)
    return {name: float(out[name]) for name in names}


# --- distance aggregates --------------------------------------------------------------


def _eligible(pool: Iterable[tuple[Token, str]], side: Optional[str] = None) -> list[Token]:
    return [tok for tok, s in pool if tok.is_word and (side is None or s == side)]


def aggregate_continuous(tokens: Sequence[Token], feature: str, lexicons: Lexicons) -> float:
    """Mean of one token-level feature over word tokens (pauses and boundaries skipped)."""
    i = FEATURE_NAMES.index(feature)
    return _nanmean(raw_features(tok, lexicons)[i] for tok in tokens if tok.is_word)


def aggregate_pos_ratio(tokens: Sequence[Token], t: Transcript, pos: str) -> float:
    """``count(pos in pool) / (total pauses x share of words tagged pos)``; NaN on a zero denominator."""
    words = t.words
    total_pauses = count_pauses(t)["total"]
    share = sum(1 for w in words if w.pos == pos) / len(words) if words else 0.0
    denom = total_pauses * share
    if denom == 0:
        return math.nan
    return sum(1 for tok in tokens if tok.is_word and tok.pos == pos) / denom


def aggregate_names(d: int, split_sides: bool = False) -> list[str]:
    sides = ("before.", "after.") if split_sides else ("",)
    names = []
    for side in sides:
        names += [f"FD{d}.{side}avg_{f}" for f in FEATURE_NAMES]
        names += [f"FD{d}.{side}ratio_{t.lower()}" for t in WORD_TAGS]
    return names


def aggregate_features(
    t: Transcript,
    d: int,
    lexicons: Lexicons,
    split_sides: bool = False,
    skip_boundaries: bool = False,
) -> dict[str, float]:
    pool = extract_distance_tokens(t, d, skip_boundaries)
    out: dict[str, float] = {}
    for side in (("before", "after") if split_sides else (None,)):
        prefix = f"FD{d}." + (f"{side}." if side else "")
        tokens = _eligible(pool, side)
        rows = np.array([raw_features(tok, lexicons) for tok in tokens]) if tokens else np.zeros((0, len(FEATURE_NAMES)))
        for i, f in enumerate(FEATURE_NAMES):
            out[f"{prefix}avg_{f}"] = _nanmean(rows[:, i]) if len(rows) else math.nan
        for tag in WORD_TAGS:
            out[f"{prefix}ratio_{tag.lower()}"] = aggregate_pos_ratio(tokens, t, tag)
    return out


# --- tables -------------------------------------------------------------------------


@dataclass
class FeatureTable:
    ids: list[str]
    groups: list[str]
    labels: np.ndarray  # 1 = CI
    columns: list[str]
    values: np.ndarray  # (rows, columns), NaN = missing

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=float).reshape(len(self.ids), len(self.columns))

    @property
    def provenance(self) -> list[str]:
        return [provenance_of(c) for c in self.columns]

    def columns_of(self, provenances: Iterable[str]) -> list[str]:
        wanted = set(provenances)
        return [c for c in self.columns if provenance_of(c) in wanted]

    def select(self, columns: Sequence[str]) -> "FeatureTable":
        index = {c: i for i, c in enumerate(self.columns)}
        idx = [index[c] for c in columns]
        return FeatureTable(self.ids, self.groups, self.labels, list(columns), self.values[:, idx])

    def column_counts(self) -> dict[str, int]:
        counts = {p: 0 for p in PROVENANCES}
        for p in self.provenance:
            counts[p] += 1
        return counts

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["id", "participant_id", "label", *self.columns])
        for i, rid in enumerate(self.ids):
            cells = ["" if math.isnan(v) else repr(float(v)) for v in self.values[i]]
            writer.writerow([rid, self.groups[i], "CI" if self.labels[i] else "HC", *cells])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "FeatureTable":
        rows = list(csv.reader(line for line in io.StringIO(text) if not line.startswith("#")))
        header, body = rows[0], rows[1:]
        if header[:3] != ["id", "participant_id", "label"]:
            raise ValueError("feature table must start with id,participant_id,label")
        values = np.array([[float(c) if c else math.nan for c in r[3:]] for r in body], dtype=float)
        return cls([r[0] for r in body], [r[1] for r in body], np.array([r[2] == "CI" for r in body], dtype=np.int64),
                   header[3:], values.reshape(len(body), len(header) - 3))


def build_feature_table(
    corpus: Corpus,
    lexicons: Lexicons,
    distances: Iterable[int] = (),
    info_units: Sequence[str] = (),
    split_sides: bool = False,
    skip_boundaries: bool = False,
) -> FeatureTable:
    """Original columns plus aggregate columns for exactly the requested distances."""
    distances = sorted(set(distances))
    orig_names = original_feature_names(info_units)
    columns = [f"ORIG.{n}" for n in orig_names]
    for d in distances:
        columns += aggregate_names(d, split_sides)
    values = np.full((len(corpus.transcripts), len(columns)), math.nan)
    for i, t in enumerate(corpus.transcripts):
        orig = original_features(t, lexicons, info_units)
        row = [orig[n] for n in orig_names]
        for d in distances:
            agg = aggregate_features(t, d, lexicons, split_sides, skip_boundaries)
            row += [agg[c] for c in aggregate_names(d, split_sides)]
        values[i] = row
    return FeatureTable(
        [t.id for t in corpus.transcripts],
        [t.participant_id for t in corpus.transcripts],
        np.array([1 if t.label.value == "CI" else 0 for t in corpus.transcripts]),
        columns,
        values,
    )


# --- robust scaling -------------------------------------------------------------------


@dataclass(frozen=True)
class RobustScaler:
    """Per-column median and interquartile range (linear-interpolation quartiles)."""

    median: np.ndarray
    iqr: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "RobustScaler":
        X = np.asarray(X, dtype=float)
        if X.shape[0] == 0:
            raise ValueError("cannot fit a scaler on zero rows")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)  # all-missing columns
            q1, med, q3 = np.nanpercentile(X, [25, 50, 75], axis=0, method="linear")
        med = np.where(np.isnan(med), 0.0, med)
        iqr = np.where(np.isnan(q3 - q1), 0.0, q3 - q1)
        return cls(med, iqr)

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        filled = np.where(np.isnan(X), self.median, X)
        centred = filled - self.median
        scale = np.where(self.iqr > 0, self.iqr, 1.0)
        return centred / scale

    def to_dict(self) -> dict:
        return {"median": self.median.tolist(), "iqr": self.iqr.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "RobustScaler":
        return cls(np.asarray(d["median"], float), np.asarray(d["iqr"], float))

    def dumps(self) -> str:
        return json.dumps(self.to_dict())


def fit_transform_robust(X: np.ndarray, train_rows: np.ndarray) -> tuple[np.ndarray, RobustScaler]:
    """Fit on ``train_rows`` and transform every row."""
    train_rows = np.asarray(train_rows)
    if train_rows.size == 0:
        raise ValueError("train rows must be non-empty")
    scaler = RobustScaler.fit(np.asarray(X, float)[train_rows])
    return scaler.transform(X), scaler
