"""Planted-signal corpora for validating the pipeline end to end.

Every transcript is built from a shared pseudo-word vocabulary.  HC words are
drawn uniformly.  CI transcripts draw the words sitting exactly
``signal_distance`` positions from a pause from an exponentially tilted
distribution whose designated lexicon dimensions are shifted by
``signal_strength`` vocabulary standard deviations; all other positions are
drawn exactly as for HC.  The generator also writes lexicon tables and a tag
dictionary so the result can be fed through the normal file-based loaders.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .corpus import Corpus, Label, Token, TokenKind, Transcript, make_utterance
from .lexicon import LEXICON_SLOTS, NORMS, WORD_TAGS

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aiou"
_FILLED = ("uh", "um")
_UNFILLED = ("(.)", "(..)")

# share of each tag in the vocabulary
_TAG_SHARES = {
    "NOUN": 0.34, "VERB": 0.24, "ADJ": 0.1, "ADV": 0.06, "PRON": 0.05, "DET": 0.05,
    "ADP": 0.05, "CONJ": 0.03, "NUM": 0.02, "INTJ": 0.02, "OTHER": 0.04,
}


class SyntheticError(ValueError):
    pass


@dataclass(frozen=True)
class SyntheticSpec:
    n_transcripts: int = 200
    ci_fraction: float = 0.5
    vocab_size: int = 1500
    utterances: tuple[int, int] = (8, 12)
    words_per_utterance: tuple[int, int] = (5, 10)
    pause_prob: float = 0.6
    filled_share: float = 0.5
    signal_distance: int = 2
    signal_strength: float = 1.5
    signal_dims: tuple[str, ...] = ("aoa", "frequency")
    signal_signs: tuple[int, ...] = (1, -1)
    missing_rate: float = 0.1
    min_effective_words: float = 30.0
    seed: int = 0

    def __post_init__(self):
        for name in ("utterances", "words_per_utterance", "signal_dims", "signal_signs"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.n_transcripts < 2:
            raise SyntheticError("n_transcripts must be at least 2")
        if not 0.0 < self.ci_fraction < 1.0:
            raise SyntheticError("ci_fraction must lie strictly between 0 and 1")
        if self.signal_distance not in (1, 2, 3):
            raise SyntheticError("signal_distance must be 1, 2 or 3")
        if self.signal_strength < 0:
            raise SyntheticError("signal_strength must be non-negative")
        if len(self.signal_dims) != len(self.signal_signs) or not self.signal_dims:
            raise SyntheticError("signal_dims and signal_signs must be non-empty and of equal length")
        unknown = set(self.signal_dims) - set(NORMS)
        if unknown:
            raise SyntheticError(f"unknown signal dimensions {sorted(unknown)}")
        lo, hi = self.words_per_utterance
        if lo < 2 or hi < lo:
            raise SyntheticError("words_per_utterance must be an increasing range starting at 2 or more")
        if self.utterances[0] < 1 or self.utterances[1] < self.utterances[0]:
            raise SyntheticError("utterances must be an increasing range starting at 1 or more")
        if self.vocab_size < 10:
            raise SyntheticError("vocab_size must be at least 10")

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        return cls(**d)


@dataclass
class Vocabulary:
    words: list[str]
    tags: list[str]
    norms: np.ndarray  # (V, 8) in file units, NaN = absent from that table
    scores: np.ndarray  # (V, n_signal_dims) standardized, sign applied

    def __len__(self) -> int:
        return len(self.words)


@dataclass
class SyntheticCorpus:
    spec: SyntheticSpec
    corpus: Corpus
    vocabulary: Vocabulary
    weights: np.ndarray  # tilted sampling distribution over the vocabulary
    chat: dict[str, str] = field(default_factory=dict)


def _reserved_words() -> set[str]:
    reserved: set[str] = set(_FILLED) | {"xxx", "yyy", "www"}
    base = resources.files("pausefeat") / "data"
    for line in (base / "tagdict.csv").read_text(encoding="utf-8").splitlines():
        if line and not line.startswith("#"):
            reserved.add(line.split(",", 1)[0].strip().lower())
    for line in (base / "info_units.txt").read_text(encoding="utf-8").splitlines():
        if line.strip() and not line.startswith("#"):
            reserved.add(line.strip().lower())
    return reserved


def _pseudo_words(n: int, rng: np.random.Generator) -> list[str]:
    reserved = _reserved_words()
    seen: set[str] = set()
    out: list[str] = []
    tries = 0
    while len(out) < n:
        tries += 1
        if tries > 100 * n:
            raise SyntheticError(f"could not build {n} distinct pseudo-words")
        n_syl = int(rng.choice([1, 2, 2, 3, 3, 4]))
        word = "".join(_CONSONANTS[rng.integers(len(_CONSONANTS))] + _VOWELS[rng.integers(len(_VOWELS))]
                       for _ in range(n_syl))
        if len(word) < 2 or word in seen or word in reserved:
            continue
        seen.add(word)
        out.append(word)
    return out


def build_vocabulary(spec: SyntheticSpec, rng: np.random.Generator) -> Vocabulary:
    V = spec.vocab_size
    words = _pseudo_words(V, rng)
    shares = np.array([_TAG_SHARES[t] for t in WORD_TAGS])
    tags = [WORD_TAGS[i] for i in rng.choice(len(WORD_TAGS), size=V, p=shares / shares.sum())]

    z = rng.standard_normal((V, 8))
    # frequency falls with age of acquisition; familiarity follows frequency;
    # imageability follows concreteness
    z_aoa = z[:, 0]
    z_freq = -0.6 * z_aoa + 0.8 * z[:, 1]
    z_fam = 0.5 * z_freq + math.sqrt(0.75) * z[:, 2]
    z_conc = z[:, 3]
    z_img = 0.6 * z_conc + 0.8 * z[:, 4]
    norms = np.column_stack([
        5.0 + 1.2 * z[:, 5],  # valence
        4.0 + 1.0 * z[:, 6],  # arousal
        5.0 + 1.0 * z[:, 7],  # dominance
        3.0 + 0.9 * z_conc,  # concreteness
        400.0 + 100.0 * z_img,  # imageability
        8.0 + 2.5 * z_aoa,  # aoa
        np.round(np.expm1(4.0 + 1.5 * z_freq)).clip(0),  # frequency (raw counts)
        450.0 + 90.0 * z_fam,  # familiarity
    ])
    norms = np.round(norms, 4)

    designated = [NORMS.index(d) for d in spec.signal_dims]
    # sentiment columns share one table, so they go missing together
    table_cols = [(0, 1, 2), (3,), (4,), (5,), (6,), (7,)]
    for cols in table_cols:
        if any(c in designated for c in cols):
            continue
        gone = rng.random(V) < spec.missing_rate
        for c in cols:
            norms[gone, c] = np.nan

    scores = np.empty((V, len(designated)))
    for j, (col, sign) in enumerate(zip(designated, spec.signal_signs)):
        v = np.log1p(norms[:, col]) if NORMS[col] == "frequency" else norms[:, col]
        scores[:, j] = sign * (v - v.mean()) / v.std()
    return Vocabulary(words, tags, norms, scores)


def tilted_weights(scores: np.ndarray, strength: float, min_effective: float = 30.0) -> np.ndarray:
    """Sampling weights whose weighted mean of every score column equals ``strength``.

    Solves ``E_w[scores] = strength`` for ``w ∝ exp(scores @ c)`` by Newton's
    method.  Raises :class:`SyntheticError` when the vocabulary cannot
    realise the shift or the result concentrates on too few words.
    """
    V, k = scores.shape
    if strength == 0:
        return np.full(V, 1.0 / V)
    target = np.full(k, strength)
    c = np.zeros(k)
    for _ in range(200):
        logits = scores @ c
        w = np.exp(logits - logits.max())
        w /= w.sum()
        mean = w @ scores
        gap = target - mean
        if np.max(np.abs(gap)) < 1e-10:
            break
        centred = scores - mean
        cov = (centred * w[:, None]).T @ centred
        try:
            step = np.linalg.solve(cov + 1e-12 * np.eye(k), gap)
        except np.linalg.LinAlgError as exc:
            raise SyntheticError("vocabulary too small to realise the requested shift") from exc
        c += np.clip(step, -5.0, 5.0)
        if not np.all(np.isfinite(c)):
            break
    if not np.all(np.isfinite(c)) or np.max(np.abs(gap)) > 1e-6:
        raise SyntheticError(f"vocabulary too small to realise a shift of {strength} standard deviations")
    effective = 1.0 / float(w @ w)
    if effective < min_effective:
        raise SyntheticError(f"vocabulary too small to realise a shift of {strength} standard deviations "
                             f"(tilted distribution covers only {effective:.1f} effective words)")
    return w


def _utterance_plan(spec: SyntheticSpec, rng: np.random.Generator) -> tuple[int, Optional[int]]:
    lo, hi = spec.words_per_utterance
    n_words = int(rng.integers(lo, hi + 1))
    # pause goes after word j (1 <= j <= n_words-1): never first, never final
    pause_after = int(rng.integers(1, n_words)) if rng.random() < spec.pause_prob else None
    return n_words, pause_after


def _signal_slots(n_words: int, pause_after: Optional[int], d: int) -> set[int]:
    """0-based word indices lying exactly ``d`` tokens from the pause."""
    if pause_after is None:
        return set()
    slots = set()
    if pause_after - d >= 0:
        slots.add(pause_after - d)
    if pause_after + d - 1 < n_words:
        slots.add(pause_after + d - 1)
    return slots


def generate_synthetic(spec: SyntheticSpec) -> SyntheticCorpus:
    rng = np.random.default_rng(spec.seed)
    vocab = build_vocabulary(spec, rng)
    weights = tilted_weights(vocab.scores, spec.signal_strength, spec.min_effective_words)
    uniform = np.full(len(vocab), 1.0 / len(vocab))
    cdf_uniform, cdf_tilted = np.cumsum(uniform), np.cumsum(weights)

    n_ci = int(round(spec.n_transcripts * spec.ci_fraction))
    ordered = [Label.CI] * n_ci + [Label.HC] * (spec.n_transcripts - n_ci)
    labels = [ordered[j] for j in rng.permutation(spec.n_transcripts)]

    def draw(cdf: np.ndarray) -> int:
        return min(int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right")), len(vocab) - 1)

    transcripts, chat = [], {}
    width = len(str(spec.n_transcripts))
    for i, label in enumerate(labels):
        tid = f"syn{i:0{width}d}"
        utterances, lines = [], []
        for _ in range(int(rng.integers(spec.utterances[0], spec.utterances[1] + 1))):
            n_words, pause_after = _utterance_plan(spec, rng)
            slots = _signal_slots(n_words, pause_after, spec.signal_distance) if label is Label.CI else set()
            idx = [draw(cdf_tilted if j in slots else cdf_uniform) for j in range(n_words)]
            toks, text = [], []
            for j, w in enumerate(idx):
                if pause_after is not None and j == pause_after:
                    if rng.random() < spec.filled_share:
                        form = _FILLED[int(rng.integers(len(_FILLED)))]
                        toks.append(Token(form, TokenKind.FILLED_PAUSE, pos="PAUSE"))
                        text.append("&" + form)
                    else:
                        form = _UNFILLED[int(rng.integers(len(_UNFILLED)))]
                        toks.append(Token(form, TokenKind.UNFILLED_PAUSE, pos="PAUSE"))
                        text.append(form)
                word = vocab.words[w]
                toks.append(Token(word, TokenKind.WORD, lemma=word, pos=vocab.tags[w]))
                text.append(word)
            utterances.append(make_utterance(toks))
            lines.append("*INV:\tand what else ?")
            lines.append("*PAR:\t" + " ".join(text) + " .")
        transcripts.append(Transcript(tid, f"p{i:0{width}d}", label, tuple(utterances)))
        header = ["@UTF8", "@Begin", "@Languages:\teng", "@Participants:\tPAR Participant, INV Investigator",
                  f"@Comment:\tsynthetic transcript, seed {spec.seed}"]
        chat[tid] = "\n".join(header + lines + ["@End"]) + "\n"
    return SyntheticCorpus(spec, Corpus(tuple(transcripts)), vocab, weights, chat)


# --- files ---------------------------------------------------------------------------


def _fmt(v: float) -> str:
    return repr(float(v)) if not float(v).is_integer() else str(int(v))


def lexicon_csvs(vocab: Vocabulary) -> dict[str, str]:
    """CSV text per lexicon slot, in the loaders' default ``word,value`` layout."""
    out = {}
    slot_cols = {"sentiment": (0, 1, 2), "concreteness": (3,), "imageability": (4,), "aoa": (5,),
                 "frequency": (6,), "familiarity": (7,)}
    for slot in LEXICON_SLOTS:
        cols = slot_cols[slot]
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["word", "valence", "arousal", "dominance"] if slot == "sentiment" else ["word", "value"])
        for w, row in zip(vocab.words, vocab.norms):
            vals = row[list(cols)]
            if np.isnan(vals).any():
                continue
            writer.writerow([w, *(_fmt(v) for v in vals)])
        out[slot] = buf.getvalue()
    return out


def tagdict_csv(vocab: Vocabulary) -> str:
    return "".join(f"{w},{t}\n" for w, t in zip(vocab.words, vocab.tags))


def metadata_csv(corpus: Corpus) -> str:
    rows = ["id,participant_id,label"] + [f"{t.id},{t.participant_id},{t.label.value}" for t in corpus.transcripts]
    return "\n".join(rows) + "\n"


def synthetic_files(result: SyntheticCorpus) -> dict[str, str]:
    """Relative path → text for every file of the synthetic corpus."""
    files = {f"transcripts/{tid}.cha": text for tid, text in result.chat.items()}
    files["metadata.csv"] = metadata_csv(result.corpus)
    files["tagdict.csv"] = tagdict_csv(result.vocabulary)
    for slot, text in lexicon_csvs(result.vocabulary).items():
        files[f"lexicons/{slot}.csv"] = text
    return files


def write_synthetic(result: SyntheticCorpus, out_dir: str | Path) -> dict[str, Path]:
    out_dir = Path(out_dir)
    for rel, text in synthetic_files(result).items():
        path = out_dir / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    return {
        "transcripts": out_dir / "transcripts",
        "metadata": out_dir / "metadata.csv",
        "tagdict": out_dir / "tagdict.csv",
        **{f"lexicon:{slot}": out_dir / "lexicons" / f"{slot}.csv" for slot in LEXICON_SLOTS},
    }
