"""Token-level psycholinguistic features.

A word token becomes 18 numbers (two length measures plus eight lexicon
norms, each looked up for the surface form and again for its lemma) and a
part-of-speech index.  Pauses and boundary tokens keep only their tag; their
numeric part is all zeros.
"""

from __future__ import annotations

import csv
import json
import math
import re
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Mapping, Optional, Protocol, Sequence

import numpy as np

from .corpus import Corpus, Token, TokenKind, Transcript, Utterance

TAGS: tuple[str, ...] = (
    "NOUN", "VERB", "ADJ", "ADV", "PRON", "DET", "ADP", "CONJ", "NUM", "INTJ", "OTHER", "PAUSE", "BOUNDARY",
)
WORD_TAGS: tuple[str, ...] = TAGS[:11]
TAG_INDEX = {t: i for i, t in enumerate(TAGS)}

NORMS: tuple[str, ...] = (
    "valence", "arousal", "dominance", "concreteness", "imageability", "aoa", "frequency", "familiarity",
)
FEATURE_NAMES: tuple[str, ...] = (
    "letters", "syllables",
    "valence", "arousal", "dominance", "valence_lemma", "arousal_lemma", "dominance_lemma",
    "concreteness", "concreteness_lemma", "imageability", "imageability_lemma",
    "aoa", "aoa_lemma", "frequency", "frequency_lemma", "familiarity", "familiarity_lemma",
)
N_NUMERIC = len(FEATURE_NAMES)

# (norm index, is_lemma) for columns 2..17 of the numeric vector
_LAYOUT: tuple[tuple[int, bool], ...] = (
    (0, False), (1, False), (2, False), (0, True), (1, True), (2, True),
    (3, False), (3, True), (4, False), (4, True), (5, False), (5, True),
    (6, False), (6, True), (7, False), (7, True),
)

# --- lexicon tables ----------------------------------------------------------

TRANSFORMS: dict[str, Callable[[float], float]] = {
    "identity": lambda v: v,
    "log1p": math.log1p,
}


@dataclass(frozen=True)
class LexiconTable:
    name: str
    columns: tuple[str, ...]
    values: Mapping[str, tuple[float, ...]]
    transform: str = "identity"
    source: str = ""

    def get(self, word: str) -> Optional[tuple[float, ...]]:
        return self.values.get(word)

    def coverage(self, words: Iterable[str]) -> dict[str, float]:
        words = list(words)
        hits = sum(1 for w in words if w in self.values)
        return {"tokens": len(words), "hits": hits, "rate": hits / len(words) if words else float("nan")}

    def to_metadata(self) -> dict:
        return {"name": self.name, "columns": list(self.columns), "entries": len(self.values),
                "transform": self.transform, "source": self.source}


# Expected headers of the published norm files.  Override word_col/value_cols
# when a distribution differs.
PUBLISHED_FORMATS: dict[str, dict] = {
    "warriner": {"word_col": "Word", "value_cols": ("V.Mean.Sum", "A.Mean.Sum", "D.Mean.Sum")},
    "brysbaert_concreteness": {"word_col": "Word", "value_cols": ("Conc.M",)},
    "kuperman_aoa": {"word_col": "Word", "value_cols": ("Rating.Mean",)},
    "bristol_imageability": {"word_col": "WORD", "value_cols": ("IMG",)},
    "bristol_familiarity": {"word_col": "WORD", "value_cols": ("FAM",)},
    "coca_frequency": {"word_col": "word", "value_cols": ("freq",), "transform": "log1p"},
}


def _parse_float(text: str) -> Optional[float]:
    try:
        v = float(text)
    except (TypeError, ValueError):
        return None
    return v if math.isfinite(v) else None


def load_lexicon_csv(
    path: str | Path,
    name: str,
    word_col: str = "word",
    value_cols: Sequence[str] | None = None,
    transform: str = "identity",
) -> LexiconTable:
    """Load a word-to-value table.

    The default layout is ``word,value[,value2,value3]``.  Lines starting with
    ``#`` are comments.  Keys are lowercased; rows with a non-finite value are
    skipped; the first occurrence of a word wins.
    """
    fn = TRANSFORMS[transform]
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    header = reader.fieldnames or []
    if value_cols is None:
        value_cols = [c for c in header if c != word_col]
    missing = [c for c in (word_col, *value_cols) if c not in header]
    if missing:
        raise ValueError(f"{path}: missing columns {missing}")
    values: dict[str, tuple[float, ...]] = {}
    for row in reader:
        word = (row[word_col] or "").strip().lower()
        if not word or word in values:
            continue
        parsed = [_parse_float(row[c]) for c in value_cols]
        if any(v is None for v in parsed):
            continue
        values[word] = tuple(fn(v) for v in parsed)
    return LexiconTable(name, tuple(value_cols), values, transform, str(path))


def load_published(path: str | Path, fmt: str, name: str | None = None) -> LexiconTable:
    spec = dict(PUBLISHED_FORMATS[fmt])
    return load_lexicon_csv(path, name or fmt, **spec)


@dataclass
class Lexicons:
    """The eight norms used for token vectors, one table (or column) each."""

    sentiment: Optional[LexiconTable] = None  # valence, arousal, dominance
    concreteness: Optional[LexiconTable] = None
    imageability: Optional[LexiconTable] = None
    aoa: Optional[LexiconTable] = None
    frequency: Optional[LexiconTable] = None
    familiarity: Optional[LexiconTable] = None
    _memo: dict = field(default_factory=dict, repr=False, compare=False)

    def norms(self, word: str) -> np.ndarray:
        """Values for the eight norms (NaN where a table has no entry)."""
        cached = self._memo.get(word)
        if cached is not None:
            return cached
        out = np.full(len(NORMS), np.nan)
        if self.sentiment is not None and (v := self.sentiment.get(word)) is not None:
            out[0:3] = v[:3]
        for i, table in enumerate(
            (self.concreteness, self.imageability, self.aoa, self.frequency, self.familiarity), start=3
        ):
            if table is not None and (v := table.get(word)) is not None:
                out[i] = v[0]
        out.setflags(write=False)
        self._memo[word] = out
        return out

    def tables(self) -> dict[str, Optional[LexiconTable]]:
        return {
            "sentiment": self.sentiment, "concreteness": self.concreteness, "imageability": self.imageability,
            "aoa": self.aoa, "frequency": self.frequency, "familiarity": self.familiarity,
        }

    def metadata(self) -> dict:
        return {k: (t.to_metadata() if t else None) for k, t in self.tables().items()}


LEXICON_SLOTS = ("sentiment", "concreteness", "imageability", "aoa", "frequency", "familiarity")


def load_lexicons(paths: Mapping[str, str | Path], transforms: Mapping[str, str] | None = None) -> Lexicons:
    """Load tables given as ``{slot: csv path}``; frequency defaults to log1p."""
    transforms = dict(transforms or {})
    kwargs = {}
    for slot, path in paths.items():
        if slot not in LEXICON_SLOTS:
            raise ValueError(f"unknown lexicon slot {slot!r}")
        transform = transforms.get(slot, "log1p" if slot == "frequency" else "identity")
        kwargs[slot] = load_lexicon_csv(path, slot, transform=transform)
    return Lexicons(**kwargs)


def bundled_lexicons() -> Lexicons:
    """Small illustrative tables shipped with the package (not the published norms)."""
    base = resources.files("pausefeat") / "data" / "lexicons"
    with resources.as_file(base) as d:
        return load_lexicons({slot: Path(d) / f"{slot}.csv" for slot in LEXICON_SLOTS})


# --- word shape ----------------------------------------------------------------

_VOWELS = set("aeiouy")


def letter_count(word: str) -> int:
    return sum(1 for ch in word if ch.isalpha())


def syllable_count(word: str) -> int:
    """Vowel groups, minus a final silent ``e``; at least 1 for any letter string."""
    letters = "".join(ch for ch in word.lower() if ch.isalpha())
    if not letters:
        return 0
    groups = len(re.findall(r"[aeiouy]+", letters))
    if (
        groups > 1
        and letters.endswith("e")
        and letters[-2] not in _VOWELS
        and not (letters.endswith("le") and len(letters) > 2 and letters[-3] not in _VOWELS)
    ):
        groups -= 1
    return max(groups, 1)


# --- lemmatizer ----------------------------------------------------------------

_LEMMA_EXCEPTIONS = {
    "is": "be", "are": "be", "was": "be", "were": "be", "am": "be", "been": "be", "being": "be", "'s": "be",
    "has": "have", "had": "have", "having": "have", "does": "do", "did": "do", "done": "do", "doing": "do",
    "went": "go", "gone": "go", "goes": "go", "going": "go", "children": "child", "men": "man",
    "women": "woman", "feet": "foot", "teeth": "tooth", "mice": "mouse", "people": "person",
    "fell": "fall", "fallen": "fall", "saw": "see", "seen": "see", "took": "take", "taken": "take",
    "got": "get", "gotten": "get", "made": "make", "said": "say", "came": "come", "ran": "run", "sat": "sit",
    "stood": "stand", "knew": "know", "known": "know", "thought": "think", "told": "tell", "gave": "give",
    "given": "give", "ate": "eat", "eaten": "eat", "wrote": "write", "written": "write", "broke": "break",
    "broken": "break", "cookies": "cookie", "used": "use", "using": "use", "held": "hold", "left": "leave",
    "felt": "feel", "kept": "keep", "found": "find", "brought": "bring", "bought": "buy", "caught": "catch",
    "taught": "teach", "spilt": "spill", "dried": "dry", "tried": "try", "lying": "lie", "dying": "die",
    "better": "good", "best": "good", "worse": "bad", "worst": "bad", "hers": "her", "ours": "our",
    "yours": "your", "theirs": "their", "curtains": "curtain", "dishes": "dish",
}
_LEMMA_PROTECTED = frozenset({
    "this", "his", "its", "thus", "yes", "always", "perhaps", "news", "series", "species", "various",
    "something", "nothing", "anything", "everything", "thing", "morning", "evening", "ceiling", "during",
    "bring", "king", "ring", "sing", "spring", "string", "wing", "swing", "sting", "ping", "icing",
    "speed", "hundred", "indeed", "sled", "bed", "red", "shed", "wed", "fed", "bled", "bred", "led",
    "towel", "cookie", "as", "us", "gas", "bus", "plus", "does", "less", "unless", "sometimes",
    "outside", "inside", "stairs", "pants", "scissors", "glasses", "clothes", "dishes",
})


def _has_vowel(s: str) -> bool:
    return any(ch in _VOWELS for ch in s)


def _restore_e(stem: str) -> str:
    # Monosyllabic consonant-vowel-consonant stems regain a silent e (mak -> make).
    if (
        len(stem) >= 3
        and stem[-1] not in _VOWELS and stem[-1] not in "wx"
        and stem[-2] in "aeiou"
        and stem[-3] not in _VOWELS
        and len(re.findall(r"[aeiouy]+", stem)) == 1
    ):
        return stem + "e"
    return stem


def _undouble(stem: str) -> Optional[str]:
    if len(stem) >= 3 and stem[-1] == stem[-2] and stem[-1] in "bdgmnprt":
        return stem[:-1]
    return None


def _lemma_step(w: str) -> str:
    if w.endswith("ies") and len(w) > 4:
        return w[:-3] + "y"
    if w.endswith("es") and len(w) > 4 and (w[:-2].endswith(("s", "x", "z", "ch", "sh"))):
        return w[:-2]
    if w.endswith("s") and len(w) > 3 and not w.endswith(("ss", "us", "is", "'s")):
        return w[:-1]
    if w.endswith("ied") and len(w) > 4:
        return w[:-3] + "y"
    for suffix in ("ing", "ed"):
        if w.endswith(suffix):
            stem = w[: -len(suffix)]
            if len(stem) < 3 or not _has_vowel(stem):
                return w
            undone = _undouble(stem)
            return undone if undone is not None else _restore_e(stem)
    return w


def lemmatize(word: str) -> str:
    """Rule-based English lemma: exception table, then suffix rules to a fixed point."""
    w = word.lower()
    for _ in range(len(w) + 1):
        if w in _LEMMA_EXCEPTIONS:
            return _LEMMA_EXCEPTIONS[w]
        if w in _LEMMA_PROTECTED or w in _LEMMA_TERMINAL:
            return w
        nxt = _lemma_step(w)
        if nxt == w:
            return w
        w = nxt
    return w


_LEMMA_TERMINAL = frozenset(_LEMMA_EXCEPTIONS.values())


# --- part of speech ------------------------------------------------------------


class Tagger(Protocol):
    def tag_words(self, words: Sequence[Token]) -> list[str]: ...


def _load_tagdict(path) -> dict[str, str]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            word, _, tag = line.partition(",")
            tag = tag.strip().upper()
            if tag not in WORD_TAGS:
                raise ValueError(f"{path}: unknown tag {tag!r} for {word!r}")
            out.setdefault(word.strip().lower(), tag)
    return out


_SUFFIX_RULES = (
    ("ly", "ADV"), ("ing", "VERB"), ("ed", "VERB"),
    ("tion", "NOUN"), ("sion", "NOUN"), ("ment", "NOUN"), ("ness", "NOUN"), ("ity", "NOUN"),
    ("ous", "ADJ"), ("ful", "ADJ"), ("ive", "ADJ"), ("able", "ADJ"), ("ible", "ADJ"), ("less", "ADJ"),
    ("ish", "ADJ"), ("ic", "ADJ"),
)


class LexiconTagger:
    """Most-frequent-tag dictionary with suffix heuristics for unknown words."""

    def __init__(self, extra: Mapping[str, str] | None = None, use_bundled: bool = True):
        self.table: dict[str, str] = {}
        if use_bundled:
            with resources.as_file(resources.files("pausefeat") / "data" / "tagdict.csv") as p:
                self.table.update(_load_tagdict(p))
        if extra:
            self.table.update({k.lower(): v.upper() for k, v in extra.items()})

    @classmethod
    def from_files(cls, paths: Iterable[str | Path], use_bundled: bool = True) -> "LexiconTagger":
        extra: dict[str, str] = {}
        for p in paths:
            extra.update(_load_tagdict(p))
        return cls(extra, use_bundled)

    def tag_word(self, word: str) -> str:
        if word in self.table:
            return self.table[word]
        if word.replace(".", "", 1).isdigit():
            return "NUM"
        lemma = lemmatize(word)
        if lemma in self.table:
            return self.table[lemma]
        for suffix, tag in _SUFFIX_RULES:
            if word.endswith(suffix) and len(word) > len(suffix) + 2:
                return tag
        return "NOUN"

    def tag_words(self, words: Sequence[Token]) -> list[str]:
        return [self.tag_word(t.surface) for t in words]


class PretaggedTagger:
    """Keeps tags supplied with the input (``word/TAG``); unknown tags become OTHER."""

    def tag_words(self, words: Sequence[Token]) -> list[str]:
        return [t.pos if t.pos in WORD_TAGS else "OTHER" for t in words]


def pos_tag(u: Utterance, tagger: Tagger) -> Utterance:
    """Set ``pos`` (and ``lemma`` for words) on every token of an utterance."""
    words = [t for t in u.tokens if t.is_word]
    tags = iter(tagger.tag_words(words))
    out = []
    for t in u.tokens:
        if t.is_pause:
            out.append(replace(t, pos="PAUSE"))
        elif t.is_boundary:
            out.append(replace(t, pos="BOUNDARY"))
        else:
            out.append(replace(t, pos=next(tags), lemma=t.lemma or lemmatize(t.surface)))
    return replace(u, tokens=tuple(out))


def annotate_corpus(corpus: Corpus, tagger: Tagger) -> Corpus:
    return Corpus(
        tuple(replace(t, utterances=tuple(pos_tag(u, tagger) for u in t.utterances)) for t in corpus.transcripts)
    )


# --- vectors -------------------------------------------------------------------


@dataclass(frozen=True)
class TokenVector:
    numeric: np.ndarray  # shape (18,)
    pos_id: int


@dataclass(frozen=True)
class NormalizationStats:
    mean: np.ndarray
    std: np.ndarray
    constant: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist(), "constant": list(self.constant)}

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationStats":
        return cls(np.asarray(d["mean"], float), np.asarray(d["std"], float), tuple(d["constant"]))


def raw_features(token: Token, lexicons: Lexicons) -> np.ndarray:
    """Un-imputed, un-normalised numeric vector (NaN marks a missing norm)."""
    out = np.zeros(N_NUMERIC)
    if not token.is_word:
        return out
    out[0] = letter_count(token.surface)
    out[1] = syllable_count(token.surface)
    surf = lexicons.norms(token.surface)
    lem = lexicons.norms(token.lemma or lemmatize(token.surface))
    for col, (norm, is_lemma) in enumerate(_LAYOUT, start=2):
        out[col] = (lem if is_lemma else surf)[norm]
    return out


def pos_id(token: Token) -> int:
    if token.is_pause:
        return TAG_INDEX["PAUSE"]
    if token.is_boundary:
        return TAG_INDEX["BOUNDARY"]
    return TAG_INDEX.get(token.pos or "OTHER", TAG_INDEX["OTHER"])


def token_matrix(tokens: Sequence[Token], lexicons: Lexicons) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Raw numeric rows, POS ids and a word mask for a token sequence."""
    raw = np.zeros((len(tokens), N_NUMERIC))
    ids = np.zeros(len(tokens), dtype=np.int64)
    is_word = np.zeros(len(tokens), dtype=bool)
    for i, tok in enumerate(tokens):
        raw[i] = raw_features(tok, lexicons)
        ids[i] = pos_id(tok)
        is_word[i] = tok.is_word
    return raw, ids, is_word


def fit_normalization(word_rows: np.ndarray) -> NormalizationStats:
    """Means over observed values, then population std after mean imputation."""
    word_rows = np.asarray(word_rows, float).reshape(-1, N_NUMERIC)
    observed = ~np.isnan(word_rows)
    counts = observed.sum(axis=0)
    sums = np.where(observed, word_rows, 0.0).sum(axis=0)
    mean = np.divide(sums, counts, out=np.zeros(N_NUMERIC), where=counts > 0)
    imputed = np.where(observed, word_rows, mean)
    std = imputed.std(axis=0) if len(imputed) else np.zeros(N_NUMERIC)
    # identical floats can leave rounding noise in std
    varies = std > 1e-12 * np.maximum(1.0, np.abs(mean))
    constant = tuple(FEATURE_NAMES[i] for i in np.flatnonzero(~varies))
    return NormalizationStats(mean, np.where(varies, std, 1.0), constant)


def finalize(raw: np.ndarray, is_word: np.ndarray, stats: Optional[NormalizationStats], normalize: bool) -> np.ndarray:
    """Impute word rows with ``stats.mean`` and optionally z-score them.

    Non-word rows are returned as exact zeros.  Without stats the raw values
    (NaN included) come back untouched.
    """
    if normalize and stats is None:
        raise ValueError("normalization requested without NormalizationStats")
    out = np.array(raw, dtype=float, copy=True)
    if stats is None:
        return out
    w = np.asarray(is_word, bool)
    rows = out[w]
    rows = np.where(np.isnan(rows), stats.mean, rows)
    if normalize:
        rows = (rows - stats.mean) / stats.std
    out[w] = rows
    out[~w] = 0.0
    return out


def vectorize(
    token: Token,
    lexicons: Lexicons,
    stats: Optional[NormalizationStats] = None,
    normalize: bool = False,
) -> TokenVector:
    raw = raw_features(token, lexicons)[None, :]
    numeric = finalize(raw, np.array([token.is_word]), stats, normalize)[0]
    return TokenVector(numeric, pos_id(token))


# --- vector cache --------------------------------------------------------------

VECTOR_CACHE_FORMAT = "pausefeat-vectors"
VECTOR_CACHE_VERSION = 1


def write_vector_cache(path: str | Path, rows: Iterable[tuple[str, TokenVector]]) -> None:
    """JSON-lines: a header line, then one ``{surface, numeric, pos_id}`` per token."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"format": VECTOR_CACHE_FORMAT, "version": VECTOR_CACHE_VERSION,
                             "features": list(FEATURE_NAMES), "tags": list(TAGS)}) + "\n")
        for surface, vec in rows:
            numeric = [None if math.isnan(v) else float(v) for v in vec.numeric]
            fh.write(json.dumps({"surface": surface, "numeric": numeric, "pos_id": int(vec.pos_id)}) + "\n")


def read_vector_cache(path: str | Path) -> list[tuple[str, TokenVector]]:
    with open(path, encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        if header.get("format") != VECTOR_CACHE_FORMAT or header.get("version") != VECTOR_CACHE_VERSION:
            raise ValueError(f"{path}: unsupported vector cache header {header}")
        out = []
        for line in fh:
            d = json.loads(line)
            numeric = np.array([np.nan if v is None else v for v in d["numeric"]], float)
            out.append((d["surface"], TokenVector(numeric, d["pos_id"])))
    return out
