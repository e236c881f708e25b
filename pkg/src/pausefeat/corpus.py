"""CHAT-style transcript parsing into a typed corpus model.

Only the main tiers of the selected speakers are read.  Each utterance is
reduced to a sequence of speech tokens (words, filled pauses, unfilled
pauses) framed by a start and an end boundary token.
"""

from __future__ import annotations

import csv
import json
import re
from collections import Counter
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional

BOUNDARY_START = "<s>"
BOUNDARY_END = "</s>"

CORPUS_FORMAT = "pausefeat-corpus"
CORPUS_VERSION = 1


class ChatParseError(ValueError):
    """Raised for malformed transcript text; carries the 1-based line number."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class TokenKind(str, Enum):
    WORD = "Word"
    FILLED_PAUSE = "FilledPause"
    UNFILLED_PAUSE = "UnfilledPause"
    BOUNDARY_START = "BoundaryStart"
    BOUNDARY_END = "BoundaryEnd"


class Label(str, Enum):
    HC = "HC"
    CI = "CI"


PAUSE_KINDS = frozenset({TokenKind.FILLED_PAUSE, TokenKind.UNFILLED_PAUSE})
BOUNDARY_KINDS = frozenset({TokenKind.BOUNDARY_START, TokenKind.BOUNDARY_END})


@dataclass(frozen=True)
class Token:
    surface: str
    kind: TokenKind
    lemma: Optional[str] = None
    pos: Optional[str] = None

    @property
    def is_pause(self) -> bool:
        return self.kind in PAUSE_KINDS

    @property
    def is_boundary(self) -> bool:
        return self.kind in BOUNDARY_KINDS

    @property
    def is_word(self) -> bool:
        return self.kind is TokenKind.WORD


@dataclass(frozen=True)
class Utterance:
    tokens: tuple[Token, ...]
    speaker: str = "PAR"

    def __post_init__(self):
        toks = self.tokens
        if len(toks) < 2 or toks[0].kind is not TokenKind.BOUNDARY_START or toks[-1].kind is not TokenKind.BOUNDARY_END:
            raise ValueError("utterance must start with <s> and end with </s>")
        if any(t.is_boundary for t in toks[1:-1]):
            raise ValueError("boundary tokens may only frame an utterance")

    @property
    def pause_positions(self) -> list[int]:
        return [i for i, t in enumerate(self.tokens) if t.is_pause]

    @property
    def words(self) -> list[Token]:
        return [t for t in self.tokens if t.is_word]


@dataclass(frozen=True)
class Transcript:
    id: str
    participant_id: str
    label: Label
    utterances: tuple[Utterance, ...]

    def tokens(self) -> Iterable[Token]:
        for u in self.utterances:
            yield from u.tokens

    @property
    def words(self) -> list[Token]:
        return [t for t in self.tokens() if t.is_word]


@dataclass(frozen=True)
class Corpus:
    transcripts: tuple[Transcript, ...]

    @property
    def counts(self) -> dict[str, int]:
        tally = Counter(t.label.value for t in self.transcripts)
        return {"HC": tally.get("HC", 0), "CI": tally.get("CI", 0), "Total": len(self.transcripts)}

    def __len__(self) -> int:
        return len(self.transcripts)

    def by_id(self, transcript_id: str) -> Transcript:
        for t in self.transcripts:
            if t.id == transcript_id:
                return t
        raise KeyError(transcript_id)


@dataclass(frozen=True)
class PauseMarkers:
    """Which surface forms count as pauses.

    ``filled_prefixes`` match CHAT filler codes (``&uh``, ``&-um``, ``&uhm``);
    ``literal_fillers`` are bare forms treated as fillers.  Either pause type
    can be switched off, in which case its markers are dropped.
    """

    filled_prefixes: tuple[str, ...] = ("uh", "um", "er", "eh")
    literal_fillers: tuple[str, ...] = ("uh", "um")
    unfilled: tuple[str, ...] = ("(.)", "(..)", "(...)")
    use_filled: bool = True
    use_unfilled: bool = True


@dataclass(frozen=True)
class ParseConfig:
    speakers: tuple[str, ...] = ("PAR",)
    markers: PauseMarkers = field(default_factory=PauseMarkers)
    pretagged: bool = False


_TIER_RE = re.compile(r"^\*([A-Za-z0-9_+\-]+):(?:\s(.*))?$")
_DEP_RE = re.compile(r"^%[A-Za-z0-9_\-]+:(?:\s.*)?$")
_BULLET_RE = re.compile(r"\x15[^\x15]*\x15")
_CODE_RE = re.compile(r"\[[^\]]*\]")
_UNTRANSCRIBED = frozenset({"xxx", "yyy", "www"})
_WORD_JUNK = str.maketrans("", "", "()^:ˈ↑↓≠")
_EDGE_PUNCT = ".,?!;\"'„‡"


def _main_tiers(raw: str) -> list[tuple[int, str, str]]:
    """Collect (line number, speaker, text) for every main tier."""
    tiers: list[tuple[int, str, str]] = []
    current: Optional[list] = None
    for lineno, line in enumerate(raw.splitlines(), start=1):
        if not line.strip():
            continue
        if line.startswith("@"):
            current = None
        elif line.startswith("*"):
            m = _TIER_RE.match(line.rstrip())
            if m is None:
                raise ChatParseError(f"malformed tier header {line[:30]!r}", lineno)
            current = [lineno, m.group(1), m.group(2) or ""]
            tiers.append(current)  # type: ignore[arg-type]
        elif line.startswith("%"):
            if _DEP_RE.match(line.rstrip()) is None:
                raise ChatParseError(f"malformed dependent tier {line[:30]!r}", lineno)
            current = None
        elif line[0] in " \t":
            if current is not None:
                current[2] += " " + line.strip()
        else:
            raise ChatParseError(f"unrecognised line {line[:30]!r}", lineno)
    return [(n, spk, text) for n, spk, text in tiers]


def _classify(raw_tok: str, config: ParseConfig) -> Optional[Token]:
    markers = config.markers
    if raw_tok in markers.unfilled:
        return Token(raw_tok, TokenKind.UNFILLED_PAUSE, pos="PAUSE") if markers.use_unfilled else None
    pos = None
    if config.pretagged and "/" in raw_tok:
        raw_tok, _, pos = raw_tok.rpartition("/")
        pos = pos.upper() or None
    if raw_tok.startswith("+") or raw_tok.startswith("0"):
        return None
    if raw_tok.startswith("&"):
        body = raw_tok[1:].lstrip("-").lower()
        if raw_tok.startswith("&=") or raw_tok.startswith("&+"):
            return None
        if any(body.startswith(p) for p in markers.filled_prefixes):
            return Token(body, TokenKind.FILLED_PAUSE, pos="PAUSE") if markers.use_filled else None
        return None
    word = raw_tok.split("@", 1)[0].translate(_WORD_JUNK).strip(_EDGE_PUNCT).lower()
    if not word or not any(ch.isalnum() for ch in word) or word in _UNTRANSCRIBED:
        return None
    if word in markers.literal_fillers:
        return Token(word, TokenKind.FILLED_PAUSE, pos="PAUSE") if markers.use_filled else None
    return Token(word, TokenKind.WORD, pos=pos)


def tokenize_tier(text: str, config: ParseConfig = ParseConfig()) -> list[Token]:
    """Strip CHAT annotation from one tier's text and classify its tokens."""
    text = _BULLET_RE.sub(" ", text)
    text = _CODE_RE.sub(" ", text)
    text = text.replace("<", " ").replace(">", " ")
    out = []
    for raw_tok in text.split():
        tok = _classify(raw_tok, config)
        if tok is not None:
            out.append(tok)
    return out


def make_utterance(tokens: Iterable[Token], speaker: str = "PAR") -> Utterance:
    body = tuple(tokens)
    return Utterance(
        (Token(BOUNDARY_START, TokenKind.BOUNDARY_START, pos="BOUNDARY"),)
        + body
        + (Token(BOUNDARY_END, TokenKind.BOUNDARY_END, pos="BOUNDARY"),),
        speaker,
    )


def parse_transcript(
    raw: str,
    id: str,
    label: Label | str,
    participant_id: Optional[str] = None,
    config: ParseConfig = ParseConfig(),
) -> Transcript:
    """Parse one CHAT transcript.

    Utterances left with no speech tokens after annotation stripping are
    dropped.  Raises :class:`ChatParseError` on malformed tier headers or
    when nothing usable remains.
    """
    if not raw.strip():
        raise ChatParseError("no utterances")
    utterances = []
    for _, speaker, text in _main_tiers(raw):
        if speaker not in config.speakers:
            continue
        toks = tokenize_tier(text, config)
        if toks:
            utterances.append(make_utterance(toks, speaker))
    if not utterances:
        raise ChatParseError("no utterances")
    return Transcript(id, participant_id or id, Label(label), tuple(utterances))


def count_pauses(t: Transcript) -> dict[str, int]:
    filled = unfilled = 0
    for tok in t.tokens():
        if tok.kind is TokenKind.FILLED_PAUSE:
            filled += 1
        elif tok.kind is TokenKind.UNFILLED_PAUSE:
            unfilled += 1
    return {"filled": filled, "unfilled": unfilled, "total": filled + unfilled}


def read_metadata(path: str | Path) -> list[dict[str, str]]:
    """Read the ``id,participant_id,label`` metadata CSV."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(line for line in fh if not line.startswith("#"))
        missing = {"id", "participant_id", "label"} - set(reader.fieldnames or ())
        if missing:
            raise ChatParseError(f"metadata {path} lacks columns {sorted(missing)}")
        for i, row in enumerate(reader, start=2):
            if row["label"] not in ("HC", "CI"):
                raise ChatParseError(f"label must be HC or CI, got {row['label']!r}", i)
            rows.append({k: row[k].strip() for k in ("id", "participant_id", "label")})
    return rows


def load_corpus(directory: str | Path, metadata: str | Path, config: ParseConfig = ParseConfig()) -> Corpus:
    directory = Path(directory)
    transcripts = []
    for row in read_metadata(metadata):
        path = directory / f"{row['id']}.cha"
        try:
            raw = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ChatParseError(f"cannot read {path}: {exc}") from exc
        try:
            transcripts.append(parse_transcript(raw, row["id"], row["label"], row["participant_id"], config))
        except ChatParseError as exc:
            raise ChatParseError(f"{path.name}: {exc}") from exc
    return Corpus(tuple(transcripts))


# --- canonical JSON --------------------------------------------------------


def _token_to_dict(t: Token) -> dict:
    return {"surface": t.surface, "kind": t.kind.value, "lemma": t.lemma, "pos": t.pos}


def corpus_to_dict(corpus: Corpus) -> dict:
    return {
        "format": CORPUS_FORMAT,
        "version": CORPUS_VERSION,
        "counts": corpus.counts,
        "transcripts": [
            {
                "id": t.id,
                "participant_id": t.participant_id,
                "label": t.label.value,
                "utterances": [
                    {"speaker": u.speaker, "tokens": [_token_to_dict(tok) for tok in u.tokens]}
                    for u in t.utterances
                ],
            }
            for t in corpus.transcripts
        ],
    }


def corpus_from_dict(data: dict) -> Corpus:
    if data.get("format") != CORPUS_FORMAT:
        raise ValueError("not a corpus document")
    if data.get("version") != CORPUS_VERSION:
        raise ValueError(f"unsupported corpus version {data.get('version')}")
    transcripts = []
    for t in data["transcripts"]:
        utts = tuple(
            Utterance(
                tuple(Token(d["surface"], TokenKind(d["kind"]), d["lemma"], d["pos"]) for d in u["tokens"]),
                u["speaker"],
            )
            for u in t["utterances"]
        )
        transcripts.append(Transcript(t["id"], t["participant_id"], Label(t["label"]), utts))
    return Corpus(tuple(transcripts))


def dumps_corpus(corpus: Corpus) -> str:
    return json.dumps(corpus_to_dict(corpus), ensure_ascii=False, separators=(",", ":"))


def loads_corpus(text: str) -> Corpus:
    return corpus_from_dict(json.loads(text))


def map_tokens(corpus: Corpus, fn) -> Corpus:
    """Return a corpus with ``fn(token)`` applied to every token."""
    return Corpus(
        tuple(
            replace(t, utterances=tuple(replace(u, tokens=tuple(fn(tok) for tok in u.tokens)) for u in t.utterances))
            for t in corpus.transcripts
        )
    )
