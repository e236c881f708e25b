"""Pause-centred subsequences and distance-indexed token pools."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import Corpus, Label, Token, TokenKind, Transcript, Utterance


class Context(str, Enum):
    C1 = "C1"
    C2 = "C2"
    C3 = "C3"
    UTT = "Utt"

    @property
    def radius(self) -> int | None:
        return None if self is Context.UTT else int(self.value[1])

    @classmethod
    def for_radius(cls, k: int) -> "Context":
        if k not in (1, 2, 3):
            raise ValueError(f"context radius must be 1, 2 or 3, got {k}")
        return cls(f"C{k}")


@dataclass(frozen=True)
class Subsequence:
    tokens: tuple[Token, ...]
    distances: tuple[int, ...]
    label: Label
    source: str
    context: Context

    @property
    def surfaces(self) -> tuple[str, ...]:
        return tuple(t.surface for t in self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class SubsetTable:
    subsequences: tuple[Subsequence, ...]
    context: Context

    @property
    def counts(self) -> dict[str, int]:
        tally = Counter(s.label.value for s in self.subsequences)
        return {"HC": tally.get("HC", 0), "CI": tally.get("CI", 0), "Total": len(self.subsequences)}

    def __len__(self) -> int:
        return len(self.subsequences)


def _strip_boundaries(tokens: Sequence[Token]) -> tuple[Token, ...]:
    return tuple(t for t in tokens if not t.is_boundary)


def is_final_pause_only(u: Utterance) -> bool:
    """True when the utterance's single pause sits right before the end token."""
    pauses = u.pause_positions
    return len(pauses) == 1 and pauses[0] == len(u.tokens) - 2


def eligible_pauses(u: Utterance, exclude_final_pause: bool = True) -> list[int]:
    if exclude_final_pause and is_final_pause_only(u):
        return []
    return u.pause_positions


def _windows(tokens: Sequence[Token], k: int) -> Iterable[tuple[int, int, int]]:
    for p, tok in enumerate(tokens):
        if tok.is_pause:
            yield p, max(0, p - k), min(len(tokens) - 1, p + k)


def extract_context(
    u: Utterance,
    k: int,
    label: Label = Label.HC,
    source: str = "",
    skip_boundaries: bool = False,
    exclude_final_pause: bool = True,
) -> list[Subsequence]:
    """One window of radius ``k`` per pause, clipped at the utterance edges.

    Boundary tokens occupy positions unless ``skip_boundaries`` is set.
    """
    context = Context.for_radius(k)
    if not eligible_pauses(u, exclude_final_pause):
        return []
    tokens = _strip_boundaries(u.tokens) if skip_boundaries else u.tokens
    out = []
    for p, lo, hi in _windows(tokens, k):
        out.append(
            Subsequence(tuple(tokens[lo : hi + 1]), tuple(range(lo - p, hi - p + 1)), label, source, context)
        )
    return out


def extract_utterance(
    u: Utterance,
    label: Label = Label.HC,
    source: str = "",
    skip_boundaries: bool = False,
    exclude_final_pause: bool = True,
) -> list[Subsequence]:
    """The whole utterance as one sample; distances are relative to its first pause."""
    if not eligible_pauses(u, exclude_final_pause):
        return []
    tokens = _strip_boundaries(u.tokens) if skip_boundaries else u.tokens
    first = next(i for i, t in enumerate(tokens) if t.is_pause)
    return [Subsequence(tuple(tokens), tuple(range(-first, len(tokens) - first)), label, source, Context.UTT)]


def extract_distance_tokens(
    t: Transcript,
    d: int,
    skip_boundaries: bool = False,
    exclude_final_pause: bool = True,
) -> list[tuple[Token, str]]:
    """Tokens exactly ``d`` positions before and after each pause, tagged by side."""
    if d not in (1, 2, 3):
        raise ValueError(f"distance must be 1, 2 or 3, got {d}")
    out: list[tuple[Token, str]] = []
    for u in t.utterances:
        if not eligible_pauses(u, exclude_final_pause):
            continue
        tokens = _strip_boundaries(u.tokens) if skip_boundaries else u.tokens
        for p, tok in enumerate(tokens):
            if not tok.is_pause:
                continue
            if p - d >= 0:
                out.append((tokens[p - d], "before"))
            if p + d < len(tokens):
                out.append((tokens[p + d], "after"))
    return out


def extract_subset(
    corpus: Corpus,
    context: Context | str,
    skip_boundaries: bool = False,
    exclude_final_pause: bool = True,
) -> SubsetTable:
    """Raw (not deduplicated) subset table for one context."""
    context = Context(context)
    subs: list[Subsequence] = []
    for t in corpus.transcripts:
        for u in t.utterances:
            if context is Context.UTT:
                subs.extend(extract_utterance(u, t.label, t.id, skip_boundaries, exclude_final_pause))
            else:
                subs.extend(extract_context(u, context.radius, t.label, t.id, skip_boundaries, exclude_final_pause))
    return SubsetTable(tuple(subs), context)


def dedup(table: SubsetTable) -> SubsetTable:
    """Drop surface sequences seen in both classes; keep one copy of the rest."""
    classes: dict[tuple[str, ...], set] = {}
    for s in table.subsequences:
        classes.setdefault(s.surfaces, set()).add(s.label)
    seen: set[tuple[str, ...]] = set()
    kept = []
    for s in table.subsequences:
        key = s.surfaces
        if len(classes[key]) > 1 or key in seen:
            continue
        seen.add(key)
        kept.append(s)
    return SubsetTable(tuple(kept), table.context)


def build_subsets(
    corpus: Corpus,
    contexts: Iterable[Context | str] = (Context.C1, Context.C2, Context.C3, Context.UTT),
    skip_boundaries: bool = False,
) -> dict[Context, SubsetTable]:
    return {Context(c): dedup(extract_subset(corpus, c, skip_boundaries)) for c in contexts}


# --- JSON-lines ------------------------------------------------------------


def subsequence_to_dict(s: Subsequence) -> dict:
    return {
        "surfaces": [t.surface for t in s.tokens],
        "distances": list(s.distances),
        "kinds": [t.kind.value for t in s.tokens],
        "pos": [t.pos for t in s.tokens],
        "lemmas": [t.lemma for t in s.tokens],
        "label": s.label.value,
        "source": s.source,
        "context": s.context.value,
    }


def subsequence_from_dict(d: dict) -> Subsequence:
    n = len(d["surfaces"])
    pos = d.get("pos") or [None] * n
    lemmas = d.get("lemmas") or [None] * n
    tokens = tuple(Token(d["surfaces"][i], TokenKind(d["kinds"][i]), lemmas[i], pos[i]) for i in range(n))
    return Subsequence(tokens, tuple(d["distances"]), Label(d["label"]), d["source"], Context(d["context"]))


def dumps_subset(table: SubsetTable) -> str:
    return "".join(json.dumps(subsequence_to_dict(s), ensure_ascii=False) + "\n" for s in table.subsequences)


def loads_subset(text: str, context: Context | str) -> SubsetTable:
    records = (json.loads(line) for line in text.splitlines() if line.strip())
    subs = tuple(subsequence_from_dict(r) for r in records if "_meta" not in r)
    return SubsetTable(subs, Context(context))


def write_subset(table: SubsetTable, path: str | Path) -> None:
    Path(path).write_text(dumps_subset(table), encoding="utf-8")


def read_subset(path: str | Path, context: Context | str) -> SubsetTable:
    return loads_subset(Path(path).read_text(encoding="utf-8"), context)


def subset_counts_table(subsets: dict[Context, SubsetTable], corpus: Corpus | None = None) -> list[dict]:
    """Rows shaped like a per-subset sample-count summary (HC / CI / Total)."""
    rows = []
    if corpus is not None:
        rows.append({"subset": "transcripts", **corpus.counts})
    for ctx in (Context.C1, Context.C2, Context.C3, Context.UTT):
        if ctx in subsets:
            rows.append({"subset": ctx.value, **subsets[ctx].counts})
    return rows
