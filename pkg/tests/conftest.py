from __future__ import annotations

import numpy as np
import pytest

from pausefeat.corpus import Corpus, Label, Transcript, Token, TokenKind, make_utterance, parse_transcript, tokenize_tier
from pausefeat.lexicon import LexiconTable, LexiconTagger, Lexicons, annotate_corpus

RUNNING = "the boy is &uh stealing a cookie ."


def utt(text: str, speaker: str = "PAR"):
    """Tagged utterance from CHAT tier text."""
    u = make_utterance(tokenize_tier(text), speaker)
    t = Transcript("x", "x", Label.HC, (u,))
    return annotate_corpus(Corpus((t,)), LexiconTagger()).transcripts[0].utterances[0]


def transcript(*lines: str, id: str = "t", label: str = "HC", participant: str | None = None) -> Transcript:
    raw = "@Begin\n" + "".join(f"*PAR:\t{line}\n" for line in lines) + "@End\n"
    t = parse_transcript(raw, id, label, participant)
    return annotate_corpus(Corpus((t,)), LexiconTagger()).transcripts[0]


def word(surface: str, pos: str | None = None, lemma: str | None = None) -> Token:
    return Token(surface, TokenKind.WORD, lemma, pos)


def rel_error(analytic, numeric, floor: float = 1e-6) -> np.ndarray:
    """Elementwise relative error; the floor keeps near-zero entries from amplifying difference noise."""
    a, n = np.asarray(analytic), np.asarray(numeric)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def table(name: str, mapping: dict[str, float]) -> LexiconTable:
    return LexiconTable(name, ("value",), {k: (float(v),) for k, v in mapping.items()})


@pytest.fixture
def running_transcript() -> Transcript:
    return transcript(RUNNING)


@pytest.fixture
def small_lexicons() -> Lexicons:
    return Lexicons(
        sentiment=LexiconTable("sentiment", ("valence", "arousal", "dominance"),
                               {"boy": (6.0, 4.0, 5.0), "cookie": (7.0, 5.0, 6.0)}),
        concreteness=table("concreteness", {"boy": 4.8, "cookie": 5.0, "steal": 2.5}),
        imageability=table("imageability", {"boy": 600, "cookie": 620}),
        aoa=table("aoa", {"boy": 3.0, "cookie": 2.5, "stealing": 6.0, "steal": 5.5}),
        frequency=table("frequency", {"boy": np.log1p(5000), "the": np.log1p(100000)}),
        familiarity=table("familiarity", {"boy": 590}),
    )


# --- acceptance reporting -------------------------------------------------------------

_criteria: dict[str, list[str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion a test belongs to")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    results = _criteria.setdefault(mark.args[0], [])
    if rep.when == "call" or rep.failed:
        results.append(rep.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcomes in _criteria.items():
        verdict = "PASS" if outcomes and all(o == "passed" for o in outcomes) else "FAIL"
        terminalreporter.write_line(f"{verdict}  {name}")
