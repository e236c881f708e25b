from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pausefeat.corpus import (BOUNDARY_END, BOUNDARY_START, ChatParseError, Corpus, Label, ParseConfig, PauseMarkers,
                              TokenKind, count_pauses, dumps_corpus, load_corpus, loads_corpus, parse_transcript,
                              tokenize_tier)

from .conftest import RUNNING


def surfaces(t):
    return [[tok.surface for tok in u.tokens] for u in t.utterances]


def kinds(u):
    return [tok.kind for tok in u.tokens]


def chat(*lines):
    return "@UTF8\n@Begin\n" + "".join(lines) + "@End\n"


class TestParse:
    def test_running_example(self):
        t = parse_transcript(chat(f"*PAR:\t{RUNNING}\n"), "a", "CI")
        assert surfaces(t) == [[BOUNDARY_START, "the", "boy", "is", "uh", "stealing", "a", "cookie", BOUNDARY_END]]
        assert t.utterances[0].tokens[4].kind is TokenKind.FILLED_PAUSE
        assert t.label is Label.CI

    def test_no_pause(self):
        t = parse_transcript(chat("*PAR:\tyes .\n"), "a", "HC")
        assert surfaces(t) == [[BOUNDARY_START, "yes", BOUNDARY_END]]
        assert count_pauses(t) == {"filled": 0, "unfilled": 0, "total": 0}

    def test_unfilled_pause(self):
        t = parse_transcript(chat("*PAR:\twell (.) okay .\n"), "a", "HC")
        assert surfaces(t) == [[BOUNDARY_START, "well", "(.)", "okay", BOUNDARY_END]]
        assert kinds(t.utterances[0])[2] is TokenKind.UNFILLED_PAUSE

    def test_count_pauses_two_utterances(self):
        t = parse_transcript(chat(f"*PAR:\t{RUNNING}\n", "*PAR:\twell (.) okay .\n"), "a", "HC")
        assert count_pauses(t) == {"filled": 1, "unfilled": 1, "total": 2}

    def test_three_fillers(self):
        t = parse_transcript(chat("*PAR:\t&uh the &uh dog &uh .\n"), "a", "HC")
        assert count_pauses(t) == {"filled": 3, "unfilled": 0, "total": 3}

    def test_investigator_tiers_ignored(self):
        t = parse_transcript(chat("*INV:\twhat do you see ?\n", "*PAR:\ta boy .\n", "%mor:\tdet|a n|boy .\n"), "a", "HC")
        assert surfaces(t) == [[BOUNDARY_START, "a", "boy", BOUNDARY_END]]

    def test_speakers_configurable(self):
        t = parse_transcript(chat("*INV:\twhat .\n", "*PAR:\ta boy .\n"), "a", "HC",
                             config=ParseConfig(speakers=("INV", "PAR")))
        assert len(t.utterances) == 2

    def test_annotation_stripping(self):
        toks = tokenize_tier("<the boy> [//] the Boy@o is [*] +... stealing")
        assert [t.surface for t in toks] == ["the", "boy", "the", "boy", "is", "stealing"]

    def test_filler_variants(self):
        toks = tokenize_tier("&-um &uhm &er &eh &=laughs um")
        assert [t.kind for t in toks] == [TokenKind.FILLED_PAUSE] * 5
        assert [t.surface for t in toks] == ["um", "uhm", "er", "eh", "um"]

    def test_marker_switches(self):
        cfg = ParseConfig(markers=PauseMarkers(use_filled=False))
        toks = tokenize_tier("a &uh b (.) c", cfg)
        assert [t.surface for t in toks] == ["a", "b", "(.)", "c"]

    def test_casefold(self):
        assert [t.surface for t in tokenize_tier("The BOY")] == ["the", "boy"]

    def test_continuation_lines(self):
        t = parse_transcript(chat("*PAR:\tthe boy\n\tis here .\n"), "a", "HC")
        assert surfaces(t)[0][1:-1] == ["the", "boy", "is", "here"]

    def test_malformed_header_reports_line(self):
        with pytest.raises(ChatParseError, match="line 4") as info:
            parse_transcript(chat("*PAR:\tfine .\n", "*PAR fine .\n"), "a", "HC")
        assert info.value.line == 4

    @pytest.mark.parametrize("raw", ["", "   \n", chat("*INV:\tonly the investigator .\n")])
    def test_no_utterances(self, raw):
        with pytest.raises(ChatParseError, match="no utterances"):
            parse_transcript(raw, "a", "HC")


class TestCorpus:
    def test_counts_match_tallies(self):
        ts = tuple(parse_transcript(chat("*PAR:\ta .\n"), str(i), lab) for i, lab in enumerate(["HC", "CI", "CI"]))
        assert Corpus(ts).counts == {"HC": 1, "CI": 2, "Total": 3}

    def test_json_round_trip(self):
        t = parse_transcript(chat(f"*PAR:\t{RUNNING}\n", "*PAR:\twell (.) okay .\n"), "a", "CI", "p1")
        c = Corpus((t,))
        assert loads_corpus(dumps_corpus(c)) == c

    def test_load_from_directory(self, tmp_path):
        (tmp_path / "a.cha").write_text(chat(f"*PAR:\t{RUNNING}\n"), encoding="utf-8")
        (tmp_path / "b.cha").write_text(chat("*PAR:\tyes .\n"), encoding="utf-8")
        meta = tmp_path / "meta.csv"
        meta.write_text("id,participant_id,label\na,p1,CI\nb,p1,HC\n", encoding="utf-8")
        c = load_corpus(tmp_path, meta)
        assert [t.id for t in c.transcripts] == ["a", "b"]
        assert c.counts == {"HC": 1, "CI": 1, "Total": 2}

    def test_bad_label_in_metadata(self, tmp_path):
        meta = tmp_path / "meta.csv"
        meta.write_text("id,participant_id,label\na,p1,AD\n", encoding="utf-8")
        with pytest.raises(ChatParseError, match="HC or CI"):
            load_corpus(tmp_path, meta)


chat_words = st.lists(
    st.one_of(st.sampled_from(["&uh", "&um", "(.)", "(..)", "uh", "xxx", "[//]", "<a", "b>", "Cat", "dog."]),
              st.text(alphabet="abcdefghij", min_size=1, max_size=6)),
    min_size=1, max_size=12,
)


@settings(max_examples=200, deadline=None)
@given(chat_words)
def test_words_are_never_pause_markers(words):
    markers = PauseMarkers()
    for tok in tokenize_tier(" ".join(words)):
        if tok.kind is TokenKind.WORD:
            assert tok.surface
            assert tok.surface not in markers.unfilled and tok.surface not in markers.literal_fillers


@settings(max_examples=100, deadline=None)
@given(st.lists(chat_words, min_size=1, max_size=4))
def test_parse_is_deterministic_and_round_trips(lines):
    raw = chat(*(f"*PAR:\t{' '.join(ws)} .\n" for ws in lines))
    try:
        a = parse_transcript(raw, "t", "HC")
    except ChatParseError:
        return
    b = parse_transcript(raw, "t", "HC")
    assert a == b
    for u in a.utterances:
        assert u.tokens[0].kind is TokenKind.BOUNDARY_START and u.tokens[-1].kind is TokenKind.BOUNDARY_END
        assert sum(t.is_boundary for t in u.tokens) == 2
    assert loads_corpus(dumps_corpus(Corpus((a,)))) == Corpus((a,))
