import random

import pytest

from duplexpersona.annotate import (
    annotate_document,
    assign_candidate_labels,
    build_responses,
    detect_overlaps,
    integrate_laughs,
)
from duplexpersona.core import (
    Conversation,
    LaughEvent,
    OverlapKind,
    Response,
    ResponseLabel,
    Token,
    TokenKind,
    WordToken,
)
from duplexpersona.synth import brute_force_labels, brute_force_overlaps, brute_force_segments, generate_conversation


def W(text, s, e, spk="A"):
    return WordToken(text, s, e, spk)


def rendered(tokens):
    return " ".join(t.render() for t in tokens)


def span(rid, spk, s, e):
    return Response(rid, spk, (Token.word(W("x", s, e, spk)),))


# --- laughs -------------------------------------------------------------------


def test_laugh_over_words_wraps_them():
    words = [W("well", 4.0, 4.6), W("come", 5.1, 5.4), W("on", 5.5, 5.9), W("then", 6.2, 6.5)]
    out = integrate_laughs(words, [LaughEvent(5.0, 6.0, "A")])
    assert rendered(out) == "well [StartLaugh] come on [EndLaugh] then"


def test_laugh_without_words_is_standalone():
    words = [W("so", 7.0, 7.5), W("yes", 9.2, 9.5)]
    out = integrate_laughs(words, [LaughEvent(8.0, 9.0, "A")])
    assert rendered(out) == "so [Laughter] yes"
    lg = out[1]
    assert (lg.kind, lg.start_s, lg.end_s) == (TokenKind.LAUGHTER, 8.0, 9.0)


def test_no_laughs_is_identity():
    words = [W("a", 0, 1), W("b", 1, 2)]
    assert [t.text for t in integrate_laughs(words, [])] == ["a", "b"]


def test_touching_laugh_does_not_intersect():
    # shared endpoints are not an intersection
    out = integrate_laughs([W("a", 1.0, 2.0)], [LaughEvent(2.0, 3.0, "A")])
    assert rendered(out) == "a [Laughter]"


def _check_pairs(tokens):
    depth = 0
    for t in tokens:
        if t.kind is TokenKind.START_LAUGH:
            depth += 1
        elif t.kind is TokenKind.END_LAUGH:
            depth -= 1
            assert depth >= 0
    assert depth == 0


def _random_channel(rng):
    words, t = [], rng.uniform(0, 1)
    for i in range(rng.randint(0, 15)):
        d = rng.uniform(0.05, 0.6)
        words.append(W(f"w{i}", round(t, 3), round(t + d, 3)))
        t += d + rng.choice([0.0, rng.uniform(0, 1.5)])
    laughs = []
    for _ in range(rng.randint(0, 4)):
        s = rng.uniform(0, t + 1)
        laughs.append(LaughEvent(round(s, 3), round(s + rng.uniform(0.01, 2.0), 3), "A"))
    return words, laughs


def test_laugh_pairing_fuzz():
    rng = random.Random(5)
    for _ in range(1000):
        words, laughs = _random_channel(rng)
        out = integrate_laughs(words, laughs)
        _check_pairs(out)
        assert [t.text for t in out if t.is_word] == [w.text for w in words]
        assert sum(t.kind is TokenKind.LAUGHTER for t in out) + sum(t.kind is TokenKind.START_LAUGH for t in out) == len(laughs)
        for r in build_responses(out, 0.7):
            _check_pairs(r.tokens)


# --- segmentation ----------------------------------------------------------------


def test_short_gap_merges():
    toks = [Token.word(W("a", 0.0, 0.5)), Token.word(W("b", 0.9, 1.2))]
    rs = build_responses(toks, 0.7)
    assert len(rs) == 1 and (rs[0].start_s, rs[0].end_s) == (0.0, 1.2)


def test_long_gap_splits():
    toks = [Token.word(W("a", 0.0, 0.5)), Token.word(W("b", 1.3, 1.6))]
    assert len(build_responses(toks, 0.7)) == 2


def test_gap_equal_to_threshold_splits():
    toks = [Token.word(W("a", 0.0, 0.3)), Token.word(W("b", 1.0, 1.6))]
    assert len(build_responses(toks, 0.7)) == 2
    toks = [Token.word(W("a", 0.0, 0.3)), Token.word(W("b", 0.999, 1.6))]
    assert len(build_responses(toks, 0.7)) == 1


def test_empty_input():
    assert build_responses([], 0.7) == []


def test_segmentation_matches_scan_oracle():
    rng = random.Random(3)
    for _ in range(50):
        toks, t = [], 0
        for i in range(200):
            t += rng.choice([0, rng.randint(0, 1400), 700, 699])
            d = rng.randint(0, 600)
            toks.append(Token.word(W(f"w{i}", t / 1000, (t + d) / 1000)))
            t += d
        got = build_responses(toks, 0.7)
        groups = brute_force_segments(toks, 0.7)
        assert [[x.text for x in r.tokens] for r in got] == [[toks[i].text for i in g] for g in groups]


def test_split_laugh_pair_is_repaired():
    words = [W("a", 0.0, 0.5), W("b", 2.0, 2.5)]
    toks = integrate_laughs(words, [LaughEvent(0.2, 2.2, "A")])
    rs = build_responses(toks, 0.7)
    assert [r.text for r in rs] == ["[StartLaugh] a [EndLaugh]", "[StartLaugh] b [EndLaugh]"]


# --- overlaps ----------------------------------------------------------------------


def test_partial_overlap():
    (ann,) = detect_overlaps([span("A-0", "A", 0, 3)], [span("B-0", "B", 2, 6)], 0.7)
    assert (ann.overlapper_response_id, ann.kind) == ("B-0", OverlapKind.PARTIAL)
    assert (ann.overlap_start_s, ann.overlap_end_s) == (2, 3)


def test_fully_overlap():
    (ann,) = detect_overlaps([span("A-0", "A", 0, 5)], [span("B-0", "B", 2, 4)], 0.7)
    assert (ann.overlapper_response_id, ann.kind) == ("B-0", OverlapKind.FULLY)


def test_short_overlap_ignored():
    assert detect_overlaps([span("A-0", "A", 0, 5)], [span("B-0", "B", 4.5, 6)], 0.7) == []


def test_overlap_exactly_minimum_counts():
    assert len(detect_overlaps([span("A-0", "A", 0, 5.0)], [span("B-0", "B", 4.3, 6)], 0.7)) == 1


def test_end_tie_is_partial():
    (ann,) = detect_overlaps([span("A-0", "A", 0, 5)], [span("B-0", "B", 2, 5)], 0.7)
    assert ann.kind is OverlapKind.PARTIAL


def test_equal_starts_are_not_annotated():
    assert detect_overlaps([span("A-0", "A", 1, 5)], [span("B-0", "B", 1, 3)], 0.7) == []


def _random_responses(rng, spk, n):
    out, t = [], rng.randint(0, 2000)
    for i in range(n):
        d = rng.choice([rng.randint(1, 3000), 700, rng.randint(1, 700)])
        out.append(span(f"{spk}-{i:04d}", spk, t / 1000, (t + d) / 1000))
        t += d + rng.choice([rng.randint(1, 3000), 700, 1])
    return out


def test_overlaps_match_brute_force():
    rng = random.Random(8)
    for _ in range(500):
        a = _random_responses(rng, "A", rng.randint(0, 25))
        b = _random_responses(rng, "B", rng.randint(0, 25))
        assert detect_overlaps(a, b, 0.7) == brute_force_overlaps(a, b, 0.7)


def test_disjoint_spans_have_no_overlaps():
    assert brute_force_overlaps([span("A-0", "A", 0, 1)], [span("B-0", "B", 2, 3)], 0.7) == []


# --- labels ---------------------------------------------------------------------


def _conv(a, b):
    rs = tuple(sorted(a + b, key=lambda r: r.start_s))
    return Conversation("c", 100.0, rs, tuple(detect_overlaps(a, b, 0.7)))


def test_partial_overlapper_is_successful_interjection():
    conv = assign_candidate_labels(_conv([span("A-0", "A", 0, 3)], [span("B-0", "B", 2, 6)]))
    assert conv.response("B-0").label is ResponseLabel.SUCCESSFUL_INTERJECTION
    assert conv.response("B-0").overlap.partner_response_id == "A-0"
    assert conv.response("A-0").label is ResponseLabel.TURN


def test_fully_overlapper_is_pending():
    conv = assign_candidate_labels(_conv([span("A-0", "A", 0, 5)], [span("B-0", "B", 2, 4)]))
    assert conv.response("B-0").label is ResponseLabel.PENDING_BACKCHANNEL


def test_earliest_overlap_wins():
    # B-0 interjects on A-0; A-1 then sits inside B-0
    a = [span("A-0", "A", 0, 3), span("A-1", "A", 4, 5)]
    b = [span("B-0", "B", 2, 8)]
    conv = assign_candidate_labels(_conv(a, b))
    assert conv.response("B-0").label is ResponseLabel.SUCCESSFUL_INTERJECTION
    assert conv.response("A-1").label is ResponseLabel.PENDING_BACKCHANNEL


@pytest.mark.parametrize("seed", range(100))
def test_labels_match_pairwise_oracle(seed):
    doc, _ = generate_conversation(seed)
    conv = annotate_document(doc)
    expect = brute_force_labels(conv.responses, 0.7)
    assert {r.id: r.label for r in conv.responses} == expect
