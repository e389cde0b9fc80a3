import random
import statistics
from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest

from duplexpersona.attributes import (
    RelativeBucket,
    attribute_row,
    bucket_cohort,
    bucketize,
    cohort_means,
    compute_attributes,
    render_bucket,
    rows_to_csv,
)
from duplexpersona.core import (
    Conversation,
    Response,
    ResponseLabel,
    Token,
    TokenKind,
    WordToken,
)

B = RelativeBucket


def _r(rid, spk, s, e, label, emotion="neutral", sentiment="neutral", laugh=None):
    toks = [Token.word(WordToken("w", s, e, spk))]
    if laugh == "standalone":
        toks.insert(0, Token.marker(TokenKind.LAUGHTER, s, s, spk))
    elif laugh == "pair":
        toks = [Token.marker(TokenKind.START_LAUGH, s, s, spk)] + toks + [Token.marker(TokenKind.END_LAUGH, e, e, spk)]
    return Response(rid, spk, tuple(toks), label=label, emotion=emotion, sentiment=sentiment)


def test_anger_percentage_formatting():
    rs = [_r(f"A-{i:04d}", "A", i * 2.0, i * 2.0 + 1, ResponseLabel.TURN, "anger" if i == 0 else "neutral") for i in range(36)]
    rs.append(_r("B-0000", "B", 100.0, 101.0, ResponseLabel.TURN))
    a = compute_attributes(Conversation("c", 200.0, tuple(rs)), "A")
    assert f"{a.emotion_pct['anger']:.1f}%" == "2.8%"


def test_no_backchannels_gives_zero_rates():
    rs = (_r("A-0000", "A", 0, 2, ResponseLabel.TURN), _r("B-0000", "B", 3, 5, ResponseLabel.TURN))
    a = compute_attributes(Conversation("c", 10.0, rs), "A")
    assert a.emotive_bc_per_min_other == 0 and a.cognitive_bc_per_min_other == 0


def test_scripted_conversation_hand_computed():
    T, S, E, C, U = (
        ResponseLabel.TURN,
        ResponseLabel.SUCCESSFUL_INTERJECTION,
        ResponseLabel.EMOTIVE_BACKCHANNEL,
        ResponseLabel.COGNITIVE_BACKCHANNEL,
        ResponseLabel.UNSUCCESSFUL_INTERJECTION,
    )
    rs = (
        _r("A-0000", "A", 0.0, 10.0, T, "joy", "positive", laugh="pair"),
        _r("B-0000", "B", 2.0, 3.0, E, "surprise", "positive"),
        _r("B-0001", "B", 5.0, 6.0, C),
        _r("A-0001", "A", 12.0, 16.0, T, laugh="standalone"),
        _r("B-0002", "B", 15.0, 30.0, S, "sadness", "negative"),
        _r("A-0002", "A", 20.0, 22.0, U),
        _r("A-0003", "A", 31.0, 37.0, T, "anger", "negative"),
    )
    conv = Conversation("c", 120.0, rs)
    a = compute_attributes(conv, "A")
    # A: turns 10 + 4 + 6 over 3; speaking 22 s with 2 laughs; 1 interjection in 120 s
    assert a.num_turns == 3
    assert a.avg_turn_duration_s == pytest.approx(20 / 3)
    assert a.speaking_time_s == 22.0
    assert a.laughs_per_min_speech == pytest.approx(2 / (22 / 60))
    assert a.interjections_per_12min == pytest.approx(1 * 720 / 120)
    assert a.emotion_pct["joy"] == 25.0 and a.emotion_pct["anger"] == 25.0 and a.emotion_pct["neutral"] == 50.0
    assert a.sentiment_pct == {"positive": 25.0, "neutral": 50.0, "negative": 25.0}
    b = compute_attributes(conv, "B")
    # B backchannels against A's 22 s: 1 emotive and 1 cognitive per 22 s
    assert b.emotive_bc_per_min_other == pytest.approx(60 / 22)
    assert b.cognitive_bc_per_min_other == pytest.approx(60 / 22)
    assert b.num_turns == 1 and b.avg_turn_duration_s == 15.0
    assert b.interjections_per_12min == pytest.approx(6.0)
    assert b.laughs_per_min_speech == 0


def test_zero_speaking_time_warns():
    rs = (_r("A-0000", "A", 1.0, 1.0, ResponseLabel.TURN), _r("B-0000", "B", 2, 4, ResponseLabel.TURN))
    warnings = []
    a = compute_attributes(Conversation("c", 10.0, rs), "A", warnings)
    assert a.laughs_per_min_speech == 0 and warnings


def test_unfinalized_response_rejected():
    rs = (Response("A-0000", "A", (Token.word(WordToken("w", 0, 1, "A")),), label=ResponseLabel.PENDING_BACKCHANNEL),)
    with pytest.raises(ValueError):
        compute_attributes(Conversation("c", 10.0, rs), "A")


# --- bucketing ----------------------------------------------------------------


def test_all_equal_cohort_is_normal():
    assert all(bucketize([5.0] * 6, i) is B.NORMAL for i in range(6))


def test_worked_example():
    assert bucketize([0, 10, 20, 30, 40], 4) is B.HIGH
    assert bucketize([0, 10, 20, 30, 40], 0) is B.LOW
    assert bucketize([0, 10, 20, 30, 40], 2) is B.NORMAL


def test_boundary_equality_goes_to_inner_bucket():
    # mean 3; Q1 = 0.75, Q3 = 3.25, IQR 2.5
    cohort = [0, 1, 1, 10]
    assert bucketize(cohort, 1) is B.NORMAL  # d = -2 = -0.8 * IQR
    assert bucketize(cohort, 0) is B.LOW  # d = -3 = -1.2 * IQR
    assert bucketize(cohort, 3) is B.VERY_HIGH  # d = 7


def test_small_cohort_rejected():
    with pytest.raises(ValueError):
        bucketize([1, 2, 3], 0)


def _oracle(values, idx, k1=Fraction(4, 5), k2=Fraction(6, 5)):
    """Straight-line rule with the statistics module's inclusive quantiles, in exact arithmetic."""
    vals = [Fraction(v) for v in values]
    q1, _, q3 = statistics.quantiles(vals, n=4, method="inclusive")
    iqr = q3 - q1
    d = vals[idx] - statistics.mean(vals)
    if abs(d) <= k1 * iqr:
        return B.NORMAL
    if abs(d) <= k2 * iqr:
        return B.HIGH if d > 0 else B.LOW
    return B.VERY_HIGH if d > 0 else B.VERY_LOW


def _random_cohort(rng):
    n = rng.randint(4, 30)
    kind = rng.random()
    if kind < 0.4:
        return [rng.randint(0, 20) for _ in range(n)]  # many exact ties and boundary hits
    if kind < 0.7:
        return [round(rng.uniform(0, 100), 1) for _ in range(n)]
    return [rng.lognormvariate(0, 1) for _ in range(n)]


def test_bucketize_matches_oracle_on_500_cohorts():
    rng = random.Random(2024)
    for _ in range(500):
        cohort = _random_cohort(rng)
        for i in range(len(cohort)):
            assert bucketize(cohort, i) is _oracle(cohort, i), (cohort, i)


def test_numpy_quantiles_agree_off_boundary():
    rng = random.Random(1)
    for _ in range(200):
        cohort = [rng.uniform(0, 50) for _ in range(rng.randint(4, 25))]
        x = np.array(cohort)
        iqr = np.percentile(x, 75) - np.percentile(x, 25)
        for i, v in enumerate(cohort):
            r = abs(v - x.mean()) / iqr
            if min(abs(r - 0.8), abs(r - 1.2)) < 1e-9:
                continue
            expect = B.NORMAL if r <= 0.8 else (B.HIGH if v > x.mean() else B.LOW) if r <= 1.2 else (
                B.VERY_HIGH if v > x.mean() else B.VERY_LOW
            )
            assert bucketize(cohort, i) is expect


_FLIP = {B.VERY_LOW: B.VERY_HIGH, B.LOW: B.HIGH, B.NORMAL: B.NORMAL, B.HIGH: B.LOW, B.VERY_HIGH: B.VERY_LOW}


def test_translation_and_scale_invariance():
    rng = random.Random(77)
    for _ in range(200):
        cohort = [rng.randint(0, 1000) for _ in range(rng.randint(4, 20))]
        shift = rng.randint(-10**6, 10**6)
        scale = rng.randint(1, 100)
        for i in range(len(cohort)):
            base = bucketize(cohort, i)
            assert bucketize([v + shift for v in cohort], i) is base
            assert bucketize([v * scale for v in cohort], i) is base
            assert bucketize([-v for v in cohort], i) is _FLIP[base]


@pytest.mark.parametrize(
    "attr,bucket,text",
    [
        ("turn_duration", B.LOW, "Short"),
        ("laughter", B.VERY_HIGH, "Very Frequent"),
        ("turns", B.NORMAL, "Normal"),
        ("turns", B.HIGH, "Many"),
        ("interjections", B.VERY_LOW, "Very Infrequent"),
    ],
)
def test_renderings(attr, bucket, text):
    assert render_bucket(attr, bucket) == text


def test_cohort_helpers(appendix_speaker):
    attrs = appendix_speaker[0]
    cohort = [replace(attrs, speaker=s, num_turns=n) for s, n in zip("ABAB", (10, 20, 30, 100))]
    buckets = bucket_cohort(cohort)
    assert buckets[3]["turns"] is B.VERY_HIGH
    assert all(b["laughter"] is B.NORMAL for b in buckets)
    means = cohort_means(cohort)
    assert means["emotion"]["anger"] == pytest.approx(100 / 36)
    csv_text = rows_to_csv([attribute_row(a, b) for a, b in zip(cohort, buckets)])
    assert csv_text.splitlines()[0].startswith("conversation_id,speaker,")
    assert "Very Many" in csv_text
