from __future__ import annotations

import glob
import os
from pathlib import Path

import pytest

from duplexpersona.attributes import RelativeBucket, SpeakerAttributes
from duplexpersona.core import (
    Conversation,
    OverlapAnnotation,
    OverlapKind,
    OverlapRef,
    Response,
    ResponseLabel,
    Token,
    WordToken,
)

GOLDEN = Path(__file__).parent / "golden"


def words(speaker: str, text: str, start: float, step: float = 0.3, gap: float = 0.1) -> list[Token]:
    out, t = [], start
    for w in text.split():
        out.append(Token.word(WordToken(w, round(t, 3), round(t + step, 3), speaker)))
        t += step + gap
    return out


def response(rid: str, speaker: str, text: str, start: float, **kw) -> Response:
    return Response(rid, speaker, tuple(words(speaker, text, start)), **kw)


def check_golden(name: str, text: str) -> None:
    """Compare with a reviewed golden file; DUPLEXPERSONA_REGEN_GOLDEN=1 rewrites it."""
    path = GOLDEN / name
    if os.environ.get("DUPLEXPERSONA_REGEN_GOLDEN") == "1":
        path.write_text(text, encoding="utf-8")
    assert path.exists(), f"missing golden file {path}"
    assert text == path.read_text(encoding="utf-8")


@pytest.fixture
def appendix_conversation() -> Conversation:
    """Speaker B talks about a trip; A says "yeah" in the middle of it."""
    b0 = response("B-0000", "B", "did you ever go camping when you were a kid", 0.0, label=ResponseLabel.TURN)
    a0 = response("A-0000", "A", "oh yes all the time with my family", 4.6, label=ResponseLabel.TURN)
    b1 = response(
        "B-0001", "B", "we used to go up north every summer and it was beautiful up there", 7.8,
        label=ResponseLabel.TURN,
    )
    # "yeah" starts in the gap between "north" and "every"
    a1 = Response(
        "A-0001", "A",
        (Token.word(WordToken("yeah", 10.18, 10.9, "A")),),
        label=ResponseLabel.PENDING_BACKCHANNEL,
        overlap=OverlapRef(OverlapKind.FULLY, "B-0001"),
    )
    a2 = response("A-0002", "A", "that sounds really nice", 14.2, label=ResponseLabel.TURN)
    b2 = response("B-0002", "B", "it was", 16.0, label=ResponseLabel.TURN)
    overlaps = (OverlapAnnotation("A-0001", "B-0001", OverlapKind.FULLY, 10.18, 10.9),)
    return Conversation("appendix", 20.0, (b0, a0, b1, a1, a2, b2), overlaps)


@pytest.fixture
def appendix_speaker():
    """Speaker with 36 responses, one of them anger, as in the reference character prompt."""
    attrs = SpeakerAttributes(
        conversation_id="c1",
        speaker="A",
        num_turns=30,
        avg_turn_duration_s=2.5,
        laughs_per_min_speech=4.0,
        emotive_bc_per_min_other=0.5,
        cognitive_bc_per_min_other=1.0,
        interjections_per_12min=3.0,
        emotion_pct={
            "anger": 100 / 36, "disgust": 0.0, "fear": 100 / 36, "joy": 500 / 36,
            "neutral": 2500 / 36, "sadness": 100 / 36, "surprise": 200 / 36,
        },
        sentiment_pct={"positive": 700 / 36, "neutral": 2600 / 36, "negative": 300 / 36},
        speaking_time_s=120.0,
        num_responses=36,
    )
    buckets = {
        "turns": RelativeBucket.NORMAL,
        "turn_duration": RelativeBucket.LOW,
        "laughter": RelativeBucket.VERY_HIGH,
        "emotive_backchannel": RelativeBucket.HIGH,
        "cognitive_backchannel": RelativeBucket.NORMAL,
        "interjections": RelativeBucket.VERY_LOW,
    }
    means = {
        "emotion": {
            "anger": 3.7, "disgust": 1.2, "fear": 2.0, "joy": 12.5, "neutral": 70.1, "sadness": 4.4, "surprise": 6.1,
        },
        "sentiment": {"positive": 18.0, "neutral": 72.5, "negative": 9.5},
    }
    samples = [
        "[StartLaugh] i hope you have learned [EndLaugh] a lot more since then",
        "well we talked about that for a while",
    ]
    return attrs, buckets, samples, means


def boundary_fixture_counts(conv):
    """Count threshold-straddling geometries in a (ground truth) conversation, in integer ms."""
    ms = lambda x: round(x * 1000)  # noqa: E731
    counts = {"gap_700": 0, "gap_699": 0, "overlap_700": 0, "overlap_699": 0, "end_tie": 0}
    for spk in ("A", "B"):
        rs = [r for r in conv.responses if r.speaker == spk]
        for a, b in zip(rs, rs[1:]):
            counts["gap_700"] += ms(b.start_s) - ms(a.end_s) == 700
        for r in rs:
            words = [t for t in r.tokens if t.start_s != t.end_s]
            counts["gap_699"] += sum(ms(y.start_s) - ms(x.end_s) == 699 for x, y in zip(words, words[1:]))
    by_id = {r.id: r for r in conv.responses}
    for o in conv.overlaps:
        counts["overlap_700"] += ms(o.overlap_end_s) - ms(o.overlap_start_s) == 700
        a, b = by_id[o.overlapper_response_id], by_id[o.overlappee_response_id]
        counts["end_tie"] += ms(a.end_s) == ms(b.end_s)
    a_rs = [r for r in conv.responses if r.speaker == "A"]
    b_rs = [r for r in conv.responses if r.speaker == "B"]
    for a in a_rs:
        for b in b_rs:
            inter = min(ms(a.end_s), ms(b.end_s)) - max(ms(a.start_s), ms(b.start_s))
            counts["overlap_699"] += inter == 699
    return counts


def tree_bytes(root):
    """{relative path: bytes} for every file under ``root``."""
    out = {}
    for dirpath, _, files in os.walk(root):
        for name in files:
            path = os.path.join(dirpath, name)
            with open(path, "rb") as fh:
                out[os.path.relpath(path, root)] = fh.read()
    return out


def run_pipeline(root, seed=7, count=10):
    """synth -> annotate --mock -> attributes -> predict --mock -> eval; returns exit codes."""
    from duplexpersona.cli import main

    root = str(root)
    d = {k: os.path.join(root, k) for k in ("s", "a", "t", "p", "e")}
    codes = [main(["synth", "--out-dir", d["s"], "--seed", str(seed), "--count", str(count), "--duration", "120"])]
    transcripts = sorted(glob.glob(os.path.join(d["s"], "transcripts", "*.json")))
    codes.append(main(["annotate", "--mock", "--seed", str(seed), "--out-dir", d["a"], *transcripts]))
    datasets = sorted(glob.glob(os.path.join(d["a"], "*.jsonl")))
    codes.append(main(["attributes", "--out-dir", d["t"], *datasets]))
    attrs = os.path.join(d["t"], "attributes.jsonl")
    codes.append(main(["predict", "--mock", "--seed", str(seed), "--out-dir", d["p"], "--attributes", attrs, *datasets]))
    preds = os.path.join(d["p"], "predictions.jsonl")
    codes.append(main(["eval", "--out-dir", d["e"], "--predictions", preds, "--labels", preds, "--attributes", attrs]))
    return codes


# --- acceptance reporting --------------------------------------------------------

_CRITERIA: list[tuple[str, str]] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        status = "SKIP" if rep.skipped else ("PASS" if rep.passed else "FAIL")
        _CRITERIA.append((status, marker.args[0]))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for status, text in _CRITERIA:
        terminalreporter.write_line(f"{status}  {text}")
