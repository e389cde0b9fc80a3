"""Transcript input files: parsing, validation, serialization and silence trimming.

A transcript document is UTF-8 JSON::

    {"conversation_id": "fe_03_00001", "duration_s": 600.0,
     "channels": [{"speaker": "A", "words": [{"text": "hello", "start": 0.31, "end": 0.62}]},
                  {"speaker": "B", "words": [...]}],
     "laughs": [{"speaker": "A", "start": 4.0, "end": 5.2}],
     "silences": [{"speaker": "B", "start": 1.0, "end": 2.5}]}
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .core import SPEAKERS, DuplexPersonaError, LaughEvent, WordToken

Interval = tuple[float, float]

_PUNCT = re.compile(r"[^\w']+", re.UNICODE)


class TranscriptParseError(DuplexPersonaError):
    def __init__(self, location: str, message: str):
        super().__init__(f"{location}: {message}")
        self.location = location


@dataclass(frozen=True)
class Channel:
    speaker: str
    words: tuple[WordToken, ...]


@dataclass(frozen=True)
class TranscriptDocument:
    conversation_id: str
    duration_s: float
    channels: tuple[Channel, Channel]
    laughs: tuple[LaughEvent, ...] = ()
    silences: dict[str, tuple[Interval, ...]] | None = field(default=None, compare=True)

    def channel(self, speaker: str) -> Channel:
        for ch in self.channels:
            if ch.speaker == speaker:
                return ch
        raise KeyError(speaker)

    def laughs_for(self, speaker: str) -> list[LaughEvent]:
        return [lg for lg in self.laughs if lg.speaker == speaker]

    def silences_for(self, speaker: str) -> tuple[Interval, ...]:
        if not self.silences:
            return ()
        return self.silences.get(speaker, ())


def normalize_word(text: str) -> str:
    """Lowercase and strip punctuation (apostrophes survive, as in "it's")."""
    return _PUNCT.sub("", text.strip().lower()).strip("'")


def _number(obj, key, loc):
    if key not in obj:
        raise TranscriptParseError(loc, f"missing field {key!r}")
    value = obj[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise TranscriptParseError(loc, f"field {key!r} must be a number")
    return float(value)


def _speaker(obj, loc):
    spk = obj.get("speaker")
    if spk not in SPEAKERS:
        raise TranscriptParseError(loc, f"speaker must be 'A' or 'B', got {spk!r}")
    return spk


def parse_transcript(data: bytes | str) -> TranscriptDocument:
    """Parse and validate a transcript document."""
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise TranscriptParseError("$", f"not UTF-8: {exc}") from None
    try:
        raw = json.loads(data)
    except json.JSONDecodeError as exc:
        raise TranscriptParseError(f"line {exc.lineno} col {exc.colno}", exc.msg) from None
    if not isinstance(raw, dict):
        raise TranscriptParseError("$", "top level must be an object")

    conv_id = raw.get("conversation_id")
    if not isinstance(conv_id, str) or not conv_id:
        raise TranscriptParseError("$.conversation_id", "must be a non-empty string")

    channels_raw = raw.get("channels")
    if not isinstance(channels_raw, list):
        raise TranscriptParseError("$.channels", "must be an array")
    if len(channels_raw) != 2:
        raise TranscriptParseError("$.channels", f"expected exactly 2 channels, got {len(channels_raw)}")

    channels = []
    for ci, ch in enumerate(channels_raw):
        loc = f"$.channels[{ci}]"
        if not isinstance(ch, dict):
            raise TranscriptParseError(loc, "must be an object")
        spk = _speaker(ch, loc)
        words_raw = ch.get("words")
        if not isinstance(words_raw, list):
            raise TranscriptParseError(f"{loc}.words", "must be an array")
        words = []
        for wi, w in enumerate(words_raw):
            wloc = f"{loc}.words[{wi}]"
            if not isinstance(w, dict) or not isinstance(w.get("text"), str):
                raise TranscriptParseError(wloc, "must be an object with a string 'text'")
            start, end = _number(w, "start", wloc), _number(w, "end", wloc)
            text = normalize_word(w["text"])
            if not text:
                continue  # punctuation-only ASR tokens
            if start < 0 or start > end:
                raise TranscriptParseError(wloc, f"invalid span start={start} end={end}")
            try:
                word = WordToken(text, start, end, spk)
            except ValueError as exc:
                raise TranscriptParseError(wloc, str(exc)) from None
            if words and start < words[-1].end_s:
                raise TranscriptParseError(
                    wloc, f"word starts at {start} before previous word ends at {words[-1].end_s}"
                )
            words.append(word)
        channels.append(Channel(spk, tuple(words)))
    if channels[0].speaker == channels[1].speaker:
        raise TranscriptParseError("$.channels", "channels must have distinct speakers")
    channels.sort(key=lambda c: c.speaker)

    laughs = []
    for li, lg in enumerate(raw.get("laughs") or []):
        loc = f"$.laughs[{li}]"
        if not isinstance(lg, dict):
            raise TranscriptParseError(loc, "must be an object")
        spk = _speaker(lg, loc)
        start, end = _number(lg, "start", loc), _number(lg, "end", loc)
        if not start < end:
            raise TranscriptParseError(loc, f"invalid span start={start} end={end}")
        laughs.append(LaughEvent(start, end, spk))
    laughs.sort(key=lambda lg: (lg.speaker, lg.start_s, lg.end_s))

    silences = None
    if raw.get("silences") is not None:
        per_speaker: dict[str, list[Interval]] = {s: [] for s in SPEAKERS}
        for si, sil in enumerate(raw["silences"]):
            loc = f"$.silences[{si}]"
            if not isinstance(sil, dict):
                raise TranscriptParseError(loc, "must be an object")
            spk = _speaker(sil, loc)
            start, end = _number(sil, "start", loc), _number(sil, "end", loc)
            if not start < end:
                raise TranscriptParseError(loc, f"invalid span start={start} end={end}")
            per_speaker[spk].append((start, end))
        silences = {}
        for spk, ivs in per_speaker.items():
            ivs.sort()
            for (a0, b0), (a1, _) in zip(ivs, ivs[1:]):
                if a1 < b0:
                    raise TranscriptParseError("$.silences", f"overlapping silences for speaker {spk} at {a1}")
            silences[spk] = tuple(ivs)

    max_end = max(
        [w.end_s for ch in channels for w in ch.words] + [lg.end_s for lg in laughs] + [0.0]
    )
    if "duration_s" in raw:
        duration = _number(raw, "duration_s", "$")
        if duration < max_end:
            raise TranscriptParseError("$.duration_s", f"{duration} is shorter than the last event end {max_end}")
    else:
        duration = max_end

    return TranscriptDocument(conv_id, duration, tuple(channels), tuple(laughs), silences)


def transcript_to_dict(doc: TranscriptDocument) -> dict:
    out = {
        "conversation_id": doc.conversation_id,
        "duration_s": doc.duration_s,
        "channels": [
            {
                "speaker": ch.speaker,
                "words": [{"text": w.text, "start": w.start_s, "end": w.end_s} for w in ch.words],
            }
            for ch in doc.channels
        ],
        "laughs": [{"speaker": lg.speaker, "start": lg.start_s, "end": lg.end_s} for lg in doc.laughs],
    }
    if doc.silences is not None:
        out["silences"] = [
            {"speaker": spk, "start": a, "end": b}
            for spk in SPEAKERS
            for a, b in doc.silences.get(spk, ())
        ]
    return out


def serialize_transcript(doc: TranscriptDocument) -> str:
    return json.dumps(transcript_to_dict(doc), indent=1) + "\n"


def _largest_uncovered(start: float, end: float, silences: Sequence[Interval]) -> Interval | None:
    if start == end:
        if any(a <= start <= b for a, b in silences):
            return None
        return (start, end)
    best = None
    cursor = start
    for a, b in silences:
        if b <= cursor:
            continue
        if a >= end:
            break
        if a > cursor:
            piece = (cursor, a)
            if best is None or piece[1] - piece[0] > best[1] - best[0]:
                best = piece
        cursor = max(cursor, b)
        if cursor >= end:
            break
    if cursor < end:
        piece = (cursor, end)
        if best is None or piece[1] - piece[0] > best[1] - best[0]:
            best = piece
    return best


def trim_silences(words: Iterable[WordToken], silences: Sequence[Interval]) -> list[WordToken]:
    """Clip each word to its largest non-silent sub-span; drop words that are entirely silent.

    ``silences`` must be sorted and disjoint. Ties between equally long
    sub-spans keep the earliest one.
    """
    words = list(words)
    if not silences:
        return words
    out = []
    for w in words:
        span = _largest_uncovered(w.start_s, w.end_s, silences)
        if span is None:
            continue
        if span == (w.start_s, w.end_s):
            out.append(w)
        else:
            out.append(WordToken(w.text, span[0], span[1], w.speaker))
    return out
