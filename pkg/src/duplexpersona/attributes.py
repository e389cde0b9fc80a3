"""Per-speaker conversation attributes and cohort-relative bucketing."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Sequence

from .core import (
    EMOTIONS,
    SENTIMENTS,
    Conversation,
    PipelineConfig,
    ResponseLabel,
    TokenKind,
    other_speaker,
)

logger = logging.getLogger(__name__)

INTERJECTION_WINDOW_S = 720.0

TURN_LABELS = (ResponseLabel.TURN, ResponseLabel.SUCCESSFUL_INTERJECTION)


class RelativeBucket(str, Enum):
    VERY_LOW = "very_low"
    LOW = "low"
    NORMAL = "normal"
    HIGH = "high"
    VERY_HIGH = "very_high"


_RENDERINGS = {
    "count": ("Very Few", "Few", "Normal", "Many", "Very Many"),
    "duration": ("Very Short", "Short", "Normal", "Long", "Very Long"),
    "rate": ("Very Infrequent", "Infrequent", "Normal", "Frequent", "Very Frequent"),
}

# (attribute key, SpeakerAttributes field, prompt caption, rendering family)
BASICS = (
    ("turns", "num_turns", "Number of turns", "count"),
    ("turn_duration", "avg_turn_duration_s", "Talking time per turn", "duration"),
    ("laughter", "laughs_per_min_speech", "Frequency of Laughter", "rate"),
    ("emotive_backchannel", "emotive_bc_per_min_other", "Frequency of Emotive Backchannel", "rate"),
    ("cognitive_backchannel", "cognitive_bc_per_min_other", "Frequency of Cognitive Backchannel", "rate"),
    ("interjections", "interjections_per_12min", "Frequency of interjections", "rate"),
)
BASIC_KEYS = tuple(b[0] for b in BASICS)

ATTRIBUTE_KEYS = (
    tuple(f"emotion.{e}" for e in EMOTIONS)
    + tuple(f"sentiment.{s}" for s in SENTIMENTS)
    + tuple(f"basics.{k}" for k in BASIC_KEYS)
)


def render_bucket(attribute: str, bucket: RelativeBucket) -> str:
    """Display string for a bucket, e.g. ``("laughter", VERY_HIGH) -> "Very Frequent"``."""
    for key, _, _, family in BASICS:
        if key == attribute:
            return _RENDERINGS[family][list(RelativeBucket).index(RelativeBucket(bucket))]
    raise KeyError(f"unknown attribute {attribute!r}")


@dataclass(frozen=True)
class SpeakerAttributes:
    conversation_id: str
    speaker: str
    num_turns: int
    avg_turn_duration_s: float
    laughs_per_min_speech: float
    emotive_bc_per_min_other: float
    cognitive_bc_per_min_other: float
    interjections_per_12min: float
    emotion_pct: dict[str, float] = field(default_factory=dict)
    sentiment_pct: dict[str, float] = field(default_factory=dict)
    speaking_time_s: float = 0.0
    num_responses: int = 0

    @property
    def key(self) -> str:
        return f"{self.conversation_id}/{self.speaker}"

    def basic(self, key: str) -> float:
        for k, attr, _, _ in BASICS:
            if k == key:
                return float(getattr(self, attr))
        raise KeyError(key)

    def raw_values(self) -> dict[str, float]:
        """All attribute values keyed as in ``ATTRIBUTE_KEYS``, before bucketing."""
        out = {f"emotion.{e}": self.emotion_pct[e] for e in EMOTIONS}
        out.update({f"sentiment.{s}": self.sentiment_pct[s] for s in SENTIMENTS})
        out.update({f"basics.{k}": self.basic(k) for k in BASIC_KEYS})
        return out

    def to_dict(self) -> dict:
        return {
            "conversation_id": self.conversation_id,
            "speaker": self.speaker,
            "num_turns": self.num_turns,
            "avg_turn_duration_s": self.avg_turn_duration_s,
            "laughs_per_min_speech": self.laughs_per_min_speech,
            "emotive_bc_per_min_other": self.emotive_bc_per_min_other,
            "cognitive_bc_per_min_other": self.cognitive_bc_per_min_other,
            "interjections_per_12min": self.interjections_per_12min,
            "emotion_pct": {e: self.emotion_pct[e] for e in EMOTIONS},
            "sentiment_pct": {s: self.sentiment_pct[s] for s in SENTIMENTS},
            "speaking_time_s": self.speaking_time_s,
            "num_responses": self.num_responses,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SpeakerAttributes":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__})


def _percentages(labels: Sequence[str], classes: Sequence[str]) -> dict[str, float]:
    if not labels:
        return {c: 0.0 for c in classes}
    return {c: 100.0 * sum(1 for x in labels if x == c) / len(labels) for c in classes}


def compute_attributes(
    conversation: Conversation, speaker: str, warnings: list[str] | None = None
) -> SpeakerAttributes:
    warnings = warnings if warnings is not None else []
    mine = conversation.by_speaker(speaker)
    theirs = conversation.by_speaker(other_speaker(speaker))
    for r in mine:
        if r.label is None or r.label is ResponseLabel.PENDING_BACKCHANNEL:
            raise ValueError(f"{conversation.id}/{r.id} is not finalized (label={r.label})")
        if r.emotion is None or r.sentiment is None:
            raise ValueError(f"{conversation.id}/{r.id} has no affect labels")

    turns = [r for r in mine if r.label in TURN_LABELS]
    speaking_s = sum(r.duration_s for r in mine)
    other_speaking_s = sum(r.duration_s for r in theirs)
    laughs = sum(
        1 for r in mine for t in r.tokens if t.kind in (TokenKind.LAUGHTER, TokenKind.START_LAUGH)
    )
    n_emotive = sum(1 for r in mine if r.label is ResponseLabel.EMOTIVE_BACKCHANNEL)
    n_cognitive = sum(1 for r in mine if r.label is ResponseLabel.COGNITIVE_BACKCHANNEL)
    n_interject = sum(
        1
        for r in mine
        if r.label in (ResponseLabel.SUCCESSFUL_INTERJECTION, ResponseLabel.UNSUCCESSFUL_INTERJECTION)
    )

    tag = f"{conversation.id}/{speaker}"
    if speaking_s > 0:
        laugh_rate = laughs / (speaking_s / 60.0)
    else:
        laugh_rate = 0.0
        warnings.append(f"{tag}: zero speaking time; laughter rate set to 0")
    if other_speaking_s > 0:
        emotive_rate = n_emotive / (other_speaking_s / 60.0)
        cognitive_rate = n_cognitive / (other_speaking_s / 60.0)
    else:
        emotive_rate = cognitive_rate = 0.0
        warnings.append(f"{tag}: other speaker has zero speaking time; backchannel rates set to 0")
    if conversation.duration_s > 0:
        interjections = n_interject * (INTERJECTION_WINDOW_S / conversation.duration_s)
    else:
        interjections = 0.0
        warnings.append(f"{tag}: zero conversation duration; interjection rate set to 0")

    return SpeakerAttributes(
        conversation_id=conversation.id,
        speaker=speaker,
        num_turns=len(turns),
        avg_turn_duration_s=(sum(r.duration_s for r in turns) / len(turns)) if turns else 0.0,
        laughs_per_min_speech=laugh_rate,
        emotive_bc_per_min_other=emotive_rate,
        cognitive_bc_per_min_other=cognitive_rate,
        interjections_per_12min=interjections,
        emotion_pct=_percentages([r.emotion for r in mine], EMOTIONS),
        sentiment_pct=_percentages([r.sentiment for r in mine], SENTIMENTS),
        speaking_time_s=speaking_s,
        num_responses=len(mine),
    )


def _quantile(sorted_vals: Sequence[Fraction], q: Fraction) -> Fraction:
    pos = q * (len(sorted_vals) - 1)
    lo = int(pos)
    frac = pos - lo
    if lo + 1 >= len(sorted_vals):
        return sorted_vals[lo]
    return sorted_vals[lo] + (sorted_vals[lo + 1] - sorted_vals[lo]) * frac


def bucketize(values: Sequence[float], target_index: int, k1: float = 0.8, k2: float = 1.2) -> RelativeBucket:
    """Bucket ``values[target_index]`` against the cohort mean and IQR.

    ``|value - mean| <= k1 * IQR`` is Normal, up to ``k2 * IQR`` is High/Low,
    beyond that Very High/Very Low. Comparisons run in exact rational
    arithmetic so boundary cases resolve the same way on every platform.
    """
    if len(values) < 4:
        raise ValueError(f"cohort needs at least 4 values, got {len(values)}")
    exact = [Fraction(v) for v in values]
    ordered = sorted(exact)
    mean = sum(exact) / len(exact)
    iqr = _quantile(ordered, Fraction(3, 4)) - _quantile(ordered, Fraction(1, 4))
    d = exact[target_index] - mean
    k1, k2 = Fraction(str(k1)), Fraction(str(k2))
    if abs(d) <= k1 * iqr:
        return RelativeBucket.NORMAL
    if abs(d) <= k2 * iqr:
        return RelativeBucket.HIGH if d > 0 else RelativeBucket.LOW
    return RelativeBucket.VERY_HIGH if d > 0 else RelativeBucket.VERY_LOW


def bucket_cohort(cohort: Sequence[SpeakerAttributes], cfg: PipelineConfig | None = None) -> list[dict[str, RelativeBucket]]:
    cfg = cfg or PipelineConfig()
    out: list[dict[str, RelativeBucket]] = [{} for _ in cohort]
    for key in BASIC_KEYS:
        column = [a.basic(key) for a in cohort]
        for i in range(len(cohort)):
            out[i][key] = bucketize(column, i, cfg.bucket_k1, cfg.bucket_k2)
    return out


def cohort_means(cohort: Sequence[SpeakerAttributes]) -> dict[str, dict[str, float]]:
    """Arithmetic means of per-speaker emotion and sentiment percentages."""
    if not cohort:
        raise ValueError("empty cohort")
    n = len(cohort)
    return {
        "emotion": {e: sum(a.emotion_pct[e] for a in cohort) / n for e in EMOTIONS},
        "sentiment": {s: sum(a.sentiment_pct[s] for a in cohort) / n for s in SENTIMENTS},
    }


def attribute_row(attrs: SpeakerAttributes, buckets: dict[str, RelativeBucket] | None = None) -> dict:
    row = {"conversation_id": attrs.conversation_id, "speaker": attrs.speaker}
    row.update({k: v for k, v in attrs.to_dict().items() if not isinstance(v, dict) and k not in row})
    row.update({f"emotion_{e}_pct": attrs.emotion_pct[e] for e in EMOTIONS})
    row.update({f"sentiment_{s}_pct": attrs.sentiment_pct[s] for s in SENTIMENTS})
    if buckets is not None:
        for key in BASIC_KEYS:
            row[f"bucket_{key}"] = buckets[key].value
            row[f"rendered_{key}"] = render_bucket(key, buckets[key])
    return row


def rows_to_csv(rows: Sequence[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def rows_to_jsonl(rows: Sequence[dict]) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in rows)
