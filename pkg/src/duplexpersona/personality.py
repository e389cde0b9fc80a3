"""Character-prompt assembly, repeated chat queries and trait score aggregation."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from string import Template
from typing import Mapping, Sequence

from .attributes import BASICS, TURN_LABELS, RelativeBucket, SpeakerAttributes, render_bucket
from .classify import load_asset, normalize_key
from .core import (
    EMOTIONS,
    SENTIMENTS,
    TRAITS,
    Conversation,
    DuplexPersonaError,
    PipelineConfig,
    SplitMix64,
    TraitLabel,
    average_scores,
    label_to_score,
)
from .llm_gateway import ChatClient, ChatRequest, NoJsonFound, extract_trailing_json

logger = logging.getLogger(__name__)

PERSONALITY_PROMPT_VERSION = "1"
MAX_FORMAT_RETRIES = 3

FEATURE_NAMES = ("samples", "basics", "emotion", "sentiment")


class PredictionError(DuplexPersonaError):
    pass


@dataclass(frozen=True)
class PromptFeatures:
    include_samples: bool = True
    include_basics: bool = True
    include_emotion: bool = True
    include_sentiment: bool = True

    def __post_init__(self):
        if not (self.include_samples or self.include_basics or self.include_emotion or self.include_sentiment):
            raise ValueError("at least one prompt feature must be enabled")

    @classmethod
    def parse(cls, spec: str) -> "PromptFeatures":
        """``"samples,basics"`` -> features with only those two sections."""
        names = {n.strip().lower() for n in spec.split(",") if n.strip()}
        unknown = names - set(FEATURE_NAMES)
        if unknown:
            raise ValueError(f"unknown features {sorted(unknown)}; choose from {FEATURE_NAMES}")
        return cls(*(n in names for n in FEATURE_NAMES))

    def __str__(self) -> str:
        flags = (self.include_samples, self.include_basics, self.include_emotion, self.include_sentiment)
        return ",".join(n for n, on in zip(FEATURE_NAMES, flags) if on)


@dataclass(frozen=True)
class TraitPrediction:
    conversation_id: str
    speaker: str
    scores: dict[str, float]
    raw_labels: list[dict[str, str]] = field(default_factory=list)

    @property
    def query_count(self) -> int:
        return len(self.raw_labels)

    def to_dict(self) -> dict:
        return {
            "conversation": self.conversation_id,
            "speaker": self.speaker,
            "scores": {t: self.scores[t] for t in TRAITS},
            "raw_labels": [{t: q[t] for t in TRAITS} for q in self.raw_labels],
            "query_count": self.query_count,
        }


def select_samples(conversation: Conversation, speaker: str, n: int, min_dur_s: float, seed: int) -> list[str]:
    """Uniform draw without replacement of the speaker's turns longer than ``min_dur_s``.

    Partial Fisher-Yates over splitmix64; laugh tokens stay in the text.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    pool = [
        r
        for r in conversation.by_speaker(speaker)
        if r.label in TURN_LABELS and r.duration_s > min_dur_s
    ]
    rng = SplitMix64(seed)
    k = min(n, len(pool))
    for i in range(k):
        j = i + rng.below(len(pool) - i)
        pool[i], pool[j] = pool[j], pool[i]
    return [r.text for r in pool[:k]]


def _pct_lines(pct: Mapping[str, float], means: Mapping[str, float], classes: Sequence[str]) -> list[str]:
    return [f"  {c}: {pct[c]:.1f}% (average: {means[c]:.1f}%)" for c in classes]


def build_personality_prompt(
    attrs: SpeakerAttributes,
    buckets: Mapping[str, RelativeBucket] | None,
    samples: Sequence[str],
    cohort_means: Mapping[str, Mapping[str, float]] | None,
    features: PromptFeatures = PromptFeatures(),
) -> str:
    sections = []
    if features.include_samples:
        lines = ["Sample Responses:"]
        lines += [f"  Sample {i}: {s}" for i, s in enumerate(samples, 1)] or ["  (no qualifying samples)"]
        sections.append("\n".join(lines))
    if features.include_emotion:
        if not cohort_means or "emotion" not in cohort_means:
            raise ValueError("cohort emotion averages are required when emotion is enabled")
        sections.append("\n".join(["Emotions:"] + _pct_lines(attrs.emotion_pct, cohort_means["emotion"], EMOTIONS)))
    if features.include_sentiment:
        if not cohort_means or "sentiment" not in cohort_means:
            raise ValueError("cohort sentiment averages are required when sentiment is enabled")
        sections.append(
            "\n".join(["Sentiment:"] + _pct_lines(attrs.sentiment_pct, cohort_means["sentiment"], SENTIMENTS))
        )
    if features.include_basics:
        if buckets is None:
            raise ValueError("buckets are required when basics are enabled")
        lines = ["Basic Statistics:"]
        lines += [f"  {caption}: {render_bucket(key, buckets[key])}" for key, _, caption, _ in BASICS]
        sections.append("\n".join(lines))
    return Template(load_asset("personality_prompt.txt")).substitute(sections="\n\n".join(sections))


_LABELS_BY_TEXT = {normalize_key(lbl.value): lbl for lbl in TraitLabel}


def parse_trait_labels(text: str) -> dict[str, TraitLabel]:
    """Trait -> label from the reply's trailing JSON; keys and labels match loosely."""
    obj = extract_trailing_json(text)
    found: dict[str, TraitLabel] = {}
    for key, value in obj.items():
        nk = normalize_key(key)
        trait = next((t for t in TRAITS if nk == t or nk.startswith(t)), None)
        if trait is None:
            continue
        label = _LABELS_BY_TEXT.get(normalize_key(value)) if isinstance(value, str) else None
        if label is None:
            raise ValueError(f"unrecognised label {value!r} for {trait}")
        found[trait] = label
    missing = [t for t in TRAITS if t not in found]
    if missing:
        raise ValueError(f"reply is missing traits {missing}")
    return found


def _query_once(client: ChatClient, request: ChatRequest) -> dict[str, TraitLabel]:
    last = None
    for attempt in range(1 + MAX_FORMAT_RETRIES):
        text = client.complete(request)
        try:
            return parse_trait_labels(text)
        except (NoJsonFound, ValueError) as exc:
            last = exc
            logger.info("malformed personality reply %s (attempt %d): %s", request.tag, attempt + 1, exc)
    raise PredictionError(f"{request.tag}: no usable reply after {1 + MAX_FORMAT_RETRIES} attempts: {last}")


def predict_personality(
    client: ChatClient,
    prompt: str,
    query_count: int,
    cfg: PipelineConfig | None = None,
    conversation_id: str = "",
    speaker: str = "",
) -> TraitPrediction:
    """Average ``query_count`` independent label sets into per-trait scores in [-100, 100]."""
    if query_count < 1:
        raise ValueError("query_count must be at least 1")
    cfg = cfg or PipelineConfig()
    tag = f"{conversation_id}/{speaker}"
    requests = [
        ChatRequest.user(
            prompt,
            model=cfg.llm.model,
            temperature=cfg.llm.personality_temperature,
            max_tokens=cfg.llm.max_tokens,
            tag=f"{tag}#q{i}",
        )
        for i in range(query_count)
    ]
    with ThreadPoolExecutor(max_workers=max(1, min(query_count, cfg.llm.max_in_flight))) as pool:
        labels = list(pool.map(lambda req: _query_once(client, req), requests))
    scores = average_scores([{t: label_to_score(q[t]) for t in TRAITS} for q in labels])
    raw = [{t: q[t].value for t in TRAITS} for q in labels]
    return TraitPrediction(conversation_id, speaker, scores, raw)
