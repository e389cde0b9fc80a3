"""Domain types, vocabularies, configuration and the label/score mapping."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

SPEAKERS = ("A", "B")

EMOTIONS = ("anger", "disgust", "fear", "joy", "neutral", "sadness", "surprise")
SENTIMENTS = ("positive", "neutral", "negative")
# Vocabularies used only by the backchannel prompt; stored, never aggregated.
EMOTIONS5 = ("neutral", "sad", "angry", "happy", "surprised")
SENTIMENTS5 = ("very positive", "positive", "neutral", "negative", "very negative")

TRAITS = ("openness", "conscientiousness", "extraversion", "agreeableness", "neuroticism")

# Float slack for time comparisons; input times are millisecond-resolution decimals.
TIME_EPS = 1e-9


class DuplexPersonaError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(DuplexPersonaError):
    pass


def other_speaker(speaker: str) -> str:
    if speaker == "A":
        return "B"
    if speaker == "B":
        return "A"
    raise ValueError(f"unknown speaker {speaker!r}")


def _check_speaker(speaker: str) -> None:
    if speaker not in SPEAKERS:
        raise ValueError(f"speaker must be one of {SPEAKERS}, got {speaker!r}")


@dataclass(frozen=True)
class WordToken:
    text: str
    start_s: float
    end_s: float
    speaker: str

    def __post_init__(self):
        _check_speaker(self.speaker)
        if not self.text or any(c.isspace() for c in self.text):
            raise ValueError(f"invalid word text {self.text!r}")
        if self.start_s < 0 or self.start_s > self.end_s:
            raise ValueError(f"invalid word span [{self.start_s}, {self.end_s}] for {self.text!r}")


@dataclass(frozen=True)
class LaughEvent:
    start_s: float
    end_s: float
    speaker: str

    def __post_init__(self):
        _check_speaker(self.speaker)
        if not self.start_s < self.end_s:
            raise ValueError(f"invalid laugh span [{self.start_s}, {self.end_s}]")


class TokenKind(str, Enum):
    WORD = "word"
    LAUGHTER = "[Laughter]"
    START_LAUGH = "[StartLaugh]"
    END_LAUGH = "[EndLaugh]"


LAUGH_MARKERS = frozenset(k.value for k in TokenKind if k is not TokenKind.WORD)


@dataclass(frozen=True)
class Token:
    kind: TokenKind
    start_s: float
    end_s: float
    speaker: str
    text: str = ""

    @classmethod
    def word(cls, w: WordToken) -> "Token":
        return cls(TokenKind.WORD, w.start_s, w.end_s, w.speaker, w.text)

    @classmethod
    def marker(cls, kind: TokenKind, start_s: float, end_s: float, speaker: str) -> "Token":
        return cls(kind, start_s, end_s, speaker, kind.value)

    @property
    def is_word(self) -> bool:
        return self.kind is TokenKind.WORD

    def render(self) -> str:
        return self.text if self.is_word else self.kind.value


class ResponseLabel(str, Enum):
    TURN = "turn"
    EMOTIVE_BACKCHANNEL = "emotive_backchannel"
    COGNITIVE_BACKCHANNEL = "cognitive_backchannel"
    SUCCESSFUL_INTERJECTION = "successful_interjection"
    UNSUCCESSFUL_INTERJECTION = "unsuccessful_interjection"
    PENDING_BACKCHANNEL = "pending_backchannel"


class OverlapKind(str, Enum):
    PARTIAL = "partial"
    FULLY = "fully"


@dataclass(frozen=True)
class OverlapRef:
    kind: OverlapKind
    partner_response_id: str


@dataclass(frozen=True)
class OverlapAnnotation:
    overlapper_response_id: str
    overlappee_response_id: str
    kind: OverlapKind
    overlap_start_s: float
    overlap_end_s: float

    @property
    def duration_s(self) -> float:
        return self.overlap_end_s - self.overlap_start_s


@dataclass(frozen=True)
class Response:
    id: str
    speaker: str
    tokens: tuple[Token, ...]
    label: ResponseLabel | None = None
    overlap: OverlapRef | None = None
    emotion: str | None = None
    sentiment: str | None = None
    bc_emotion5: str | None = None
    bc_sentiment5: str | None = None

    @property
    def start_s(self) -> float:
        return self.tokens[0].start_s

    @property
    def end_s(self) -> float:
        return max(t.end_s for t in self.tokens)

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s

    @property
    def text(self) -> str:
        return " ".join(t.render() for t in self.tokens)

    @property
    def plain_text(self) -> str:
        """Text with laugh markers removed."""
        return " ".join(t.text for t in self.tokens if t.is_word)


@dataclass(frozen=True)
class Conversation:
    id: str
    duration_s: float
    responses: tuple[Response, ...]
    overlaps: tuple[OverlapAnnotation, ...] = ()
    source: Mapping[str, object] = field(default_factory=dict, compare=False)

    def response(self, response_id: str) -> Response:
        for r in self.responses:
            if r.id == response_id:
                return r
        raise KeyError(response_id)

    def by_speaker(self, speaker: str) -> list[Response]:
        return [r for r in self.responses if r.speaker == speaker]


def sort_responses(responses) -> tuple[Response, ...]:
    return tuple(sorted(responses, key=lambda r: (r.start_s, r.end_s, r.speaker, r.id)))


class TraitLabel(str, Enum):
    HIGHLY_ALIGNED = "highly aligned"
    ALIGNED = "aligned"
    NEUTRAL = "neutral"
    OPPOSED = "opposed"
    HIGHLY_OPPOSED = "highly opposed"


_LABEL_SCORES = {
    TraitLabel.HIGHLY_ALIGNED: 100,
    TraitLabel.ALIGNED: 50,
    TraitLabel.NEUTRAL: 0,
    TraitLabel.OPPOSED: -50,
    TraitLabel.HIGHLY_OPPOSED: -100,
}


def label_to_score(label: TraitLabel) -> int:
    return _LABEL_SCORES[TraitLabel(label)]


def average_scores(scores: Sequence[Mapping[str, float]]) -> dict[str, float]:
    """Per-trait arithmetic mean of a non-empty list of trait score vectors."""
    if not scores:
        raise ValueError("cannot average an empty list of score vectors")
    for vec in scores:
        missing = [t for t in TRAITS if t not in vec]
        if missing:
            raise ValueError(f"score vector missing traits: {missing}")
    n = len(scores)
    return {t: sum(vec[t] for vec in scores) / n for t in TRAITS}


@dataclass(frozen=True)
class LLMSettings:
    endpoint: str | None = None
    model: str = "gpt-4o-2024-11-20"
    api_key_env: str = "DUPLEXPERSONA_API_KEY"
    max_attempts: int = 5
    backoff_base_s: float = 1.0
    backoff_max_s: float = 30.0
    deadline_s: float = 60.0
    max_in_flight: int = 4
    classification_temperature: float = 0.0
    personality_temperature: float = 0.7
    max_tokens: int = 2048
    journal_path: str | None = None
    emotion_endpoint: str | None = None
    sentiment_endpoint: str | None = None


@dataclass(frozen=True)
class PipelineConfig:
    gap_threshold_s: float = 0.7
    min_overlap_s: float = 0.7
    sample_count: int = 20
    sample_min_dur_s: float = 2.0
    personality_query_count: int = 5
    bucket_k1: float = 0.8
    bucket_k2: float = 1.2
    context_before: int = 3
    context_after: int = 3
    rng_seed: int = 0
    llm: LLMSettings = field(default_factory=LLMSettings)

    def __post_init__(self):
        if not self.gap_threshold_s > 0:
            raise ConfigError("gap_threshold_s must be positive")
        if not self.min_overlap_s > 0:
            raise ConfigError("min_overlap_s must be positive")
        if not self.bucket_k1 < self.bucket_k2:
            raise ConfigError("bucket_k1 must be smaller than bucket_k2")
        if self.personality_query_count < 1:
            raise ConfigError("personality_query_count must be at least 1")
        if self.sample_count < 1:
            raise ConfigError("sample_count must be at least 1")
        if self.context_before < 0 or self.context_after < 0:
            raise ConfigError("context sizes must be non-negative")
        if self.llm.max_attempts < 1 or self.llm.max_in_flight < 1:
            raise ConfigError("llm.max_attempts and llm.max_in_flight must be at least 1")
        if self.llm.deadline_s <= 0:
            raise ConfigError("llm.deadline_s must be positive")

    @classmethod
    def from_mapping(cls, data: Mapping | None) -> "PipelineConfig":
        data = dict(data or {})
        llm = data.pop("llm", None) or {}
        known = set(cls.__dataclass_fields__) - {"llm"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        llm_unknown = set(llm) - set(LLMSettings.__dataclass_fields__)
        if llm_unknown:
            raise ConfigError(f"unknown llm config keys: {sorted(llm_unknown)}")
        return cls(**data, llm=LLMSettings(**llm))


def derive_seed(seed: int, stream: str) -> int:
    """Independent 64-bit seed for a named random sub-stream."""
    digest = hashlib.sha256(f"{seed}:{stream}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


class SplitMix64:
    """Minimal splitmix64 generator; stable across platforms and Python versions."""

    MASK = (1 << 64) - 1

    def __init__(self, seed: int):
        self.state = seed & self.MASK

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & self.MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & self.MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & self.MASK
        return z ^ (z >> 31)

    def below(self, n: int) -> int:
        """Uniform integer in [0, n) by rejection sampling."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n
