"""Backchannel resolution through a chat model, and per-response emotion/sentiment."""

from __future__ import annotations

import json
import logging
import re
import time
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from importlib import resources
from string import Template
from typing import Mapping, Sequence

from .core import (
    EMOTIONS,
    EMOTIONS5,
    LAUGH_MARKERS,
    SENTIMENTS,
    SENTIMENTS5,
    Conversation,
    DuplexPersonaError,
    PipelineConfig,
    Response,
    ResponseLabel,
)
from .llm_gateway import ChatClient, ChatRequest, GatewayError, NoJsonFound, extract_trailing_json

logger = logging.getLogger(__name__)

BACKCHANNEL_PROMPT_VERSION = "1"
MAX_FORMAT_RETRIES = 3

INTERJECTION_TYPES = ("emotive", "cognitive", "not backchannel")

_VERDICT_LABELS = {
    "emotive": ResponseLabel.EMOTIVE_BACKCHANNEL,
    "cognitive": ResponseLabel.COGNITIVE_BACKCHANNEL,
    "not backchannel": ResponseLabel.UNSUCCESSFUL_INTERJECTION,
}


class PromptError(DuplexPersonaError):
    pass


class BackchannelResolutionError(DuplexPersonaError):
    """A chat call failed; ``partial`` holds every verdict that did come back."""

    def __init__(self, message: str, partial: Conversation):
        super().__init__(message)
        self.partial = partial


def load_asset(name: str) -> str:
    return resources.files("duplexpersona").joinpath("assets", name).read_text(encoding="utf-8")


def normalize_key(text: str) -> str:
    return re.sub(r"[\s_\-]+", " ", str(text).strip().lower())


@dataclass(frozen=True)
class BackchannelVerdict:
    interjection_type: str
    emotion5: str
    sentiment5: str

    def __post_init__(self):
        if self.interjection_type not in INTERJECTION_TYPES:
            raise ValueError(f"unknown interjection type {self.interjection_type!r}")
        if self.emotion5 not in EMOTIONS5:
            raise ValueError(f"unknown emotion {self.emotion5!r}")
        if self.sentiment5 not in SENTIMENTS5:
            raise ValueError(f"unknown sentiment {self.sentiment5!r}")

    @property
    def label(self) -> ResponseLabel:
        return _VERDICT_LABELS[self.interjection_type]


def _lookup(obj: Mapping, *names: str):
    normalized = {normalize_key(k): v for k, v in obj.items()}
    for name in names:
        if name in normalized:
            return normalized[name]
    raise KeyError(names[0])


def parse_verdict(text: str) -> BackchannelVerdict:
    """Read the trailing JSON verdict of a backchannel classification reply."""
    obj = extract_trailing_json(text)
    try:
        kind = normalize_key(_lookup(obj, "interjection type", "type", "classification"))
        emotion = normalize_key(_lookup(obj, "emotion"))
        sentiment = normalize_key(_lookup(obj, "sentiment"))
    except KeyError as exc:
        raise ValueError(f"verdict is missing {exc.args[0]!r}") from None
    if kind in ("not a backchannel", "none", "not backchannel interjection"):
        kind = "not backchannel"
    return BackchannelVerdict(kind, emotion, sentiment)


def _line(r: Response) -> str:
    return f"Speaker {r.speaker}: {r.text}"


def _insertion_index(overlappee: Response, at_s: float) -> int:
    toks = overlappee.tokens
    best_k, best_dist = 0, None
    for k in range(len(toks) + 1):
        if k == 0:
            t = toks[0].start_s
        elif k == len(toks):
            t = toks[-1].end_s
        else:
            t = (toks[k - 1].end_s + toks[k].start_s) / 2
        dist = abs(t - at_s)
        if best_dist is None or dist < best_dist:
            best_k, best_dist = k, dist
    return best_k


def build_backchannel_prompt(conversation: Conversation, target: Response, cfg: PipelineConfig) -> str:
    if target.overlap is None:
        raise PromptError(f"response {target.id} has no overlappee partner")
    try:
        overlappee = conversation.response(target.overlap.partner_response_id)
    except KeyError:
        raise PromptError(
            f"partner {target.overlap.partner_response_id} of {target.id} is not in the conversation"
        ) from None

    history = [r for r in conversation.responses if r.id != target.id]
    idx = next(i for i, r in enumerate(history) if r.id == overlappee.id)
    before = history[max(0, idx - cfg.context_before) : idx]
    after = history[idx + 1 : idx + 1 + cfg.context_after]

    k = _insertion_index(overlappee, target.start_s)
    pieces = [t.render() for t in overlappee.tokens]
    pieces.insert(k, f"{{{{{{(TARGET) Speaker {target.speaker}: {target.text}}}}}}}")
    lines = [_line(r) for r in before]
    lines.append(f"Speaker {overlappee.speaker}: " + " ".join(pieces))
    lines.extend(_line(r) for r in after)

    return Template(load_asset("backchannel_prompt.txt")).substitute(
        target_text=target.text,
        target_speaker=target.speaker,
        dialog="\n".join(lines),
        target_json=json.dumps(target.text),
    )


def request_verdict(client: ChatClient, prompt: str, cfg: PipelineConfig, tag: str = "") -> BackchannelVerdict | None:
    """Ask for a verdict; ``None`` once the reply stays malformed after the retries."""
    request = ChatRequest.user(
        prompt,
        model=cfg.llm.model,
        temperature=cfg.llm.classification_temperature,
        max_tokens=cfg.llm.max_tokens,
        tag=tag,
    )
    for attempt in range(1 + MAX_FORMAT_RETRIES):
        text = client.complete(request)
        try:
            return parse_verdict(text)
        except (NoJsonFound, ValueError) as exc:
            logger.info("malformed verdict for %s (attempt %d): %s", tag, attempt + 1, exc)
    return None


def resolve_backchannels(
    conversation: Conversation,
    client: ChatClient,
    cfg: PipelineConfig,
    warnings: list[str] | None = None,
) -> Conversation:
    """Turn every PendingBackchannel into a backchannel kind or an unsuccessful interjection."""
    warnings = warnings if warnings is not None else []
    targets = [r for r in conversation.responses if r.label is ResponseLabel.PENDING_BACKCHANNEL]
    prompts = {r.id: build_backchannel_prompt(conversation, r, cfg) for r in targets}

    def work(r: Response):
        try:
            return r.id, request_verdict(client, prompts[r.id], cfg, tag=f"{conversation.id}/{r.id}"), None
        except GatewayError as exc:
            return r.id, None, exc

    with ThreadPoolExecutor(max_workers=max(1, cfg.llm.max_in_flight)) as pool:
        results = list(pool.map(work, targets))

    verdicts = {}
    errors = []
    for rid, verdict, exc in results:
        if exc is not None:
            errors.append((rid, exc))
        else:
            verdicts[rid] = verdict

    updated = []
    for r in conversation.responses:
        if r.id not in verdicts:
            updated.append(r)
            continue
        verdict = verdicts[r.id]
        if verdict is None:
            warnings.append(f"{conversation.id}/{r.id}: no well-formed verdict; labelled unsuccessful interjection")
            updated.append(replace(r, label=ResponseLabel.UNSUCCESSFUL_INTERJECTION))
        else:
            updated.append(
                replace(r, label=verdict.label, bc_emotion5=verdict.emotion5, bc_sentiment5=verdict.sentiment5)
            )
    resolved = replace(conversation, responses=tuple(updated))
    if errors:
        rid, exc = errors[0]
        raise BackchannelResolutionError(f"{conversation.id}/{rid}: {exc}", resolved) from exc
    return resolved


# --- affect -----------------------------------------------------------------

_MARKER_RE = re.compile("|".join(re.escape(m) for m in sorted(LAUGH_MARKERS)))


def strip_markers(text: str) -> str:
    return " ".join(_MARKER_RE.sub(" ", text).split())


class AffectClassifier:
    """``predict(text)`` returns a probability for every class in ``classes``."""

    classes: tuple[str, ...] = ()

    def predict(self, text: str) -> dict[str, float]:
        raise NotImplementedError

    def label(self, text: str) -> str:
        probs = self.predict(text)
        return max(self.classes, key=lambda c: (probs[c], -self.classes.index(c)))


EMOTION_LEXICON = {
    "anger": {"angry", "mad", "furious", "hate", "annoyed", "annoying"},
    "disgust": {"terrible", "gross", "disgusting", "awful", "nasty"},
    "fear": {"scared", "afraid", "worried", "nervous", "scary"},
    "joy": {"happy", "glad", "love", "fun", "great", "wonderful", "enjoy"},
    "sadness": {"sad", "sorry", "miss", "lonely", "unfortunately"},
    "surprise": {"wow", "oh", "really", "amazing", "whoa", "surprised"},
}

SENTIMENT_LEXICON = {
    "positive": {"happy", "glad", "love", "fun", "great", "wonderful", "enjoy", "good", "nice", "amazing", "wow", "awesome"},
    "negative": set().union(
        EMOTION_LEXICON["anger"], EMOTION_LEXICON["disgust"], EMOTION_LEXICON["fear"], EMOTION_LEXICON["sadness"], {"bad"}
    ),
}


class LexiconMock(AffectClassifier):
    """Keyword-count classifier for offline runs. Neutral carries a 0.5 prior."""

    def __init__(self, kind: str):
        if kind == "emotion":
            self.classes, self.lexicon = EMOTIONS, EMOTION_LEXICON
        elif kind == "sentiment":
            self.classes, self.lexicon = SENTIMENTS, SENTIMENT_LEXICON
        else:
            raise ValueError(f"unknown classifier kind {kind!r}")
        self.kind = kind

    def predict(self, text: str) -> dict[str, float]:
        words = text.lower().split()
        scores = {c: 0.0 for c in self.classes}
        scores["neutral"] = 0.5
        for c, vocab in self.lexicon.items():
            scores[c] += sum(1 for w in words if w in vocab)
        total = sum(scores.values())
        return {c: v / total for c, v in scores.items()}


class HttpTextClassifier(AffectClassifier):
    """POST ``{"text": ...}``; expects ``{"labels": {class: probability}}``."""

    def __init__(self, endpoint: str, kind: str, timeout_s: float = 30.0, max_attempts: int = 3, sleep=time.sleep):
        self.endpoint = endpoint
        self.classes = EMOTIONS if kind == "emotion" else SENTIMENTS
        self.kind = kind
        self.timeout_s = timeout_s
        self.max_attempts = max_attempts
        self._sleep = sleep

    def _post(self, text: str) -> dict:
        req = urllib.request.Request(
            self.endpoint,
            data=json.dumps({"text": text}).encode("utf-8"),
            headers={"Content-Type": "application/json"},
            method="POST",
        )
        with urllib.request.urlopen(req, timeout=self.timeout_s) as resp:
            return json.loads(resp.read())

    def predict(self, text: str) -> dict[str, float]:
        last = None
        for attempt in range(self.max_attempts):
            try:
                body = self._post(text)
                return self._normalize(body)
            except (OSError, ValueError, urllib.error.URLError) as exc:
                last = exc
                if attempt + 1 < self.max_attempts:
                    self._sleep(0.5 * 2**attempt)
        raise GatewayError(f"{self.kind} classifier at {self.endpoint} failed: {last}")

    def _normalize(self, body) -> dict[str, float]:
        labels = body.get("labels") if isinstance(body, dict) else None
        if not isinstance(labels, dict):
            raise ValueError("response lacks a 'labels' object")
        probs = {c: 0.0 for c in self.classes}
        for name, p in labels.items():
            name = normalize_key(name)
            if name not in probs:
                raise ValueError(f"unexpected class {name!r}")
            probs[name] = float(p)
        total = sum(probs.values())
        if total <= 0:
            raise ValueError("class probabilities sum to zero")
        return {c: v / total for c, v in probs.items()}


def classify_affect(
    text: str,
    emotion_classifier: AffectClassifier,
    sentiment_classifier: AffectClassifier,
    warnings: list[str] | None = None,
) -> tuple[str, str]:
    clean = strip_markers(text)
    if not clean:
        return "neutral", "neutral"
    try:
        return emotion_classifier.label(clean), sentiment_classifier.label(clean)
    except GatewayError as exc:
        if warnings is not None:
            warnings.append(f"affect classification failed for {clean[:40]!r}: {exc}")
        return "neutral", "neutral"


def apply_affect(
    conversation: Conversation,
    emotion_classifier: AffectClassifier,
    sentiment_classifier: AffectClassifier,
    warnings: list[str] | None = None,
) -> Conversation:
    updated = []
    for r in conversation.responses:
        emotion, sentiment = classify_affect(r.text, emotion_classifier, sentiment_classifier, warnings)
        updated.append(replace(r, emotion=emotion, sentiment=sentiment))
    return replace(conversation, responses=tuple(updated))


def finalize(
    conversation: Conversation,
    client: ChatClient,
    emotion_classifier: AffectClassifier,
    sentiment_classifier: AffectClassifier,
    cfg: PipelineConfig,
    warnings: Sequence[str] | None = None,
) -> Conversation:
    """Backchannel resolution followed by affect labelling."""
    conv = resolve_backchannels(conversation, client, cfg, warnings)
    return apply_affect(conv, emotion_classifier, sentiment_classifier, warnings)
