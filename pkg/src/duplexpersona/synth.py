"""Synthetic conversations with known labels, brute-force oracles and mock services.

Generated timelines are built in integer milliseconds so every geometric
relation (gap, overlap, end tie) is exact before conversion to seconds.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass, field, replace
from decimal import Decimal
from typing import Mapping, Sequence

from .annotate import response_id
from .attributes import BASICS, _RENDERINGS
from .core import (
    EMOTIONS,
    SPEAKERS,
    TRAITS,
    Conversation,
    DuplexPersonaError,
    LaughEvent,
    OverlapAnnotation,
    OverlapKind,
    OverlapRef,
    Response,
    ResponseLabel,
    Token,
    TokenKind,
    WordToken,
    other_speaker,
    sort_responses,
)
from .ingest import Channel, TranscriptDocument

THRESHOLD_MS = 700  # generator geometry assumes the default gap/overlap thresholds

FILLER = (
    "so we went to the store and then it was like you know i think they have a lot of people "
    "there just kind thing about my work what do when home back school time year city weekend "
    "food call talk maybe well actually sure dog car house job"
).split()

# (keyword, sentiment it should receive)
AFFECT_WORDS = {
    "joy": (("happy", "positive"), ("great", "positive"), ("love", "positive")),
    "anger": (("angry", "negative"), ("furious", "negative")),
    "disgust": (("gross", "negative"), ("awful", "negative")),
    "fear": (("scared", "negative"), ("worried", "negative")),
    "sadness": (("sad", "negative"), ("lonely", "negative")),
    "surprise": (("whoa", "neutral"), ("surprised", "neutral")),
}

# text, emotion, sentiment, 5-class emotion, 5-class sentiment
EMOTIVE_BC = (
    ("wow", "surprise", "positive"),
    ("oh wow", "surprise", "positive"),
    ("oh", "surprise", "neutral"),
)
COGNITIVE_BC = (("yeah", "neutral", "neutral"), ("i see", "neutral", "neutral"), ("right", "neutral", "neutral"))

DEFAULT_AFFECT_WEIGHTS = {
    "neutral": 0.5, "joy": 0.15, "surprise": 0.1, "sadness": 0.07, "anger": 0.06, "disgust": 0.06, "fear": 0.06,
}


class InfeasibleProfile(DuplexPersonaError):
    pass


@dataclass(frozen=True)
class Profile:
    """Event rates for the generator. Listener events are per holder turn."""

    duration_s: float = 150.0
    min_words: int = 3
    max_words: int = 14
    p_backchannel_emotive: float = 0.15
    p_backchannel_cognitive: float = 0.2
    p_interjection_fail: float = 0.1
    p_short_overlap: float = 0.1
    p_interjection_success: float = 0.15
    p_same_speaker: float = 0.1
    p_laugh: float = 0.25
    p_silence: float = 0.3
    p_junk_word: float = 0.1
    boundary_rate: float = 0.25
    affect_weights: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_AFFECT_WEIGHTS))

    def check(self) -> None:
        probs = {
            k: getattr(self, k)
            for k in self.__dataclass_fields__
            if k.startswith("p_") or k == "boundary_rate"
        }
        for k, v in probs.items():
            if not 0 <= v <= 1:
                raise InfeasibleProfile(f"{k}={v} is not a probability")
        listener = (
            self.p_backchannel_emotive + self.p_backchannel_cognitive + self.p_interjection_fail + self.p_short_overlap
        )
        if listener > 1:
            raise InfeasibleProfile(
                f"listener event rates sum to {listener:.2f}; at most one listener event fits in a turn"
            )
        if self.p_interjection_success + self.p_same_speaker > 1:
            raise InfeasibleProfile("transition probabilities exceed 1")
        if not 1 <= self.min_words <= self.max_words:
            raise InfeasibleProfile("need 1 <= min_words <= max_words")
        if self.duration_s < 5:
            raise InfeasibleProfile("duration_s must be at least 5 seconds")
        unknown = set(self.affect_weights) - set(EMOTIONS)
        if unknown or sum(self.affect_weights.values()) <= 0:
            raise InfeasibleProfile(f"bad affect weights {dict(self.affect_weights)}")

    @classmethod
    def no_overlaps(cls, **kwargs) -> "Profile":
        return cls(
            p_backchannel_emotive=0.0,
            p_backchannel_cognitive=0.0,
            p_interjection_fail=0.0,
            p_short_overlap=0.0,
            p_interjection_success=0.0,
            **kwargs,
        )


def _affect_of(texts) -> tuple[str, str]:
    texts = set(texts)
    for tag, pairs in AFFECT_WORDS.items():
        for keyword, sentiment in pairs:
            if keyword in texts:
                return tag, sentiment
    return "neutral", "neutral"


@dataclass
class ScriptedEvent:
    """One scripted utterance; a laugh is carried by the utterance it belongs to."""

    speaker: str
    kind: str  # turn | backchannel_emotive | backchannel_cognitive | interjection_success | interjection_fail | short
    words: list  # [text, start_ms, end_ms]
    emotion: str = "neutral"
    sentiment: str = "neutral"
    bc5: tuple | None = None
    laugh: tuple | None = None  # ("standalone", k, s, e) or ("span", i, j, s, e)
    overlappee: "ScriptedEvent | None" = None

    @property
    def start_s(self) -> float:
        return self.start / 1000

    @property
    def end_s(self) -> float:
        return self.end / 1000

    @property
    def word_count(self) -> int:
        return len(self.words)

    @property
    def start(self) -> int:
        return self.words[0][1]

    @property
    def end(self) -> int:
        return self.words[-1][2]


class _Generator:
    def __init__(self, seed: int, profile: Profile):
        self.rng = random.Random(seed)
        self.p = profile
        self.events: list[ScriptedEvent] = []
        self.last_end = {s: -10_000 for s in SPEAKERS}

    def boundary(self) -> bool:
        return self.rng.random() < self.p.boundary_rate

    def _words_from(self, texts: Sequence[str], start: int, min_dur: int = 0) -> list:
        rng = self.rng
        words, t = [], start
        for i, text in enumerate(texts):
            if i:
                t += 699 if self.boundary() and rng.random() < 0.2 else rng.randint(20, 450)
            dur = rng.randint(150, 550)
            words.append([text, t, t + dur])
            t += dur
        if words[-1][2] - start < min_dur:
            words[-1][2] = start + min_dur
        return words

    def _turn_text(self) -> tuple[list[str], str, str]:
        rng = self.rng
        n = rng.randint(self.p.min_words, self.p.max_words)
        words = [rng.choice(FILLER) for _ in range(n)]
        tags = sorted(self.p.affect_weights)
        tag = rng.choices(tags, weights=[self.p.affect_weights[t] for t in tags])[0]
        if tag == "neutral":
            return words, "neutral", "neutral"
        keyword, sentiment = rng.choice(AFFECT_WORDS[tag])
        words[rng.randrange(n)] = keyword
        return words, tag, sentiment

    def make_turn(self, speaker: str, start: int, kind: str = "turn", min_end: int | None = None) -> ScriptedEvent:
        texts, emotion, sentiment = self._turn_text()
        words = self._words_from(texts, start)
        while min_end is not None and words[-1][2] < min_end:
            gap = self.rng.randint(20, 400)
            s = words[-1][2] + gap
            words.append([self.rng.choice(FILLER), s, s + self.rng.randint(150, 550)])
        ev = ScriptedEvent(speaker, kind, words, emotion, sentiment)
        self.events.append(ev)
        self.last_end[speaker] = max(self.last_end[speaker], ev.end)
        return ev

    def _listener_words(self, kind: str):
        rng = self.rng
        if kind == "backchannel_emotive":
            text, emo, sent = rng.choice(EMOTIVE_BC)
            bc5 = ("surprised", "positive")
        elif kind == "backchannel_cognitive":
            text, emo, sent = rng.choice(COGNITIVE_BC)
            bc5 = ("neutral", "neutral")
        elif kind == "interjection_fail":
            text = " ".join(rng.choice(FILLER) for _ in range(rng.randint(6, 8)))
            emo, sent, bc5 = "neutral", "neutral", ("neutral", "neutral")
        else:  # short listener utterance that never reaches the overlap minimum
            text = " ".join(rng.choice(FILLER) for _ in range(rng.randint(1, 2)))
            emo, sent, bc5 = "neutral", "neutral", None
        return text.split(), emo, sent, bc5

    def embed_listener_event(self, host: ScriptedEvent, latest_end: int | None) -> None:
        rng = self.rng
        p = self.p
        roll = rng.random()
        cut = 0.0
        kind = None
        for name, prob in (
            ("backchannel_emotive", p.p_backchannel_emotive),
            ("backchannel_cognitive", p.p_backchannel_cognitive),
            ("interjection_fail", p.p_interjection_fail),
            ("short", p.p_short_overlap),
        ):
            cut += prob
            if roll < cut:
                kind = name
                break
        if kind is None:
            return
        listener = other_speaker(host.speaker)
        texts, emo, sent, bc5 = self._listener_words(kind)
        if kind == "short":
            dur = 699 if self.boundary() else rng.randint(250, 650)
        else:
            dur = THRESHOLD_MS if self.boundary() else rng.randint(700, 1600)
        words = self._fit_words(texts, dur)
        lo = max(host.start + 100, self.last_end[listener] + (THRESHOLD_MS if self.boundary() else 900))
        hi = host.end - 100 - dur
        if latest_end is not None:
            hi = min(hi, latest_end - THRESHOLD_MS - dur)
        if hi < lo:
            return
        offset = rng.randint(lo, hi)
        for w in words:
            w[1] += offset
            w[2] += offset
        ev = ScriptedEvent(listener, kind, words, emo, sent, bc5)
        if kind != "short":
            ev.overlappee = host
        self.events.append(ev)
        self.last_end[listener] = max(self.last_end[listener], ev.end)

    def _fit_words(self, texts: Sequence[str], dur: int) -> list:
        """Words laid out from 0 to exactly ``dur`` ms with small inner gaps."""
        n = len(texts)
        gaps = [self.rng.randint(10, 60) for _ in range(n - 1)]
        speech = dur - sum(gaps)
        if speech < n * 40:
            gaps = [0] * (n - 1)
            speech = dur
        cuts = sorted(self.rng.sample(range(1, speech), n - 1)) if n > 1 else []
        bounds = [0] + cuts + [speech]
        words, t = [], 0
        for i, text in enumerate(texts):
            length = bounds[i + 1] - bounds[i]
            words.append([text, t, t + length])
            t += length + (gaps[i] if i < n - 1 else 0)
        return words

    def add_laugh(self, ev: ScriptedEvent) -> None:
        rng = self.rng
        words = ev.words
        slots = [k for k in range(1, len(words)) if words[k][1] - words[k - 1][2] >= 150]
        if slots and rng.random() < 0.5:
            k = rng.choice(slots)
            a, b = words[k - 1][2], words[k][1]
            s = rng.randint(a + 10, b - 60)
            e = rng.randint(s + 40, b - 10)
            ev.laugh = ("standalone", k, s, e)
            return
        i = rng.randrange(len(words))
        j = min(len(words) - 1, i + rng.randint(0, 2))
        left_room = 200 if i == 0 else min(200, words[i][1] - words[i - 1][2])
        right_room = 200 if j == len(words) - 1 else min(200, words[j + 1][1] - words[j][2])
        s = words[i][1] - rng.randint(0, left_room)
        e = words[j][2] + rng.randint(0, right_room)
        if words[i][1] == words[i][2] or s >= e:
            return
        ev.laugh = ("span", i, j, s, e)

    def run(self) -> None:
        rng = self.rng
        p = self.p
        limit = int(p.duration_s * 1000)
        host = self.make_turn(rng.choice(SPEAKERS), rng.randint(200, 1500))
        while True:
            if rng.random() < p.p_laugh:
                self.add_laugh(host)
            if host.end >= limit:
                break
            h, listener = host.speaker, other_speaker(host.speaker)
            roll = rng.random()
            if roll < p.p_same_speaker:
                self.embed_listener_event(host, None)
                gap = THRESHOLD_MS if self.boundary() else rng.randint(700, 2500)
                start = max(host.end + gap, self.last_end[h] + THRESHOLD_MS)
                host = self.make_turn(h, start)
                continue
            if roll < p.p_same_speaker + p.p_interjection_success:
                ov = THRESHOLD_MS if self.boundary() else rng.randint(700, 2500)
                start = host.end - ov
                if start > host.start and start >= self.last_end[listener] + THRESHOLD_MS + 1500:
                    self.embed_listener_event(host, start)
                    if start >= self.last_end[listener] + THRESHOLD_MS:
                        host = self._interjection(host, start)
                        continue
            # ordinary hand-over, possibly with a short overlap
            if self.boundary():
                gap = rng.choice((-699, 0, THRESHOLD_MS))
            else:
                gap = rng.randint(-600, 1500)
            start = host.end + gap
            self.embed_listener_event(host, start)
            start = max(start, self.last_end[listener] + THRESHOLD_MS)
            host = self.make_turn(listener, start, min_end=host.end + 100)

    def _interjection(self, host: ScriptedEvent, start: int) -> ScriptedEvent:
        listener = other_speaker(host.speaker)
        tie = self.boundary() and self.rng.random() < 0.5
        if tie:
            ev = self.make_turn(listener, start, kind="interjection_success")
            words = [w for w in ev.words if w[1] < host.end]
            words[-1][2] = host.end
            ev.words[:] = words
            ev.emotion, ev.sentiment = _affect_of(w[0] for w in words)
            self.last_end[listener] = ev.end
        else:
            ev = self.make_turn(
                listener, start, kind="interjection_success", min_end=host.end + self.rng.randint(300, 4000)
            )
        ev.overlappee = host
        return ev


def _tokens(ev: ScriptedEvent) -> list[Token]:
    spk = ev.speaker
    words = [WordToken(t, s / 1000, e / 1000, spk) for t, s, e in ev.words]
    toks: list[Token] = []
    for k, w in enumerate(words):
        if ev.laugh and ev.laugh[0] == "standalone" and ev.laugh[1] == k:
            toks.append(Token.marker(TokenKind.LAUGHTER, ev.laugh[2] / 1000, ev.laugh[3] / 1000, spk))
        if ev.laugh and ev.laugh[0] == "span" and ev.laugh[1] == k:
            toks.append(Token.marker(TokenKind.START_LAUGH, w.start_s, w.start_s, spk))
        toks.append(Token.word(w))
        if ev.laugh and ev.laugh[0] == "span" and ev.laugh[2] == k:
            toks.append(Token.marker(TokenKind.END_LAUGH, w.end_s, w.end_s, spk))
    return toks


_FINAL_LABELS = {
    "turn": ResponseLabel.TURN,
    "short": ResponseLabel.TURN,
    "interjection_success": ResponseLabel.SUCCESSFUL_INTERJECTION,
    "backchannel_emotive": ResponseLabel.EMOTIVE_BACKCHANNEL,
    "backchannel_cognitive": ResponseLabel.COGNITIVE_BACKCHANNEL,
    "interjection_fail": ResponseLabel.UNSUCCESSFUL_INTERJECTION,
}


def _channel_noise(gen: _Generator, events: Sequence[ScriptedEvent], speaker: str):
    """Raw ASR words (with silence padding and junk words) plus silence intervals."""
    rng = gen.rng
    p = gen.p
    words = [list(w) for ev in events for w in ev.words]
    words.sort(key=lambda w: w[1])
    laughs = [ev.laugh for ev in events if ev.laugh]
    raw = [list(w) for w in words]
    silences = []
    junk = []
    for k in range(len(words) - 1):
        a, b = words[k][2], words[k + 1][1]
        if b - a < 100 or rng.random() >= p.p_silence:
            continue
        if any(lg[-2] < b and lg[-1] > a for lg in laughs):
            continue  # keep laugh neighbourhoods simple
        mode = rng.random()
        if mode < 0.3:
            # ASR end overshoots into a silence that starts where the word really ends
            e = rng.randint(a + 1, b)
            silences.append((a, e))
            raw[k][2] = rng.randint(a + 1, e)
        elif mode < 0.6:
            # ASR start too early, inside a silence that ends at the real start
            s = rng.randint(a, b - 1)
            silences.append((s, b))
            raw[k + 1][1] = rng.randint(s, b - 1)
        else:
            s = rng.randint(a, a + (b - a) // 3)
            e = rng.randint(b - (b - a) // 3, b)
            silences.append((s, e))
            if e - s >= 1000 and rng.random() < p.p_junk_word:
                js = rng.randint(s, e - 300)
                junk.append([rng.choice(FILLER), js, rng.randint(js + 1, js + 300)])
    raw.extend(junk)
    raw.sort(key=lambda w: (w[1], w[2]))
    return raw, silences


def generate_conversation(seed: int, profile: Profile | None = None, conversation_id: str | None = None):
    """Return ``(TranscriptDocument, ground-truth Conversation)`` for one seeded script.

    The ground truth carries final labels as they come out of the mock chat
    responder and lexicon affect classifiers.
    """
    profile = profile or Profile()
    profile.check()
    gen = _Generator(seed, profile)
    gen.run()
    conv_id = conversation_id or f"synth-{seed:06d}"

    per_speaker = {s: sorted((e for e in gen.events if e.speaker == s), key=lambda e: e.start) for s in SPEAKERS}
    ids = {}
    for spk, evs in per_speaker.items():
        for i, ev in enumerate(evs):
            ids[id(ev)] = response_id(spk, i)

    responses = []
    overlaps = []
    for ev in gen.events:
        rid = ids[id(ev)]
        overlap = None
        bc5 = ev.bc5 if ev.kind.startswith("backchannel") or ev.kind == "interjection_fail" else None
        if ev.overlappee is not None:
            kind = OverlapKind.PARTIAL if ev.kind == "interjection_success" else OverlapKind.FULLY
            partner = ids[id(ev.overlappee)]
            overlap = OverlapRef(kind, partner)
            overlaps.append(
                OverlapAnnotation(
                    rid,
                    partner,
                    kind,
                    max(ev.start, ev.overlappee.start) / 1000,
                    min(ev.end, ev.overlappee.end) / 1000,
                )
            )
        responses.append(
            Response(
                id=rid,
                speaker=ev.speaker,
                tokens=tuple(_tokens(ev)),
                label=_FINAL_LABELS[ev.kind],
                overlap=overlap,
                emotion=ev.emotion,
                sentiment=ev.sentiment,
                bc_emotion5=bc5[0] if bc5 else None,
                bc_sentiment5=bc5[1] if bc5 else None,
            )
        )
    overlaps.sort(key=lambda o: (o.overlap_start_s, o.overlapper_response_id, o.overlappee_response_id))
    max_end = max(e.end for e in gen.events)
    duration_s = (max_end + gen.rng.randint(500, 2000)) / 1000
    truth = Conversation(conv_id, duration_s, sort_responses(responses), tuple(overlaps), {"generator_seed": seed})

    channels = []
    all_silences = {}
    laughs = []
    for spk in SPEAKERS:
        raw, silences = _channel_noise(gen, per_speaker[spk], spk)
        channels.append(Channel(spk, tuple(WordToken(t, s / 1000, e / 1000, spk) for t, s, e in raw)))
        all_silences[spk] = tuple((s / 1000, e / 1000) for s, e in silences)
        for ev in per_speaker[spk]:
            if ev.laugh:
                laughs.append(LaughEvent(ev.laugh[-2] / 1000, ev.laugh[-1] / 1000, spk))
    laughs.sort(key=lambda lg: (lg.speaker, lg.start_s, lg.end_s))
    doc = TranscriptDocument(conv_id, duration_s, tuple(channels), tuple(laughs), all_silences)
    return doc, truth


def candidate_view(conversation: Conversation) -> Conversation:
    """Ground truth as annotate should emit it: backchannel kinds collapse to Pending, no affect."""
    pending = {
        ResponseLabel.EMOTIVE_BACKCHANNEL,
        ResponseLabel.COGNITIVE_BACKCHANNEL,
        ResponseLabel.UNSUCCESSFUL_INTERJECTION,
    }
    out = []
    for r in conversation.responses:
        label = ResponseLabel.PENDING_BACKCHANNEL if r.label in pending else r.label
        out.append(replace(r, label=label, emotion=None, sentiment=None, bc_emotion5=None, bc_sentiment5=None))
    return replace(conversation, responses=tuple(out))


# --- brute-force oracles ------------------------------------------------------


def _dec(x: float) -> Decimal:
    return Decimal(repr(x))


def brute_force_overlaps(
    responses_a: Sequence[Response], responses_b: Sequence[Response], min_overlap_s: float
) -> list[OverlapAnnotation]:
    """Every A/B pair checked against the overlap definitions in exact decimal arithmetic."""
    out = []
    minimum = _dec(min_overlap_s)
    for a in responses_a:
        for b in responses_b:
            lo = max(_dec(a.start_s), _dec(b.start_s))
            hi = min(_dec(a.end_s), _dec(b.end_s))
            if hi - lo < minimum:
                continue
            if _dec(a.start_s) == _dec(b.start_s):
                continue
            first, second = (a, b) if _dec(a.start_s) < _dec(b.start_s) else (b, a)
            # overlappee still talking after the overlapper stops -> fully
            kind = OverlapKind.FULLY if _dec(first.end_s) > _dec(second.end_s) else OverlapKind.PARTIAL
            out.append(
                OverlapAnnotation(second.id, first.id, kind, max(a.start_s, b.start_s), min(a.end_s, b.end_s))
            )
    out.sort(key=lambda o: (o.overlap_start_s, o.overlapper_response_id, o.overlappee_response_id))
    return out


def brute_force_labels(responses: Sequence[Response], min_overlap_s: float) -> dict[str, ResponseLabel]:
    """Candidate label per response id from pairwise application of the definitions."""
    labels = {}
    for r in responses:
        best = None
        for other in responses:
            if other.speaker == r.speaker:
                continue
            lo = max(_dec(r.start_s), _dec(other.start_s))
            hi = min(_dec(r.end_s), _dec(other.end_s))
            if hi - lo < _dec(min_overlap_s) or not _dec(r.start_s) > _dec(other.start_s):
                continue
            fully = _dec(other.end_s) > _dec(r.end_s)
            key = (lo, 1 if fully else 0)
            if best is None or key < best:
                best = key
        if best is None:
            labels[r.id] = ResponseLabel.TURN
        elif best[1]:
            labels[r.id] = ResponseLabel.PENDING_BACKCHANNEL
        else:
            labels[r.id] = ResponseLabel.SUCCESSFUL_INTERJECTION
    return labels


def brute_force_segments(tokens: Sequence[Token], gap_threshold_s: float) -> list[list[int]]:
    """Indices of tokens per response by a plain left-to-right scan."""
    groups: list[list[int]] = []
    reach = None
    for i, tok in enumerate(tokens):
        if groups and _dec(tok.start_s) - reach < _dec(gap_threshold_s):
            groups[-1].append(i)
            reach = max(reach, _dec(tok.end_s))
        else:
            groups.append([i])
            reach = _dec(tok.end_s)
    return groups


# --- mock chat ------------------------------------------------------------------

_TARGET_RE = re.compile(r"^Target interjection text: (.*)$", re.MULTILINE)
_PCT_RE = re.compile(r"^\s+(\w+): ([\d.]+)% \(average: ([\d.]+)%\)$", re.MULTILINE)
_RENDER_LEVEL = {text: level for family in _RENDERINGS.values() for level, text in zip((-2, -1, 0, 1, 2), family)}


def _mock_backchannel(prompt: str, seed: int) -> str:
    m = _TARGET_RE.search(prompt)
    target = m.group(1) if m else ""
    words = [w for w in target.lower().split() if not w.startswith("[")]
    joined = " ".join(words)
    if len(words) >= 6:
        kind, emotion, sentiment = "not backchannel", "neutral", "neutral"
    elif {"wow", "oh"} & set(words):
        kind, emotion, sentiment = "emotive", "surprised", "positive"
    elif {"yeah", "right"} & set(words) or re.search(r"\bi see\b", joined):
        kind, emotion, sentiment = "cognitive", "neutral", "neutral"
    else:
        kind, emotion, sentiment = "not backchannel", "neutral", "neutral"
    verdict = {"interjection text": target, "interjection type": kind, "emotion": emotion, "sentiment": sentiment}
    return (
        f"1. The dialog around {{{{{{(TARGET)}}}}}} was summarised (mock run, seed {seed}).\n"
        f"2. Target text: {target!r}.\n"
        f"3-6. Rule-based decision: {kind}.\n"
        + json.dumps(verdict, indent=1)
    )


def _mock_personality(prompt: str, seed: int) -> str:
    from .evaluate import load_trend_table

    table = load_trend_table()
    levels: dict[str, int] = {}
    for key, _, caption, _ in BASICS:
        m = re.search(rf"^\s+{re.escape(caption)}: (.+)$", prompt, re.MULTILINE)
        if m and m.group(1).strip() in _RENDER_LEVEL:
            levels[f"basics.{key}"] = _RENDER_LEVEL[m.group(1).strip()]
    section = None
    for line in prompt.splitlines():
        if line.startswith("Emotions:"):
            section = "emotion"
        elif line.startswith("Sentiment:"):
            section = "sentiment"
        elif not line.startswith(" "):
            section = None
        m = _PCT_RE.match(line)
        if section and m:
            diff = float(m.group(2)) - float(m.group(3))
            levels[f"{section}.{m.group(1)}"] = (diff > 0.05) - (diff < -0.05)
    laughing_samples = bool(re.search(r"^\s+Sample \d+: .*\[(Laughter|StartLaugh)\]", prompt, re.MULTILINE))

    verdict = {}
    for t in TRAITS:
        score = sum(
            level * table.sign(attr, t) for attr, level in levels.items() if abs(table.values[attr][t]) >= 50
        )
        if t == "extraversion" and laughing_samples:
            score += 1
        if score >= 3:
            verdict[t] = "highly aligned"
        elif score >= 1:
            verdict[t] = "aligned"
        elif score <= -3:
            verdict[t] = "highly opposed"
        elif score <= -1:
            verdict[t] = "opposed"
        else:
            verdict[t] = "neutral"
    return (
        f"Summary of features (mock run, seed {seed}): {len(levels)} signals read, e.g. {{'laughter': ...}}.\n"
        + json.dumps(verdict, indent=1)
    )


def mock_chat(prompt: str, seed: int = 0) -> str:
    """Rule-based stand-in for the chat model; a pure function of its arguments."""
    if "classify the type of backchannel" in prompt:
        return _mock_backchannel(prompt, seed)
    if "Big Five Inventory" in prompt:
        return _mock_personality(prompt, seed)
    return "No recognised task.\n{}"
