"""Laugh-token integration, response segmentation and overlap labelling."""

from __future__ import annotations

import bisect
from dataclasses import replace
from typing import Sequence

from .core import (
    SPEAKERS,
    TIME_EPS,
    Conversation,
    LaughEvent,
    OverlapAnnotation,
    OverlapKind,
    OverlapRef,
    PipelineConfig,
    Response,
    ResponseLabel,
    Token,
    TokenKind,
    WordToken,
    sort_responses,
)
from .ingest import TranscriptDocument, trim_silences


def integrate_laughs(words: Sequence[WordToken], laughs: Sequence[LaughEvent]) -> list[Token]:
    """Merge one channel's laugh events into its word stream.

    A laugh that touches no word becomes a standalone ``[Laughter]`` token.
    Otherwise ``[StartLaugh]`` goes right before the first word it touches
    and ``[EndLaugh]`` right after the last one.
    """
    words = list(words)
    starts = [w.start_s for w in words]
    ends = [w.end_s for w in words]
    opens: dict[int, list[int]] = {}
    closes: dict[int, list[int]] = {}
    standalone: dict[int, list[LaughEvent]] = {}

    ordered = sorted(laughs, key=lambda lg: (lg.start_s, lg.end_s))
    for li, lg in enumerate(ordered):
        first = bisect.bisect_right(ends, lg.start_s)
        last = bisect.bisect_left(starts, lg.end_s) - 1
        if first <= last:
            opens.setdefault(first, []).append(li)
            closes.setdefault(last, []).append(li)
        else:
            # position of the first word starting at or after the laugh's end
            standalone.setdefault(bisect.bisect_left(starts, lg.end_s), []).append(lg)

    tokens: list[Token] = []
    for k in range(len(words) + 1):
        for lg in standalone.get(k, ()):
            tokens.append(Token.marker(TokenKind.LAUGHTER, lg.start_s, lg.end_s, lg.speaker))
        if k == len(words):
            break
        w = words[k]
        for _ in opens.get(k, ()):
            tokens.append(Token.marker(TokenKind.START_LAUGH, w.start_s, w.start_s, w.speaker))
        tokens.append(Token.word(w))
        for _ in closes.get(k, ()):
            tokens.append(Token.marker(TokenKind.END_LAUGH, w.end_s, w.end_s, w.speaker))
    return tokens


def _repair_laugh_pairs(groups: list[list[Token]]) -> list[list[Token]]:
    # A laugh spanning a response boundary is closed at the first response's
    # tail and reopened at the next one's head.
    carried = 0
    out = []
    for group in groups:
        head = group[0]
        fixed = [
            Token.marker(TokenKind.START_LAUGH, head.start_s, head.start_s, head.speaker)
            for _ in range(carried)
        ]
        depth = carried
        for tok in group:
            if tok.kind is TokenKind.START_LAUGH:
                depth += 1
            elif tok.kind is TokenKind.END_LAUGH:
                if depth == 0:
                    continue  # unmatched close; cannot happen for integrate_laughs output
                depth -= 1
            fixed.append(tok)
        tail_end = max(t.end_s for t in group)
        fixed.extend(
            Token.marker(TokenKind.END_LAUGH, tail_end, tail_end, head.speaker) for _ in range(depth)
        )
        carried = depth
        out.append(fixed)
    return out


def response_id(speaker: str, index: int) -> str:
    return f"{speaker}-{index:04d}"


def build_responses(tokens: Sequence[Token], gap_threshold_s: float) -> list[Response]:
    """Split one speaker's token stream into responses at gaps >= ``gap_threshold_s``."""
    groups: list[list[Token]] = []
    current_end = None
    for tok in tokens:
        if groups and tok.start_s - current_end < gap_threshold_s - TIME_EPS:
            groups[-1].append(tok)
            current_end = max(current_end, tok.end_s)
        else:
            groups.append([tok])
            current_end = tok.end_s
    groups = _repair_laugh_pairs(groups)
    return [
        Response(id=response_id(g[0].speaker, i), speaker=g[0].speaker, tokens=tuple(g))
        for i, g in enumerate(groups)
    ]


def _classify_pair(x: Response, y: Response, min_overlap_s: float) -> OverlapAnnotation | None:
    lo = max(x.start_s, y.start_s)
    hi = min(x.end_s, y.end_s)
    if hi - lo < min_overlap_s - TIME_EPS:
        return None
    if abs(x.start_s - y.start_s) <= TIME_EPS:
        return None  # simultaneous onset: neither response overlaps the other
    overlappee, overlapper = (x, y) if x.start_s < y.start_s else (y, x)
    if overlappee.end_s > overlapper.end_s + TIME_EPS:
        kind = OverlapKind.FULLY
    else:
        kind = OverlapKind.PARTIAL
    return OverlapAnnotation(overlapper.id, overlappee.id, kind, lo, hi)


def detect_overlaps(
    responses_a: Sequence[Response], responses_b: Sequence[Response], min_overlap_s: float
) -> list[OverlapAnnotation]:
    """Cross-speaker overlaps lasting at least ``min_overlap_s``.

    Both inputs are time-ordered and internally non-overlapping, so a single
    forward pointer into ``responses_b`` suffices.
    """
    found = []
    j0 = 0
    for a in responses_a:
        while j0 < len(responses_b) and responses_b[j0].end_s <= a.start_s:
            j0 += 1
        j = j0
        while j < len(responses_b) and responses_b[j].start_s < a.end_s:
            ann = _classify_pair(a, responses_b[j], min_overlap_s)
            if ann is not None:
                found.append(ann)
            j += 1
    found.sort(key=lambda o: (o.overlap_start_s, o.overlapper_response_id, o.overlappee_response_id))
    return found


def _precedence(ann: OverlapAnnotation):
    return (ann.overlap_start_s, 0 if ann.kind is OverlapKind.PARTIAL else 1, ann.overlappee_response_id)


def assign_candidate_labels(conversation: Conversation) -> Conversation:
    """Label overlappers from their earliest overlap; everything else is a Turn."""
    chosen: dict[str, OverlapAnnotation] = {}
    for ann in conversation.overlaps:
        prev = chosen.get(ann.overlapper_response_id)
        if prev is None or _precedence(ann) < _precedence(prev):
            chosen[ann.overlapper_response_id] = ann
    responses = []
    for r in conversation.responses:
        ann = chosen.get(r.id)
        if ann is None:
            responses.append(replace(r, label=ResponseLabel.TURN, overlap=None))
        else:
            label = (
                ResponseLabel.SUCCESSFUL_INTERJECTION
                if ann.kind is OverlapKind.PARTIAL
                else ResponseLabel.PENDING_BACKCHANNEL
            )
            responses.append(
                replace(r, label=label, overlap=OverlapRef(ann.kind, ann.overlappee_response_id))
            )
    return replace(conversation, responses=tuple(responses))


def speaker_tokens(doc: TranscriptDocument, speaker: str) -> list[Token]:
    words = trim_silences(doc.channel(speaker).words, doc.silences_for(speaker))
    return integrate_laughs(words, doc.laughs_for(speaker))


def annotate_document(doc: TranscriptDocument, cfg: PipelineConfig | None = None) -> Conversation:
    """Silence trimming through candidate labels for one transcript."""
    cfg = cfg or PipelineConfig()
    per_speaker = {
        spk: build_responses(speaker_tokens(doc, spk), cfg.gap_threshold_s) for spk in SPEAKERS
    }
    overlaps = detect_overlaps(per_speaker["A"], per_speaker["B"], cfg.min_overlap_s)
    responses = sort_responses(per_speaker["A"] + per_speaker["B"])
    duration = max([doc.duration_s] + [r.end_s for r in responses])
    conv = Conversation(doc.conversation_id, duration, responses, tuple(overlaps))
    return assign_candidate_labels(conv)
