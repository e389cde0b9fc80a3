"""Line-delimited dialog dataset: one header line, then one response per line."""

from __future__ import annotations

import json
from typing import Iterable

from .core import (
    Conversation,
    DuplexPersonaError,
    OverlapAnnotation,
    OverlapKind,
    OverlapRef,
    Response,
    ResponseLabel,
    Token,
    TokenKind,
    sort_responses,
)

SCHEMA = "duplexpersona.dialog"
SCHEMA_VERSION = 1


class DatasetError(DuplexPersonaError):
    pass


def _token_row(t: Token) -> list:
    return [t.render(), t.start_s, t.end_s]


def _response_row(conv_id: str, r: Response) -> dict:
    return {
        "conversation_id": conv_id,
        "response_id": r.id,
        "speaker": r.speaker,
        "start": r.start_s,
        "end": r.end_s,
        "label": r.label.value if r.label else None,
        "text": r.text,
        "overlap": {"kind": r.overlap.kind.value, "partner": r.overlap.partner_response_id} if r.overlap else None,
        "emotion": r.emotion,
        "sentiment": r.sentiment,
        "bc_emotion5": r.bc_emotion5,
        "bc_sentiment5": r.bc_sentiment5,
        "tokens": [_token_row(t) for t in r.tokens],
    }


def dump_dataset(conversation: Conversation) -> str:
    header = {
        "schema": SCHEMA,
        "version": SCHEMA_VERSION,
        "conversation_id": conversation.id,
        "duration_s": conversation.duration_s,
        "overlaps": [
            {
                "overlapper": o.overlapper_response_id,
                "overlappee": o.overlappee_response_id,
                "kind": o.kind.value,
                "start": o.overlap_start_s,
                "end": o.overlap_end_s,
            }
            for o in conversation.overlaps
        ],
        "source": dict(conversation.source),
    }
    lines = [json.dumps(header, sort_keys=True)]
    lines += [json.dumps(_response_row(conversation.id, r), sort_keys=True) for r in conversation.responses]
    return "\n".join(lines) + "\n"


_MARKERS = {k.value: k for k in TokenKind if k is not TokenKind.WORD}


def _parse_token(row, speaker: str) -> Token:
    text, start, end = row
    kind = _MARKERS.get(text, TokenKind.WORD)
    return Token(kind, float(start), float(end), speaker, text)


def load_dataset_lines(lines: Iterable[str], source: str = "<dataset>") -> Conversation:
    it = iter(enumerate(lines, start=1))
    try:
        _, first = next(it)
        header = json.loads(first)
    except StopIteration:
        raise DatasetError(f"{source}: empty dataset") from None
    except ValueError as exc:
        raise DatasetError(f"{source}:1: bad header ({exc})") from None
    if header.get("schema") != SCHEMA or header.get("version") != SCHEMA_VERSION:
        raise DatasetError(f"{source}: unsupported schema {header.get('schema')!r} v{header.get('version')!r}")
    conv_id = header["conversation_id"]
    responses = []
    for lineno, line in it:
        if not line.strip():
            continue
        try:
            row = json.loads(line)
            ov = row["overlap"]
            responses.append(
                Response(
                    id=row["response_id"],
                    speaker=row["speaker"],
                    tokens=tuple(_parse_token(t, row["speaker"]) for t in row["tokens"]),
                    label=ResponseLabel(row["label"]) if row["label"] else None,
                    overlap=OverlapRef(OverlapKind(ov["kind"]), ov["partner"]) if ov else None,
                    emotion=row["emotion"],
                    sentiment=row["sentiment"],
                    bc_emotion5=row["bc_emotion5"],
                    bc_sentiment5=row["bc_sentiment5"],
                )
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise DatasetError(f"{source}:{lineno}: malformed response line ({exc!r})") from None
        if row["conversation_id"] != conv_id:
            raise DatasetError(f"{source}:{lineno}: conversation_id {row['conversation_id']!r} != {conv_id!r}")
    overlaps = tuple(
        OverlapAnnotation(o["overlapper"], o["overlappee"], OverlapKind(o["kind"]), o["start"], o["end"])
        for o in header.get("overlaps", [])
    )
    return Conversation(conv_id, header["duration_s"], sort_responses(responses), overlaps, header.get("source", {}))


def load_dataset(path: str) -> Conversation:
    with open(path, encoding="utf-8") as fh:
        return load_dataset_lines(fh, source=path)
