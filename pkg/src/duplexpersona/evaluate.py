"""Trend alignment, per-trait correlation and cosine similarity of trait predictions."""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass
from importlib import resources
from typing import Mapping, Sequence

from .attributes import ATTRIBUTE_KEYS
from .core import TRAITS, DuplexPersonaError

Scores = Mapping[str, Mapping[str, float]]


class DegenerateInputWarning(UserWarning):
    pass


class TrendTableError(DuplexPersonaError):
    pass


class EvaluationError(DuplexPersonaError):
    pass


@dataclass(frozen=True)
class TrendTable:
    """Expected attribute/trait trends in [-100, 100]; one row per attribute key."""

    values: Mapping[str, Mapping[str, float]]

    def __post_init__(self):
        missing = [a for a in ATTRIBUTE_KEYS if a not in self.values]
        if missing:
            raise TrendTableError(f"trend table is missing row(s): {', '.join(missing)}")
        for attr in ATTRIBUTE_KEYS:
            row = self.values[attr]
            for t in TRAITS:
                if t not in row:
                    raise TrendTableError(f"trend table row {attr!r} is missing column {t!r}")
                if not -100 <= row[t] <= 100:
                    raise TrendTableError(f"trend table cell ({attr}, {t}) = {row[t]} is outside [-100, 100]")

    def weights(self, trait: str) -> dict[str, float]:
        """L1-normalised absolute column; sums to 1 for any non-zero column, all zero otherwise."""
        total = sum(abs(self.values[a][trait]) for a in ATTRIBUTE_KEYS)
        if total == 0:
            return {a: 0.0 for a in ATTRIBUTE_KEYS}
        return {a: abs(self.values[a][trait]) / total for a in ATTRIBUTE_KEYS}

    def sign(self, attribute: str, trait: str) -> int:
        v = self.values[attribute][trait]
        return (v > 0) - (v < 0)

    def negated(self) -> "TrendTable":
        return TrendTable({a: {t: -v for t, v in row.items()} for a, row in self.values.items()})


def parse_trend_table(text: str) -> TrendTable:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or "attribute" not in reader.fieldnames:
        raise TrendTableError("trend table needs an 'attribute' header column")
    values = {}
    for lineno, row in enumerate(reader, start=2):
        attr = (row.get("attribute") or "").strip()
        cells = {}
        for t in TRAITS:
            raw = row.get(t)
            if raw is None or raw.strip() == "":
                raise TrendTableError(f"line {lineno} ({attr}): missing value for {t!r}")
            try:
                cells[t] = float(raw)
            except ValueError:
                raise TrendTableError(f"line {lineno} ({attr}): {raw!r} is not a number") from None
        values[attr] = cells
    return TrendTable(values)


def load_trend_table(path: str | None = None) -> TrendTable:
    """The shipped expected-trend table, or an override file with the same layout."""
    if path is None:
        text = resources.files("duplexpersona").joinpath("assets", "trend_table.csv").read_text(encoding="utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    return parse_trend_table(text)


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson correlation; 0.0 (with a DegenerateInputWarning) when either side is constant."""
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) < 2:
        raise ValueError("pearson needs at least two points")
    n = len(x)
    mx = math.fsum(x) / n
    my = math.fsum(y) / n
    dx = [v - mx for v in x]
    dy = [v - my for v in y]
    sxx = math.fsum(d * d for d in dx)
    syy = math.fsum(d * d for d in dy)
    if sxx == 0 or syy == 0:
        warnings.warn("zero-variance input to pearson; returning 0", DegenerateInputWarning, stacklevel=2)
        return 0.0
    r = math.fsum(a * b for a, b in zip(dx, dy)) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def trend_score(predictions: Scores, attributes: Scores, table: TrendTable) -> dict:
    """Per-trait weighted sum of sign-adjusted correlations between predictions and raw attributes."""
    speakers = sorted(predictions)
    if len(speakers) < 2:
        raise EvaluationError("trend score needs at least two speakers")
    for s in speakers:
        if s not in attributes:
            raise EvaluationError(f"no attributes for speaker {s}")
        absent = [a for a in ATTRIBUTE_KEYS if a not in attributes[s]]
        if absent:
            raise EvaluationError(f"speaker {s} is missing attribute column(s): {', '.join(absent)}")
    per_trait = {}
    for t in TRAITS:
        pred = [float(predictions[s][t]) for s in speakers]
        total = 0.0
        for a, w in table.weights(t).items():
            if w == 0:
                continue
            column = [float(attributes[s][a]) for s in speakers]
            total += w * table.sign(a, t) * pearson(pred, column)
        per_trait[t] = total
    return {"per_trait": per_trait, "average": sum(per_trait.values()) / len(TRAITS)}


def cosine(u: Sequence[float], v: Sequence[float]) -> float:
    nu = math.sqrt(math.fsum(a * a for a in u))
    nv = math.sqrt(math.fsum(b * b for b in v))
    if nu == 0 or nv == 0:
        raise ValueError("cosine of a zero vector")
    return max(-1.0, min(1.0, math.fsum(a * b for a, b in zip(u, v)) / (nu * nv)))


def label_similarity(predictions: Scores, human: Scores) -> dict:
    """Per-trait correlation with human labels and mean per-speaker cosine similarity."""
    speakers = sorted(set(predictions) & set(human))
    if not speakers:
        raise EvaluationError("predictions and human labels share no speakers")
    extra = sorted(set(predictions) ^ set(human))
    if extra:
        warnings.warn(f"{len(extra)} speaker(s) appear on only one side and are ignored", DegenerateInputWarning, stacklevel=2)
    per_trait = {}
    if len(speakers) >= 2:
        for t in TRAITS:
            per_trait[t] = pearson([float(predictions[s][t]) for s in speakers], [float(human[s][t]) for s in speakers])
    cosines = []
    skipped = []
    for s in speakers:
        u = [float(predictions[s][t]) for t in TRAITS]
        v = [float(human[s][t]) for t in TRAITS]
        try:
            cosines.append(cosine(u, v))
        except ValueError:
            skipped.append(s)
    if skipped:
        warnings.warn(f"skipped zero-vector speakers in cosine: {skipped}", DegenerateInputWarning, stacklevel=2)
    return {
        "per_trait": per_trait,
        "average": (sum(per_trait.values()) / len(per_trait)) if per_trait else None,
        "cosine": (sum(cosines) / len(cosines)) if cosines else None,
        "n_speakers": len(speakers),
        "cosine_skipped": skipped,
    }


def load_score_file(path: str) -> dict[str, dict[str, float]]:
    """Read prediction or human-label lines: ``{"conversation", "speaker", "scores": {...}}``."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                key = f"{row['conversation']}/{row['speaker']}"
                scores = {t: float(row["scores"][t]) for t in TRAITS}
            except (ValueError, KeyError, TypeError) as exc:
                raise EvaluationError(f"{path}:{lineno}: malformed score line ({exc})") from None
            for t, v in scores.items():
                if not -100 <= v <= 100:
                    raise EvaluationError(f"{path}:{lineno}: {t}={v} outside [-100, 100]")
            out[key] = scores
    return out


def format_report(trend: dict | None, similarity: dict | None) -> str:
    header = "metric".ljust(14) + "".join(t[:4].rjust(9) for t in TRAITS) + "avg".rjust(9)
    lines = [header]

    def row(name, per_trait, avg):
        cells = "".join(
            (f"{per_trait[t]:9.3f}" if t in per_trait else "        -") for t in TRAITS
        )
        return name.ljust(14) + cells + (f"{avg:9.3f}" if avg is not None else "        -")

    if trend is not None:
        lines.append(row("trend", trend["per_trait"], trend["average"]))
    if similarity is not None:
        lines.append(row("correlation", similarity["per_trait"], similarity["average"]))
        cos = similarity["cosine"]
        lines.append("cosine".ljust(14) + (f"{cos:.3f}" if cos is not None else "-"))
    return "\n".join(lines) + "\n"
