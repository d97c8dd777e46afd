"""Strict, line-oriented parsing of model completions.

Parsers never raise on malformed model output. Problems are reported as
:class:`Diagnostic` values and the offending line is skipped.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Any, Optional, Sequence

from metarev.domain import (
    ConvincingnessLevel,
    CriteriaFacet,
    Expresser,
    Judgement,
    SentimentLevel,
    parse_convincingness,
    parse_expresser,
    parse_facet,
    parse_sentiment_level,
)
from metarev.errors import UnknownFacet, UnknownLevel, UnparseableReply

JUDGEMENT_FIELDS = ("judgement_sentence", "content_expression", "sentiment_expression")

_FENCE_RE = re.compile(r"^\s*```")
_LIST_MARKER_RE = re.compile(r"^\s*(?:[-*•]|\d+[.)])\s+(?=\{)")

_COMPONENT_KEYS = {
    "facet": "facet",
    "criteria_facet": "facet",
    "criteria_facets": "facet",
    "level": "level",
    "sentiment_level": "level",
    "sentiment_levels": "level",
    "sentiment_polarity": "level",
    "sentiment_polarities": "level",
    "polarity": "level",
    "convincingness": "convincingness",
    "convincingness_level": "convincingness",
    "sentiment_convincingness": "convincingness",
    "expresser": "expresser",
    "sentiment_expresser": "expresser",
    "content_expression": "content_expression",
    "sentiment_expression": "sentiment_expression",
    "judgement_sentence": "judgement_sentence",
}


@dataclass(frozen=True)
class Diagnostic:
    line: int
    code: str
    message: str

    def __str__(self) -> str:
        where = f"line {self.line}: " if self.line else ""
        return f"{where}{self.code}: {self.message}"


def _normalize_key(key: str) -> str:
    return re.sub(r"[^0-9a-z]+", "_", key.strip().lower()).strip("_")


def _content_lines(raw: str) -> list[tuple[int, str]]:
    out = []
    for line_no, line in enumerate(raw.splitlines(), 1):
        if not line.strip() or _FENCE_RE.match(line):
            continue
        out.append((line_no, line.strip()))
    return out


def _load_object(line: str) -> Any:
    line = _LIST_MARKER_RE.sub("", line).rstrip(",")
    return json.loads(line)


def parse_judgement_lines(raw: str) -> tuple[list[dict[str, str]], list[Diagnostic]]:
    """Parse extraction output: one object per line with exactly the three expression fields."""
    judgements: list[dict[str, str]] = []
    diagnostics: list[Diagnostic] = []
    for line_no, line in _content_lines(raw or ""):
        try:
            obj = _load_object(line)
        except (json.JSONDecodeError, RecursionError):
            diagnostics.append(Diagnostic(line_no, "not_json", line[:80]))
            continue
        if not isinstance(obj, dict):
            diagnostics.append(Diagnostic(line_no, "not_object", type(obj).__name__))
            continue
        problems = []
        for name in JUDGEMENT_FIELDS:
            value = obj.get(name)
            if not isinstance(value, str) or not value.strip():
                problems.append(f"missing or empty field {name}")
        extra = sorted(set(obj) - set(JUDGEMENT_FIELDS))
        if extra:
            problems.append(f"unexpected fields {', '.join(map(str, extra))}")
        if problems:
            diagnostics.append(Diagnostic(line_no, "bad_fields", "; ".join(problems)))
            continue
        judgements.append({name: obj[name].strip() for name in JUDGEMENT_FIELDS})
    if not judgements and (raw or "").strip():
        diagnostics.append(Diagnostic(0, "all_lines_failed", "no judgement could be parsed"))
    return judgements, diagnostics


@dataclass(frozen=True)
class ComponentRecord:
    index: int
    facet: CriteriaFacet
    level: SentimentLevel
    convincingness: ConvincingnessLevel
    expresser: Expresser


def _same(a: Optional[str], b: Optional[str]) -> bool:
    return a is not None and b is not None and a.strip().casefold() == b.strip().casefold()


def parse_component_lines(
    raw: str, expected: Sequence[Judgement] | int
) -> tuple[list[ComponentRecord], list[Diagnostic]]:
    """Parse component predictions and tie each line back to an input judgement.

    Association uses the content expression first (preferring lines whose
    sentiment expression also matches) and the line position second. Lines
    with unknown labels are dropped. The result is ordered by judgement index.
    """
    judgements = list(expected) if not isinstance(expected, int) else []
    expected_n = expected if isinstance(expected, int) else len(judgements)
    if expected_n < 1:
        raise ValueError("expected_n must be >= 1")
    diagnostics: list[Diagnostic] = []
    parsed: list[tuple[int, int, dict[str, Any]]] = []
    object_lines = 0
    for line_no, line in _content_lines(raw or ""):
        try:
            obj = _load_object(line)
        except (json.JSONDecodeError, RecursionError):
            diagnostics.append(Diagnostic(line_no, "not_json", line[:80]))
            continue
        if not isinstance(obj, dict):
            diagnostics.append(Diagnostic(line_no, "not_object", type(obj).__name__))
            continue
        position = object_lines
        object_lines += 1
        fields = {}
        for key, value in obj.items():
            name = _COMPONENT_KEYS.get(_normalize_key(str(key)))
            if name and name not in fields:
                fields[name] = value
        try:
            missing = [n for n in ("facet", "level", "convincingness", "expresser") if not fields.get(n)]
            if missing:
                raise UnknownLevel(", ".join(missing), "missing component")
            labels = {
                "facet": parse_facet(str(fields["facet"])),
                "level": parse_sentiment_level(str(fields["level"])),
                "convincingness": parse_convincingness(str(fields["convincingness"])),
                "expresser": parse_expresser(str(fields["expresser"])),
            }
        except (UnknownFacet, UnknownLevel) as exc:
            diagnostics.append(Diagnostic(line_no, "unknown_label", str(exc)))
            continue
        if (
            labels["convincingness"] is ConvincingnessLevel.NOT_APPLICABLE
            and labels["expresser"] is not Expresser.OTHERS
        ):
            diagnostics.append(
                Diagnostic(line_no, "invalid_combination", "'Not applicable' convincingness from expresser Self")
            )
            continue
        labels["content_expression"] = fields.get("content_expression")
        labels["sentiment_expression"] = fields.get("sentiment_expression")
        parsed.append((line_no, position, labels))

    if object_lines != expected_n:
        diagnostics.append(Diagnostic(0, "count_mismatch", f"expected {expected_n} lines, got {object_lines}"))

    assigned: dict[int, tuple[int, dict[str, Any]]] = {}
    pending = []
    for line_no, position, labels in parsed:
        content = labels["content_expression"]
        choice = None
        if isinstance(content, str) and judgements:
            matches = [
                i for i, j in enumerate(judgements) if i not in assigned and _same(j.content_expression, content)
            ]
            exact = [i for i in matches if _same(judgements[i].sentiment_expression, labels["sentiment_expression"])]
            choice = (exact or matches or [None])[0]
        if choice is None:
            pending.append((line_no, position, labels))
        else:
            assigned[choice] = (line_no, labels)
    for line_no, position, labels in pending:
        if position < expected_n and position not in assigned:
            assigned[position] = (line_no, labels)
        else:
            diagnostics.append(Diagnostic(line_no, "unassociated", "no matching input judgement"))

    records = [
        ComponentRecord(
            index=i,
            facet=labels["facet"],
            level=labels["level"],
            convincingness=labels["convincingness"],
            expresser=labels["expresser"],
        )
        for i, (_, labels) in sorted(assigned.items())
    ]
    return records, diagnostics


_OBJECT_RE = re.compile(r"\{[^{}]*\}", re.S)
_LEVEL_FIELD_RE = re.compile(r"[\"']?sentiment[ _]level[\"']?\s*:\s*[\"']?([A-Za-z][A-Za-z \-]*?)[\"']?\s*[,}\n]", re.I)


def parse_level_reply(raw: str) -> SentimentLevel:
    """Read the ``Sentiment Level`` field from a single-object reply."""
    objects = _OBJECT_RE.findall(raw or "")
    if not objects:
        raise UnparseableReply("reply contains no object")
    for text in objects:
        label = None
        try:
            obj = json.loads(text)
        except json.JSONDecodeError:
            obj = None
        if isinstance(obj, dict):
            for key, value in obj.items():
                if _normalize_key(str(key)) == "sentiment_level" and isinstance(value, str):
                    label = value
                    break
        if label is None:
            # The requested format embeds the content expression unquoted, so JSON decoding often fails.
            match = _LEVEL_FIELD_RE.search(text)
            label = match.group(1) if match else None
        if label is not None:
            try:
                return parse_sentiment_level(label)
            except UnknownLevel:
                continue
    raise UnparseableReply("no recognizable sentiment level in reply")
