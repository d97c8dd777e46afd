"""Flat-file persistence: corpora, annotation sets, judgement files, run records.

All files are UTF-8 JSON; corpora, annotations and judgement files hold one
object per line. Character offsets count Unicode code points.
"""

from __future__ import annotations

import json
import os
import uuid
from collections.abc import Mapping
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Iterator, Optional, Sequence

from metarev.domain import DocType, Judgement, Sample, SourceDocument, Span, SpanKind, validate_sample
from metarev.errors import DanglingDocRef, DecodeError, SpanOutOfRange, StoreIOError, ValidationError


def _iter_json_lines(path: str | Path) -> Iterator[tuple[int, Any]]:
    try:
        handle = open(path, encoding="utf-8")
    except OSError as exc:
        raise StoreIOError(f"cannot read {path}: {exc}") from exc
    with handle:
        for line_no, line in enumerate(handle, 1):
            if not line.strip():
                continue
            try:
                yield line_no, json.loads(line)
            except json.JSONDecodeError as exc:
                raise DecodeError(line_no, exc.msg) from None


def _write_json_lines(path: str | Path, records: Iterable[Mapping[str, Any]]) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as handle:
            for record in records:
                handle.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")
    except OSError as exc:
        raise StoreIOError(f"cannot write {path}: {exc}") from exc
    return path


def load_corpus(path: str | Path, min_year: Optional[int] = None) -> list[Sample]:
    """Read and validate a corpus file, preserving record order.

    Validation problems from every record are collected and raised together,
    each issue path prefixed with the zero-based record index.
    """
    samples: list[Sample] = []
    issues: list[tuple[str, str]] = []
    for index, (_, raw) in enumerate(_iter_json_lines(path)):
        try:
            sample = validate_sample(raw)
        except ValidationError as exc:
            issues.extend((f"[{index}].{p}" if p else f"[{index}]", reason) for p, reason in exc.issues)
            continue
        if min_year is None or sample.year >= min_year:
            samples.append(sample)
    if issues:
        raise ValidationError(issues)
    return samples


def save_corpus(samples: Iterable[Sample], path: str | Path) -> Path:
    return _write_json_lines(path, (s.to_record() for s in samples))


def document_index(samples: Iterable[Sample]) -> dict[str, tuple[Sample, SourceDocument]]:
    """Map every doc_id (sources and meta-reviews) to its sample and document."""
    index: dict[str, tuple[Sample, SourceDocument]] = {}
    for sample in samples:
        for doc in sample.documents:
            index[doc.doc_id] = (sample, doc)
    return index


@dataclass(frozen=True)
class AnnotationSet:
    annotator_id: str
    doc_id: str
    judgements: tuple[Judgement, ...]
    spans: tuple[Span, ...]

    def spans_of(self, kind: SpanKind) -> list[Span]:
        return [s for s in self.spans if s.kind is kind]

    def to_record(self) -> dict[str, Any]:
        return {
            "annotator_id": self.annotator_id,
            "doc_id": self.doc_id,
            "spans": [{"kind": s.kind.value, "start": s.start, "end": s.end} for s in self.spans],
            "judgements": [{k: v for k, v in j.to_dict().items() if k != "doc_id"} for j in self.judgements],
        }


def _parse_span(raw: Any, where: str) -> Span:
    if not isinstance(raw, Mapping):
        raise DecodeError(0, f"{where}: span is not an object")
    try:
        kind = SpanKind(str(raw["kind"]).strip().capitalize())
        start, end = int(raw["start"]), int(raw["end"])
    except (KeyError, ValueError, TypeError) as exc:
        raise DecodeError(0, f"{where}: malformed span ({exc})") from None
    if not 0 <= start < end:
        raise SpanOutOfRange(f"{where}: span [{start}, {end}) is empty or negative")
    return Span(kind, start, end)


def link_annotation(annotation: AnnotationSet, text: str) -> None:
    """Check spans against the document text and verbatim judgements against spans."""
    for span in annotation.spans:
        if span.end > len(text):
            raise SpanOutOfRange(
                f"{annotation.annotator_id}/{annotation.doc_id}: span [{span.start}, {span.end}) "
                f"exceeds document length {len(text)}"
            )
    for kind, attr in ((SpanKind.CONTENT, "content_expression"), (SpanKind.SENTIMENT, "sentiment_expression")):
        highlighted = {text[s.start : s.end].strip() for s in annotation.spans_of(kind)}
        for j in annotation.judgements:
            if j.verbatim and getattr(j, attr).strip() not in highlighted:
                raise SpanOutOfRange(
                    f"{annotation.annotator_id}/{annotation.doc_id}: {attr} {getattr(j, attr)!r} "
                    f"has no matching {kind.value} span"
                )


def load_annotations(
    path: str | Path,
    documents: Optional[Mapping[str, SourceDocument | tuple[Sample, SourceDocument]]] = None,
) -> list[AnnotationSet]:
    """Read an annotation file.

    Span shape is always checked. When ``documents`` (doc_id to document, as
    returned by :func:`document_index`) is given, every annotation is linked:
    unknown doc ids raise :class:`DanglingDocRef` and spans past the end of
    the text raise :class:`SpanOutOfRange`.
    """
    out: list[AnnotationSet] = []
    for line_no, raw in _iter_json_lines(path):
        if not isinstance(raw, Mapping):
            raise DecodeError(line_no, "record is not an object")
        doc_id = str(raw.get("doc_id") or "")
        annotator = str(raw.get("annotator_id") or "")
        if not doc_id or not annotator:
            raise DecodeError(line_no, "annotator_id and doc_id are required")
        spans = tuple(_parse_span(s, f"line {line_no}") for s in raw.get("spans") or [])
        try:
            judgements = tuple(Judgement.from_dict(j, doc_id=doc_id) for j in raw.get("judgements") or [])
        except ValueError as exc:
            raise DecodeError(line_no, f"bad judgement: {exc}") from None
        annotation = AnnotationSet(annotator, doc_id, judgements, spans)
        if documents is not None:
            if doc_id not in documents:
                raise DanglingDocRef(doc_id)
            doc = documents[doc_id]
            if isinstance(doc, tuple):
                doc = doc[1]
            link_annotation(annotation, doc.text)
        out.append(annotation)
    return out


def save_annotations(annotations: Iterable[AnnotationSet], path: str | Path) -> Path:
    return _write_json_lines(path, (a.to_record() for a in annotations))


# Judgement files: one judgement per line, tagged with its paper and document.


@dataclass(frozen=True)
class JudgementRecord:
    paper_id: str
    doc_type: DocType
    judgement: Judgement

    def to_record(self) -> dict[str, Any]:
        return {"paper_id": self.paper_id, "doc_type": self.doc_type.value, **self.judgement.to_dict()}


def save_judgements(records: Iterable[JudgementRecord], path: str | Path) -> Path:
    return _write_json_lines(path, (r.to_record() for r in records))


def load_judgements(path: str | Path) -> list[JudgementRecord]:
    out = []
    for line_no, raw in _iter_json_lines(path):
        try:
            out.append(
                JudgementRecord(
                    paper_id=str(raw["paper_id"]),
                    doc_type=DocType(raw["doc_type"]),
                    judgement=Judgement.from_dict(raw),
                )
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise DecodeError(line_no, f"bad judgement record: {exc}") from None
    return out


def judgements_by_doc(records: Iterable[JudgementRecord]) -> dict[str, list[Judgement]]:
    grouped: dict[str, list[Judgement]] = {}
    for r in records:
        grouped.setdefault(r.judgement.doc_id, []).append(r.judgement)
    return grouped


# Run records.


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="microseconds")


def new_run_id() -> str:
    return datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S") + "-" + uuid.uuid4().hex[:12]


@dataclass(frozen=True)
class CallRecord:
    tag: str
    key: str
    prompt: str
    completion: str
    model_id: str = ""
    truncated: bool = False


@dataclass(frozen=True)
class RunEntry:
    sample_id: str
    calls: tuple[CallRecord, ...] = ()
    judgements: tuple[Judgement, ...] = ()
    generated_text: Optional[str] = None
    scores: Mapping[str, Any] = field(default_factory=dict)
    intermediates: Mapping[str, Any] = field(default_factory=dict)
    notes: tuple[str, ...] = ()
    error: Optional[str] = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "sample_id": self.sample_id,
            "calls": [asdict(c) for c in self.calls],
            "judgements": [j.to_dict() for j in self.judgements],
            "generated_text": self.generated_text,
            "scores": dict(self.scores),
            "intermediates": dict(self.intermediates),
            "notes": list(self.notes),
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> RunEntry:
        return cls(
            sample_id=raw["sample_id"],
            calls=tuple(CallRecord(**c) for c in raw.get("calls", [])),
            judgements=tuple(Judgement.from_dict(j) for j in raw.get("judgements", [])),
            generated_text=raw.get("generated_text"),
            scores=raw.get("scores", {}),
            intermediates=raw.get("intermediates", {}),
            notes=tuple(raw.get("notes", [])),
            error=raw.get("error"),
        )


class RunRecord:
    """Provenance of one command execution. Entries can be appended, never edited."""

    def __init__(
        self,
        config: Mapping[str, Any],
        run_id: Optional[str] = None,
        started_at: Optional[str] = None,
        finished_at: Optional[str] = None,
        entries: Iterable[RunEntry] = (),
    ) -> None:
        self.run_id = run_id or new_run_id()
        self.config = dict(config)
        self.started_at = started_at or _now()
        self.finished_at = finished_at
        self._entries: list[RunEntry] = list(entries)

    @property
    def entries(self) -> tuple[RunEntry, ...]:
        return tuple(self._entries)

    def append(self, entry: RunEntry) -> None:
        self._entries.append(entry)

    def finish(self) -> None:
        self.finished_at = _now()

    def to_dict(self, include_timestamps: bool = True) -> dict[str, Any]:
        out: dict[str, Any] = {"run_id": self.run_id, "config": self.config}
        if include_timestamps:
            out["started_at"] = self.started_at
            out["finished_at"] = self.finished_at
        out["entries"] = [e.to_dict() for e in self._entries]
        return out

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> RunRecord:
        return cls(
            config=raw.get("config", {}),
            run_id=raw["run_id"],
            started_at=raw.get("started_at"),
            finished_at=raw.get("finished_at"),
            entries=[RunEntry.from_dict(e) for e in raw.get("entries", [])],
        )

    def __eq__(self, other: object) -> bool:
        return isinstance(other, RunRecord) and self.to_dict() == other.to_dict()

    def __repr__(self) -> str:
        return f"RunRecord(run_id={self.run_id!r}, entries={len(self._entries)})"


def save_run(record: RunRecord, directory: str | Path) -> Path:
    """Write ``<directory>/<run_id>.json``; an existing run file is never overwritten."""
    directory = Path(directory)
    path = directory / f"{record.run_id}.json"
    payload = json.dumps(record.to_dict(), ensure_ascii=False, indent=2, sort_keys=True)
    try:
        directory.mkdir(parents=True, exist_ok=True)
        fd = os.open(path, os.O_WRONLY | os.O_CREAT | os.O_EXCL, 0o644)
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            handle.write(payload + "\n")
    except OSError as exc:
        raise StoreIOError(f"cannot write run record to {path}: {exc}") from exc
    return path


def load_run(path: str | Path) -> RunRecord:
    try:
        with open(path, encoding="utf-8") as handle:
            return RunRecord.from_dict(json.load(handle))
    except OSError as exc:
        raise StoreIOError(f"cannot read run record {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DecodeError(exc.lineno, exc.msg) from None


def write_json_lines(path: str | Path, records: Sequence[Mapping[str, Any]]) -> Path:
    return _write_json_lines(path, records)


def read_json_lines(path: str | Path) -> list[Any]:
    return [raw for _, raw in _iter_json_lines(path)]
