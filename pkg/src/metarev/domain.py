"""Typed vocabulary of the consolidation framework.

Every enumeration renders to the label used in the prompts, and every
``parse_*`` function accepts those labels (plus a few common spellings) so
that ``parse(render(v)) == v`` holds for all members.
"""

from __future__ import annotations

import re
from collections.abc import Mapping
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Optional

from metarev.errors import UnknownFacet, UnknownLevel, ValidationError

RATING_MIN = 1
RATING_MAX = 10


def _fold(label: str) -> str:
    return re.sub(r"[\s_\-]+", " ", label.strip()).casefold()


class CriteriaFacet(str, Enum):
    NOVELTY = "Novelty"
    SOUNDNESS = "Soundness"
    CLARITY = "Clarity"
    ADVANCEMENT = "Advancement"
    COMPLIANCE = "Compliance"
    OVERALL = "Overall"

    @property
    def position(self) -> int:
        return FACETS.index(self)


# Canonical order; defines the facet-vector layout.
FACETS: tuple[CriteriaFacet, ...] = tuple(CriteriaFacet)


class SentimentLevel(str, Enum):
    STRONGLY_POSITIVE = "Strong positive"
    POSITIVE = "Positive"
    NEGATIVE = "Negative"
    STRONGLY_NEGATIVE = "Strong negative"

    @property
    def is_positive(self) -> bool:
        return self in (SentimentLevel.STRONGLY_POSITIVE, SentimentLevel.POSITIVE)

    @property
    def polarity(self) -> str:
        return "positive" if self.is_positive else "negative"


class ConvincingnessLevel(str, Enum):
    NOT_APPLICABLE = "Not applicable"
    NOT_AT_ALL = "Not at all"
    SLIGHTLY_CONVINCING = "Slightly Convincing"
    HIGHLY_CONVINCING = "Highly Convincing"


class Expresser(str, Enum):
    SELF = "Self"
    OTHERS = "Others"


class DocType(str, Enum):
    OFFICIAL_REVIEW = "official_review"
    DISCUSSION = "discussion"
    META_REVIEW = "meta_review"

    @property
    def label(self) -> str:
        return self.value.replace("_", " ").title()


class Decision(str, Enum):
    ACCEPT = "Accept"
    REJECT = "Reject"


class SpanKind(str, Enum):
    CONTENT = "Content"
    SENTIMENT = "Sentiment"


_FACET_ALIASES = {_fold(f.value): f for f in CriteriaFacet}
_FACET_ALIASES[_fold("overall quality")] = CriteriaFacet.OVERALL

_LEVEL_ALIASES = {_fold(v.value): v for v in SentimentLevel}
_LEVEL_ALIASES.update(
    {
        "strongly positive": SentimentLevel.STRONGLY_POSITIVE,
        "very positive": SentimentLevel.STRONGLY_POSITIVE,
        "strongly negative": SentimentLevel.STRONGLY_NEGATIVE,
        "very negative": SentimentLevel.STRONGLY_NEGATIVE,
        "minor positive": SentimentLevel.POSITIVE,
        "minor negative": SentimentLevel.NEGATIVE,
    }
)

_CONVINCINGNESS_ALIASES = {_fold(v.value): v for v in ConvincingnessLevel}
_CONVINCINGNESS_ALIASES.update(
    {
        "n/a": ConvincingnessLevel.NOT_APPLICABLE,
        "not convincing": ConvincingnessLevel.NOT_AT_ALL,
        "not convincing at all": ConvincingnessLevel.NOT_AT_ALL,
    }
)

_DOC_TYPE_ALIASES = {
    "official review": DocType.OFFICIAL_REVIEW,
    "officialreview": DocType.OFFICIAL_REVIEW,
    "review": DocType.OFFICIAL_REVIEW,
    "discussion": DocType.DISCUSSION,
    "comment": DocType.DISCUSSION,
    "meta review": DocType.META_REVIEW,
    "metareview": DocType.META_REVIEW,
}


def parse_facet(label: str) -> CriteriaFacet:
    try:
        return _FACET_ALIASES[_fold(label)]
    except (KeyError, AttributeError):
        raise UnknownFacet(label) from None


def parse_sentiment_level(label: str) -> SentimentLevel:
    try:
        return _LEVEL_ALIASES[_fold(label)]
    except (KeyError, AttributeError):
        raise UnknownLevel(label, "sentiment level") from None


def parse_convincingness(label: str) -> ConvincingnessLevel:
    try:
        return _CONVINCINGNESS_ALIASES[_fold(label)]
    except (KeyError, AttributeError):
        raise UnknownLevel(label, "convincingness level") from None


def parse_expresser(label: str) -> Expresser:
    folded = _fold(label) if isinstance(label, str) else ""
    for value in Expresser:
        if folded == value.value.casefold():
            return value
    raise UnknownLevel(label, "expresser")


def parse_doc_type(label: str) -> DocType:
    folded = _fold(label) if isinstance(label, str) else ""
    for value in DocType:
        if folded == _fold(value.value):
            return value
    try:
        return _DOC_TYPE_ALIASES[folded]
    except KeyError:
        raise UnknownLevel(label, "document type") from None


def parse_decision(label: str) -> Decision:
    folded = _fold(label) if isinstance(label, str) else ""
    for value in Decision:
        if folded == value.value.casefold():
            return value
    raise UnknownLevel(label, "decision")


@dataclass(frozen=True)
class Span:
    kind: SpanKind
    start: int
    end: int

    def __post_init__(self) -> None:
        if not 0 <= self.start < self.end:
            raise ValueError(f"invalid span [{self.start}, {self.end})")


@dataclass(frozen=True)
class Judgement:
    """One opinion unit.

    Components other than the two expressions stay ``None`` until component
    prediction fills them in. ``verbatim`` marks judgements whose expressions
    were found word for word in the judgement sentence.
    """

    judgement_sentence: str
    content_expression: str
    sentiment_expression: str
    facet: Optional[CriteriaFacet] = None
    level: Optional[SentimentLevel] = None
    convincingness: Optional[ConvincingnessLevel] = None
    expresser: Optional[Expresser] = None
    doc_id: str = ""
    verbatim: bool = False

    def __post_init__(self) -> None:
        if not self.content_expression.strip():
            raise ValueError("content_expression is empty")
        if not self.sentiment_expression.strip():
            raise ValueError("sentiment_expression is empty")
        if self.verbatim and not (
            self.content_expression in self.judgement_sentence
            and self.sentiment_expression in self.judgement_sentence
        ):
            raise ValueError("verbatim judgement whose expressions are not in its sentence")
        if self.convincingness is ConvincingnessLevel.NOT_APPLICABLE and self.expresser is not Expresser.OTHERS:
            raise ValueError("convincingness 'Not applicable' requires expresser 'Others'")

    @property
    def is_complete(self) -> bool:
        return None not in (self.facet, self.level, self.convincingness, self.expresser)

    def with_components(
        self,
        facet: CriteriaFacet,
        level: SentimentLevel,
        convincingness: ConvincingnessLevel,
        expresser: Expresser,
    ) -> Judgement:
        return replace(self, facet=facet, level=level, convincingness=convincingness, expresser=expresser)

    @staticmethod
    def expressions_verbatim(sentence: str, content: str, sentiment: str) -> bool:
        return bool(content) and bool(sentiment) and content in sentence and sentiment in sentence

    def to_dict(self) -> dict[str, Any]:
        return {
            "doc_id": self.doc_id,
            "judgement_sentence": self.judgement_sentence,
            "content_expression": self.content_expression,
            "sentiment_expression": self.sentiment_expression,
            "facet": self.facet.value if self.facet else None,
            "level": self.level.value if self.level else None,
            "convincingness": self.convincingness.value if self.convincingness else None,
            "expresser": self.expresser.value if self.expresser else None,
            "verbatim": self.verbatim,
        }

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any], doc_id: str = "") -> Judgement:
        """Build from a decoded record; missing ``verbatim`` is inferred from the text."""

        def opt(key: str, parser):
            value = raw.get(key)
            return parser(value) if value not in (None, "") else None

        sentence = str(raw.get("judgement_sentence") or "")
        content = str(raw.get("content_expression") or "")
        sentiment = str(raw.get("sentiment_expression") or "")
        verbatim = raw.get("verbatim")
        if verbatim is None:
            verbatim = cls.expressions_verbatim(sentence, content, sentiment)
        return cls(
            judgement_sentence=sentence,
            content_expression=content,
            sentiment_expression=sentiment,
            facet=opt("facet", parse_facet),
            level=opt("level", parse_sentiment_level),
            convincingness=opt("convincingness", parse_convincingness),
            expresser=opt("expresser", parse_expresser),
            doc_id=str(raw.get("doc_id") or doc_id),
            verbatim=bool(verbatim),
        )


@dataclass(frozen=True)
class SourceDocument:
    doc_id: str
    doc_type: DocType
    text: str
    rating: Optional[int] = None
    author_role: Optional[str] = None

    def __post_init__(self) -> None:
        if self.rating is not None:
            if self.doc_type is not DocType.OFFICIAL_REVIEW:
                raise ValueError("rating is only allowed on official reviews")
            if not RATING_MIN <= self.rating <= RATING_MAX:
                raise ValueError(f"rating {self.rating} outside [{RATING_MIN}, {RATING_MAX}]")

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"doc_id": self.doc_id, "doc_type": self.doc_type.value, "text": self.text}
        if self.rating is not None:
            out["rating"] = self.rating
        if self.author_role is not None:
            out["author_role"] = self.author_role
        return out


@dataclass(frozen=True)
class Sample:
    paper_id: str
    year: int
    source_documents: tuple[SourceDocument, ...]
    meta_review: SourceDocument
    decision: Optional[Decision] = None
    metadata: Mapping[str, Any] = field(default_factory=dict, compare=False)

    @property
    def official_reviews(self) -> list[SourceDocument]:
        return [d for d in self.source_documents if d.doc_type is DocType.OFFICIAL_REVIEW]

    @property
    def discussions(self) -> list[SourceDocument]:
        return [d for d in self.source_documents if d.doc_type is DocType.DISCUSSION]

    @property
    def ratings(self) -> list[int]:
        return [d.rating for d in self.official_reviews if d.rating is not None]

    @property
    def documents(self) -> list[SourceDocument]:
        """Source documents followed by the meta-review."""
        return [*self.source_documents, self.meta_review]

    def to_record(self) -> dict[str, Any]:
        return {
            **self.metadata,
            "paper_id": self.paper_id,
            "year": self.year,
            "decision": self.decision.value if self.decision else None,
            "meta_review": {"doc_id": self.meta_review.doc_id, "text": self.meta_review.text},
            "source_documents": [d.to_dict() for d in self.source_documents],
        }


def default_meta_review_id(paper_id: str) -> str:
    return f"{paper_id}:meta_review"


def _coerce_rating(value: Any) -> int:
    if isinstance(value, bool):
        raise ValueError("rating must be an integer")
    if isinstance(value, str):
        value = value.strip()
        # OpenReview style labels such as "6: Marginally above acceptance threshold".
        match = re.match(r"^(\d+)\b", value)
        if not match:
            raise ValueError(f"rating {value!r} is not an integer")
        value = int(match.group(1))
    if isinstance(value, float):
        if not value.is_integer():
            raise ValueError(f"rating {value} is not an integer")
        value = int(value)
    if not isinstance(value, int):
        raise ValueError(f"rating {value!r} is not an integer")
    if not RATING_MIN <= value <= RATING_MAX:
        raise ValueError(f"rating {value} outside [{RATING_MIN}, {RATING_MAX}]")
    return value


def validate_sample(raw: Mapping[str, Any] | Sample) -> Sample:
    """Turn a decoded corpus record into a :class:`Sample`.

    All violations are collected and raised together as one
    :class:`ValidationError`. Passing an existing sample re-validates its
    record form, so the operation is idempotent.
    """
    if isinstance(raw, Sample):
        raw = raw.to_record()
    if not isinstance(raw, Mapping):
        raise ValidationError([("", "record is not an object")])

    issues: list[tuple[str, str]] = []

    paper_id = raw.get("paper_id")
    if not isinstance(paper_id, (str, int)) or isinstance(paper_id, bool) or str(paper_id).strip() == "":
        issues.append(("paper_id", "missing or empty"))
        paper_id = ""
    paper_id = str(paper_id).strip()

    year = raw.get("year")
    try:
        if isinstance(year, bool):
            raise TypeError
        year = int(year)  # type: ignore[arg-type]
    except (TypeError, ValueError):
        issues.append(("year", "missing or not an integer"))
        year = 0

    decision = None
    if raw.get("decision") not in (None, ""):
        try:
            decision = parse_decision(raw["decision"])
        except UnknownLevel as exc:
            issues.append(("decision", str(exc)))

    docs: list[SourceDocument] = []
    raw_docs = raw.get("source_documents")
    if not isinstance(raw_docs, list):
        issues.append(("source_documents", "missing or not a list"))
        raw_docs = []
    for i, rd in enumerate(raw_docs):
        path = f"source_documents[{i}]"
        if not isinstance(rd, Mapping):
            issues.append((path, "not an object"))
            continue
        doc_issues_before = len(issues)
        doc_id = rd.get("doc_id")
        if not isinstance(doc_id, (str, int)) or isinstance(doc_id, bool) or str(doc_id).strip() == "":
            issues.append((f"{path}.doc_id", "missing or empty"))
        try:
            doc_type = parse_doc_type(rd.get("doc_type"))
        except UnknownLevel as exc:
            issues.append((f"{path}.doc_type", str(exc)))
            doc_type = None
        if doc_type is DocType.META_REVIEW:
            issues.append((f"{path}.doc_type", "meta-review cannot be a source document"))
        text = rd.get("text")
        if not isinstance(text, str):
            issues.append((f"{path}.text", "missing or not a string"))
        rating = None
        if rd.get("rating") is not None:
            if doc_type is not DocType.OFFICIAL_REVIEW:
                issues.append((f"{path}.rating", "rating present on a non-review document"))
            else:
                try:
                    rating = _coerce_rating(rd["rating"])
                except ValueError as exc:
                    issues.append((f"{path}.rating", str(exc)))
        role = rd.get("author_role")
        if len(issues) == doc_issues_before:
            docs.append(
                SourceDocument(
                    doc_id=str(doc_id).strip(),
                    doc_type=doc_type,  # type: ignore[arg-type]
                    text=text,  # type: ignore[arg-type]
                    rating=rating,
                    author_role=str(role) if role is not None else None,
                )
            )

    meta = raw.get("meta_review")
    meta_doc = None
    if isinstance(meta, str):
        meta = {"text": meta}
    if not isinstance(meta, Mapping) or not isinstance(meta.get("text"), str):
        issues.append(("meta_review.text", "missing or not a string"))
    else:
        meta_id = meta.get("doc_id") or default_meta_review_id(paper_id)
        meta_doc = SourceDocument(doc_id=str(meta_id).strip(), doc_type=DocType.META_REVIEW, text=meta["text"])

    seen: set[str] = set()
    for d in [*docs, *([meta_doc] if meta_doc else [])]:
        if d.doc_id in seen:
            issues.append(("source_documents", f"doc_id not unique: {d.doc_id!r}"))
        seen.add(d.doc_id)

    if raw_docs and not any(d.doc_type is DocType.OFFICIAL_REVIEW for d in docs):
        if not any(p.startswith("source_documents[") for p, _ in issues):
            issues.append(("source_documents", "at least one official review is required"))
    elif not raw_docs and isinstance(raw.get("source_documents"), list):
        issues.append(("source_documents", "at least one official review is required"))

    if issues:
        raise ValidationError(issues)
    extra = {k: v for k, v in raw.items() if k not in {"paper_id", "year", "decision", "meta_review", "source_documents"}}
    return Sample(
        paper_id=paper_id,
        year=year,
        source_documents=tuple(docs),
        meta_review=meta_doc,  # type: ignore[arg-type]
        decision=decision,
        metadata=extra,
    )
