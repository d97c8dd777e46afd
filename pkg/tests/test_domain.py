from __future__ import annotations

import copy

import pytest
from hypothesis import given
from hypothesis import strategies as st

from metarev.domain import (
    ConvincingnessLevel,
    CriteriaFacet,
    DocType,
    Expresser,
    Judgement,
    SentimentLevel,
    Span,
    SpanKind,
    parse_convincingness,
    parse_doc_type,
    parse_facet,
    parse_sentiment_level,
    validate_sample,
)
from metarev.errors import UnknownFacet, UnknownLevel, ValidationError


def record(**overrides):
    base = {
        "paper_id": "p1",
        "year": 2022,
        "decision": "Accept",
        "meta_review": {"text": "Good paper."},
        "source_documents": [
            {"doc_id": "r1", "doc_type": "official_review", "rating": 6, "text": "The idea is novel."},
            {"doc_id": "r2", "doc_type": "official_review", "rating": 5, "text": "The writing is unclear."},
            {"doc_id": "r3", "doc_type": "official_review", "rating": 8, "text": "Solid work."},
        ],
    }
    base.update(overrides)
    return base


@pytest.mark.parametrize(
    "label, expected",
    [
        ("Overall quality", CriteriaFacet.OVERALL),
        ("novelty", CriteriaFacet.NOVELTY),
        ("SOUNDNESS", CriteriaFacet.SOUNDNESS),
        ("  Clarity ", CriteriaFacet.CLARITY),
    ],
)
def test_parse_facet(label, expected):
    assert parse_facet(label) is expected


def test_parse_facet_unknown():
    with pytest.raises(UnknownFacet):
        parse_facet("impact")


@pytest.mark.parametrize(
    "label, expected",
    [
        ("Strong negative", SentimentLevel.STRONGLY_NEGATIVE),
        ("Strongly positive", SentimentLevel.STRONGLY_POSITIVE),
        ("positive", SentimentLevel.POSITIVE),
    ],
)
def test_parse_sentiment_level(label, expected):
    assert parse_sentiment_level(label) is expected


def test_parse_sentiment_level_unknown():
    with pytest.raises(UnknownLevel):
        parse_sentiment_level("neutral")


@pytest.mark.parametrize(
    "label, expected",
    [
        ("Not applicable", ConvincingnessLevel.NOT_APPLICABLE),
        ("HIGHLY CONVINCING", ConvincingnessLevel.HIGHLY_CONVINCING),
        ("not at all", ConvincingnessLevel.NOT_AT_ALL),
    ],
)
def test_parse_convincingness(label, expected):
    assert parse_convincingness(label) is expected


def test_parse_convincingness_unknown():
    with pytest.raises(UnknownLevel):
        parse_convincingness("maybe")


@pytest.mark.parametrize("enum", [CriteriaFacet, SentimentLevel, ConvincingnessLevel])
def test_labels_round_trip(enum):
    parser = {CriteriaFacet: parse_facet, SentimentLevel: parse_sentiment_level}.get(enum, parse_convincingness)
    for value in enum:
        assert parser(value.value) is value
        assert parser(value.value.upper()) is value


def test_doc_type_aliases():
    assert parse_doc_type("Official Review") is DocType.OFFICIAL_REVIEW
    assert parse_doc_type("discussion") is DocType.DISCUSSION


def test_span_rejects_empty_and_negative():
    with pytest.raises(ValueError):
        Span(SpanKind.CONTENT, 5, 2)
    with pytest.raises(ValueError):
        Span(SpanKind.CONTENT, -1, 2)


def test_not_applicable_requires_others():
    with pytest.raises(ValueError):
        Judgement(
            "x is y.",
            "x",
            "y",
            CriteriaFacet.CLARITY,
            SentimentLevel.POSITIVE,
            ConvincingnessLevel.NOT_APPLICABLE,
            Expresser.SELF,
        )
    j = Judgement(
        "x is y.",
        "x",
        "y",
        CriteriaFacet.CLARITY,
        SentimentLevel.POSITIVE,
        ConvincingnessLevel.NOT_APPLICABLE,
        Expresser.OTHERS,
    )
    assert j.is_complete


def test_verbatim_requires_expressions_in_sentence():
    with pytest.raises(ValueError):
        Judgement("The idea is novel.", "The method", "novel", verbatim=True)
    assert Judgement.from_dict(
        {"judgement_sentence": "The idea is novel.", "content_expression": "The idea", "sentiment_expression": "novel"}
    ).verbatim


def test_judgement_dict_round_trip():
    j = Judgement(
        "The idea is novel.",
        "The idea",
        "novel",
        CriteriaFacet.NOVELTY,
        SentimentLevel.POSITIVE,
        ConvincingnessLevel.HIGHLY_CONVINCING,
        Expresser.SELF,
        doc_id="r1",
        verbatim=True,
    )
    assert Judgement.from_dict(j.to_dict()) == j


def test_validate_well_formed():
    sample = validate_sample(record())
    assert len(sample.official_reviews) == 3
    assert sample.ratings == [6, 5, 8]
    assert sample.meta_review.doc_type is DocType.META_REVIEW


def test_validate_duplicate_doc_id():
    raw = record()
    raw["source_documents"][1]["doc_id"] = "r1"
    with pytest.raises(ValidationError, match="doc_id not unique"):
        validate_sample(raw)


def test_validate_rating_on_discussion():
    raw = record()
    raw["source_documents"].append({"doc_id": "d1", "doc_type": "discussion", "rating": 4, "text": "Thanks."})
    with pytest.raises(ValidationError) as err:
        validate_sample(raw)
    assert any("rating" in path for path, _ in err.value.issues)


def test_validate_collects_all_issues():
    raw = record(year="soon")
    raw["source_documents"][0]["rating"] = 11
    with pytest.raises(ValidationError) as err:
        validate_sample(raw)
    paths = [path for path, _ in err.value.issues]
    assert "year" in paths
    assert "source_documents[0].rating" in paths


def test_validate_requires_official_review():
    raw = record(source_documents=[{"doc_id": "d1", "doc_type": "discussion", "text": "Thanks."}])
    with pytest.raises(ValidationError, match="official review"):
        validate_sample(raw)


def test_rating_label_strings():
    raw = record()
    raw["source_documents"][0]["rating"] = "6: Marginally above acceptance threshold"
    assert validate_sample(raw).ratings[0] == 6


def test_metadata_survives_round_trip():
    raw = record(venue="ICLR")
    sample = validate_sample(raw)
    assert sample.metadata == {"venue": "ICLR"}
    assert validate_sample(sample.to_record()).metadata == {"venue": "ICLR"}


@given(
    ratings=st.lists(st.one_of(st.none(), st.integers(1, 10)), min_size=1, max_size=5),
    decision=st.sampled_from([None, "Accept", "Reject"]),
)
def test_validate_is_idempotent(ratings, decision):
    docs = [
        {"doc_id": f"r{i}", "doc_type": "official_review", "rating": r, "text": f"Review {i}."}
        for i, r in enumerate(ratings)
    ]
    raw = record(source_documents=docs, decision=decision)
    once = validate_sample(copy.deepcopy(raw))
    assert validate_sample(once) == once
    assert validate_sample(once.to_record()) == once
