from __future__ import annotations

import pytest

from metarev.domain import CriteriaFacet, DocType, SentimentLevel, SourceDocument
from metarev.errors import BackendUnavailable, NoJudgements
from metarev.gateway import CompletionResult, Gateway
from metarev.pipeline import (
    STRICT_REMINDER,
    GenerationStrategy,
    LevelEvidence,
    ScoreTable,
    cluster_by_facet,
    compute_fusion_eval,
    evaluate_run,
    expected_completions,
    extract_judgements,
    extract_sample,
    format_documents,
    generate_meta_review,
    judge_document,
    map_ordered,
    predict_meta_sentiment,
    sentiment_prediction_accuracy,
)
from metarev.store import load_corpus
from support.builders import judgement
from support.cases import FUSION_CASES
from support.fusion import fusion_sources
from support.scripted import ScriptedBackend, respond

F, L = CriteriaFacet, SentimentLevel


@pytest.fixture
def samples(data_dir):
    return load_corpus(data_dir / "corpus.jsonl")


@pytest.fixture
def gateway():
    return Gateway(ScriptedBackend(), "scripted-1")


class Scripted:
    """Serves queued replies, then falls back to the scripted model."""

    backend_id = "queue"

    def __init__(self, *replies):
        self.replies = list(replies)
        self.prompts = []

    def complete(self, request):
        self.prompts.append(request.prompt)
        text = self.replies.pop(0) if self.replies else respond(request.prompt)
        return CompletionResult(text)


class Down:
    backend_id = "down"

    def complete(self, request):
        raise BackendUnavailable("connection refused")


def test_format_documents_orders_and_drops(samples):
    sample = samples[2]
    text, dropped = format_documents(sample)
    assert dropped == []
    assert text.index("[syn-003:r2]") < text.index("[syn-003:d1]") < text.index("[syn-003:d2]")
    full = len(text)
    text, dropped = format_documents(sample, budget=full - 1)
    assert dropped == ["syn-003:d2"]
    text, dropped = format_documents(sample, budget=10)
    assert dropped == ["syn-003:d1", "syn-003:d2"]
    assert "[syn-003:r1]" in text


def test_extract_marks_verbatim(gateway, samples):
    doc = samples[0].source_documents[0]
    judgements, diags = extract_judgements(doc, gateway)
    assert [j.content_expression for j in judgements] == ["The proposed idea", "The experimental evaluation"]
    assert all(j.verbatim and j.doc_id == doc.doc_id for j in judgements)
    assert diags == []


def test_extract_strict_retry():
    doc = SourceDocument("d", DocType.OFFICIAL_REVIEW, "The writing is clear.")
    lax = Scripted("no idea")
    assert extract_judgements(doc, Gateway(lax, "m"))[0] == []
    assert len(lax.prompts) == 1
    strict = Scripted("no idea")
    judgements, _ = extract_judgements(doc, Gateway(strict, "m"), strict=True)
    assert len(judgements) == 1
    assert strict.prompts[1].endswith(STRICT_REMINDER)


def test_judge_document_two_calls(gateway, samples):
    judgements, _ = judge_document(samples[1].source_documents[0], gateway)
    assert gateway.n_calls == 2
    assert [(j.facet, j.level) for j in judgements] == [
        (F.SOUNDNESS, L.STRONGLY_NEGATIVE),
        (F.ADVANCEMENT, L.NEGATIVE),
    ]
    assert all(j.is_complete for j in judgements)


def test_judge_document_skips_components_when_empty(gateway):
    doc = SourceDocument("d", DocType.DISCUSSION, "Thank you for the reply.")
    assert judge_document(doc, gateway)[0] == []
    assert gateway.n_calls == 1


def test_cluster_canonical_order():
    js = [judgement(F.OVERALL, L.POSITIVE), judgement(F.NOVELTY, L.NEGATIVE), judgement(F.OVERALL, L.NEGATIVE)]
    clusters = cluster_by_facet(js)
    assert [c.facet for c in clusters] == [F.NOVELTY, F.OVERALL]
    assert len(clusters[1].judgements) == 2


def test_predict_meta_sentiment_retries_once():
    backend = Scripted("I think it is negative.")
    level = predict_meta_sentiment("The writing", fusion_sources()[1:2], Gateway(backend, "m"))
    assert level is L.NEGATIVE
    assert len(backend.prompts) == 2


def test_predict_from_full_text(gateway, samples):
    text = format_documents(samples[1])[0]
    assert predict_meta_sentiment("The theoretical analysis", text, gateway) is L.NEGATIVE


@pytest.mark.parametrize("strategy", list(GenerationStrategy))
def test_generation_budget(samples, strategy):
    for sample in samples:
        gw = Gateway(ScriptedBackend(), "scripted-1")
        text, entry = generate_meta_review(sample, strategy, gw)
        assert text and entry.error is None
        n_clusters = len(entry.intermediates.get("sub_summaries", {}))
        assert len(entry.calls) == expected_completions(sample, strategy, n_clusters)
        assert gw.n_calls == 0


def test_pipeline_records_intermediates(gateway, samples):
    text, entry = generate_meta_review(samples[0], "ours_pipeline", gateway)
    assert set(entry.intermediates["sub_summaries"]) == {"Novelty", "Soundness", "Clarity"}
    assert [c.tag for c in entry.calls][-1] == "final"
    assert len(entry.judgements) == 5


def test_generation_failure_is_recorded(samples):
    text, entry = generate_meta_review(samples[0], "naive", Gateway(Down(), "m"))
    assert text is None
    assert entry.error.startswith("BackendUnavailable")


def test_budget_note(gateway, samples):
    _, entry = generate_meta_review(samples[2], "naive", gateway, context_budget=200)
    assert entry.intermediates["dropped_documents"]
    assert entry.notes


@pytest.mark.parametrize("name", sorted(FUSION_CASES))
def test_fusion_cases(gateway, name):
    text, expected = FUSION_CASES[name]
    if expected is None:
        with pytest.raises(NoJudgements):
            compute_fusion_eval(text, fusion_sources(), gateway)
    else:
        score = compute_fusion_eval(text, fusion_sources(), gateway)
        assert score.accuracy == pytest.approx(expected, abs=1e-9)
        assert score.n_judgements == 3


def test_fusion_fallback_facet(gateway):
    score = compute_fusion_eval("The ethics statement is adequate.", fusion_sources(), gateway)
    assert score.fallback_facets == (F.COMPLIANCE,)


def test_evaluate_identity(gateway, samples):
    table = evaluate_run(samples, {s.paper_id: s.meta_review.text for s in samples}, gateway)
    for row in table.rows:
        assert row.rouge1 == row.rouge2 == row.rougeL == 1.0
        assert row.facet_eval == 1.0
    assert table.n_failed == 0


def test_evaluate_missing_and_failed(samples):
    gw = Gateway(Down(), "m")
    table = evaluate_run(samples[:2], {samples[0].paper_id: "The writing is clear."}, gw)
    assert table.rows[0].error.startswith("BackendUnavailable")
    assert table.rows[1].error == "no generated text"
    assert table.excluded("rouge1") == 2
    assert table.mean("rouge1") is None


def test_evaluate_absent_fusion(gateway, samples):
    table = evaluate_run(samples[:1], {samples[0].paper_id: "Thanks to everyone."}, gateway)
    row = table.rows[0]
    assert row.fusion_eval is None and row.error is None
    assert row.facet_eval == 0.0
    assert table.excluded("fusion_eval") == 1


def test_score_table_round_trip(gateway, samples):
    table = evaluate_run(samples, {s.paper_id: s.meta_review.text for s in samples}, gateway, concurrency=3)
    again = ScoreTable.from_records(table.to_records())
    assert again.rows == table.rows
    assert again.to_jsonl() == table.to_jsonl()


def test_map_ordered_keeps_order():
    assert map_ordered(lambda x: x * x, list(range(20)), concurrency=4) == [x * x for x in range(20)]


def test_extract_sample(gateway, samples):
    records, entry = extract_sample(samples[3], gateway)
    assert [r.doc_type for r in records].count(DocType.META_REVIEW) == 3
    assert len(entry.calls) == 6
    records, entry = extract_sample(samples[3], Gateway(Down(), "m"))
    assert records == [] and entry.error


def test_sentiment_prediction_accuracy(gateway, samples):
    sources = {}
    gold = []
    for sample in samples:
        records, _ = extract_sample(sample, gateway)
        sources[sample.paper_id] = [r.judgement for r in records if r.doc_type is not DocType.META_REVIEW]
        gold.extend((sample, r.judgement) for r in records if r.doc_type is DocType.META_REVIEW)
    for mode in LevelEvidence:
        table = sentiment_prediction_accuracy(gold, sources, mode, gateway)
        assert sum(a.total for a in table.per_facet.values()) == len(gold)
        assert all(a.accuracy is None or 0 <= a.accuracy <= 1 for a in table.per_facet.values())
