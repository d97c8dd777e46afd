"""Judgement extraction, sentiment fusion prediction and meta-review generation.

Every model interaction goes through a :class:`~metarev.gateway.Gateway`;
per-sample work runs on a forked gateway so its calls land in that sample's
run entry.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Iterable, Mapping, Optional, Sequence, TypeVar

from metarev.domain import FACETS, CriteriaFacet, DocType, Judgement, Sample, SentimentLevel, SourceDocument
from metarev.errors import BackendError, MetarevError, NoJudgements, UnparseableReply
from metarev.gateway.backends import Gateway
from metarev.gateway.parsing import Diagnostic, parse_component_lines, parse_judgement_lines, parse_level_reply
from metarev.gateway.prompts import PromptTemplate, render_prompt
from metarev.metrics import FusionEvalScore, facet_eval, fusion_accuracy
from metarev.rouge import rouge_suite
from metarev.store import JudgementRecord, RunEntry

log = logging.getLogger(__name__)

STRICT_REMINDER = "Please strictly follow the output format described above."

T = TypeVar("T")
R = TypeVar("R")


class GenerationStrategy(str, Enum):
    NAIVE = "naive"
    LLM_STEPS = "llm_steps"
    OURS_PROMPT = "ours_prompt"
    OURS_PIPELINE = "ours_pipeline"


class LevelEvidence(str, Enum):
    JUDGEMENTS = "judgements"
    FULL_TEXT = "full_text"


@dataclass(frozen=True)
class FacetCluster:
    facet: CriteriaFacet
    judgements: tuple[Judgement, ...]

    def __post_init__(self) -> None:
        if any(j.facet is not self.facet for j in self.judgements):
            raise ValueError(f"cluster {self.facet.value} holds a judgement of another facet")


def _ordered_sources(sample: Sample) -> list[SourceDocument]:
    return sample.official_reviews + sample.discussions


def document_block(doc: SourceDocument) -> str:
    return f"[{doc.doc_id}] {doc.doc_type.label}\n{doc.text}"


def format_documents(sample: Sample, budget: Optional[int] = None) -> tuple[str, list[str]]:
    """Serialize source documents, official reviews first, then discussions.

    With a character ``budget``, trailing discussions are dropped until the
    text fits; reviews are never dropped. Returns the text and dropped ids.
    """
    docs = _ordered_sources(sample)
    dropped: list[str] = []

    def joined() -> str:
        return "\n\n".join(document_block(d) for d in docs)

    text = joined()
    if budget is not None:
        while len(text) > budget and docs and docs[-1].doc_type is DocType.DISCUSSION:
            dropped.insert(0, docs.pop().doc_id)
            text = joined()
        if dropped:
            log.info("sample %s: dropped %d discussion(s) to fit the context budget", sample.paper_id, len(dropped))
        if len(text) > budget:
            log.warning("sample %s: official reviews alone exceed the context budget", sample.paper_id)
    return text, dropped


def _with_reminder(prompt: str) -> str:
    return f"{prompt}\n{STRICT_REMINDER}"


def extract_judgements(
    doc: SourceDocument, gateway: Gateway, strict: bool = False
) -> tuple[list[Judgement], list[Diagnostic]]:
    """Content and sentiment expressions of one document; other components unset."""
    if not doc.text.strip():
        raise ValueError(f"document {doc.doc_id} has no text")
    prompt = render_prompt(PromptTemplate.EXTRACT_EXPRESSIONS, {"source_document": doc.text})
    parsed, diagnostics = parse_judgement_lines(gateway.ask(prompt, "extract").text)
    if not parsed and strict:
        parsed, diagnostics = parse_judgement_lines(gateway.ask(_with_reminder(prompt), "extract:retry").text)
    judgements = []
    for item in parsed:
        sentence, content, sentiment = item["judgement_sentence"], item["content_expression"], item["sentiment_expression"]
        verbatim = Judgement.expressions_verbatim(sentence, content, sentiment) and content in doc.text and sentiment in doc.text
        judgements.append(Judgement(sentence, content, sentiment, doc_id=doc.doc_id, verbatim=verbatim))
    if not judgements:
        log.warning("empty extraction for document %s", doc.doc_id)
    return judgements, diagnostics


def _expression_line(j: Judgement) -> str:
    return json.dumps(
        {
            "content_expression": j.content_expression,
            "sentiment_expression": j.sentiment_expression,
            "criteria_facet": "",
            "sentiment_expresser": "",
            "convincingness_level": "",
            "sentiment_level": "",
        },
        ensure_ascii=False,
    )


def predict_components(
    doc: SourceDocument, partial: Sequence[Judgement], gateway: Gateway, strict: bool = False
) -> tuple[list[Judgement], list[Diagnostic]]:
    """Fill facet, level, convincingness and expresser; unlabelled judgements are dropped."""
    if not partial:
        raise ValueError("no judgements to complete")
    prompt = render_prompt(
        PromptTemplate.PREDICT_COMPONENTS,
        {"source_document": doc.text, "judgement_expressions": "\n".join(_expression_line(j) for j in partial)},
    )
    records, diagnostics = parse_component_lines(gateway.ask(prompt, "components").text, partial)
    if not records and strict:
        records, diagnostics = parse_component_lines(
            gateway.ask(_with_reminder(prompt), "components:retry").text, partial
        )
    complete = [
        partial[r.index].with_components(r.facet, r.level, r.convincingness, r.expresser) for r in records
    ]
    return complete, diagnostics


def judge_document(
    doc: SourceDocument, gateway: Gateway, strict: bool = False
) -> tuple[list[Judgement], list[Diagnostic]]:
    """Extraction followed by component prediction; two completions unless nothing is extracted."""
    partial, diagnostics = extract_judgements(doc, gateway, strict)
    if not partial:
        return [], diagnostics
    complete, more = predict_components(doc, partial, gateway, strict)
    return complete, diagnostics + more


def cluster_by_facet(judgements: Iterable[Judgement]) -> list[FacetCluster]:
    """Stable partition in canonical facet order, empty facets omitted."""
    buckets: dict[CriteriaFacet, list[Judgement]] = {f: [] for f in FACETS}
    for j in judgements:
        if j.facet is None:
            raise ValueError(f"judgement without facet: {j.content_expression!r}")
        buckets[j.facet].append(j)
    return [FacetCluster(f, tuple(js)) for f, js in buckets.items() if js]


def _evidence_line(j: Judgement) -> str:
    return json.dumps(
        {
            "content_expression": j.content_expression,
            "sentiment_expression": j.sentiment_expression,
            "sentiment_level": j.level.value if j.level else "",
            "convincingness_level": j.convincingness.value if j.convincingness else "",
        },
        ensure_ascii=False,
    )


def format_judgements(judgements: Iterable[Judgement]) -> str:
    return "\n".join(_evidence_line(j) for j in judgements)


def predict_meta_sentiment(
    content_expression: str, evidence: Sequence[Judgement] | str, gateway: Gateway
) -> SentimentLevel:
    """Zero-shot sentiment level for a meta-review content expression.

    ``evidence`` is either source judgements or the concatenated source
    texts. An unparseable reply is retried once with a format reminder.
    """
    if not evidence:
        raise ValueError("no evidence to predict from")
    if isinstance(evidence, str):
        prompt = render_prompt(
            PromptTemplate.PREDICT_LEVEL_FROM_FULL_TEXT,
            {"source_texts": evidence, "content_expression": content_expression},
        )
    else:
        prompt = render_prompt(
            PromptTemplate.PREDICT_LEVEL_FROM_JUDGEMENTS,
            {"source_judgements": format_judgements(evidence), "content_expression": content_expression},
        )
    try:
        return parse_level_reply(gateway.ask(prompt, "predict_level").text)
    except UnparseableReply:
        return parse_level_reply(gateway.ask(_with_reminder(prompt), "predict_level:retry").text)


def same_facet_evidence(
    facet: Optional[CriteriaFacet], source_judgements: Sequence[Judgement]
) -> tuple[list[Judgement], bool]:
    """Source judgements on ``facet``; falls back to all of them (flag True) when none match."""
    matching = [j for j in source_judgements if j.facet is facet]
    if matching:
        return matching, False
    return list(source_judgements), True


@dataclass(frozen=True)
class FacetAccuracy:
    correct: int
    total: int

    @property
    def accuracy(self) -> Optional[float]:
        return self.correct / self.total if self.total else None


@dataclass
class PredictionAccuracyTable:
    mode: LevelEvidence
    per_facet: dict[CriteriaFacet, FacetAccuracy]
    diagnostics: list[str] = field(default_factory=list)


def sentiment_prediction_accuracy(
    gold: Sequence[tuple[Sample, Judgement]],
    source_judgements: Mapping[str, Sequence[Judgement]],
    mode: LevelEvidence | str,
    gateway: Gateway,
) -> PredictionAccuracyTable:
    """Per-facet accuracy of predicting gold meta-review levels from the sources.

    ``source_judgements`` maps paper_id to that sample's source judgements
    (needed in judgements mode only). Gateway failures skip the item.
    """
    mode = LevelEvidence(mode)
    correct = dict.fromkeys(FACETS, 0)
    total = dict.fromkeys(FACETS, 0)
    diagnostics = []
    for sample, judgement in gold:
        if judgement.facet is None or judgement.level is None:
            raise ValueError("gold judgements need facet and level")
        if mode is LevelEvidence.JUDGEMENTS:
            evidence, fell_back = same_facet_evidence(judgement.facet, source_judgements.get(sample.paper_id, ()))
            if fell_back:
                diagnostics.append(f"{sample.paper_id}: no {judgement.facet.value} source judgements, used all")
            if not evidence:
                diagnostics.append(f"{sample.paper_id}: no source judgements, skipped")
                continue
        else:
            evidence = format_documents(sample)[0]
        try:
            predicted = predict_meta_sentiment(judgement.content_expression, evidence, gateway)
        except (BackendError, UnparseableReply) as exc:
            diagnostics.append(f"{sample.paper_id}: {judgement.content_expression!r} skipped ({exc})")
            continue
        total[judgement.facet] += 1
        correct[judgement.facet] += predicted is judgement.level
    return PredictionAccuracyTable(mode, {f: FacetAccuracy(correct[f], total[f]) for f in FACETS}, diagnostics)


def _sub_summary_block(facet: CriteriaFacet, text: str) -> str:
    return f"{facet.value}:\n{text.strip()}"


def _generate(
    sample: Sample, strategy: GenerationStrategy, gateway: Gateway, budget: Optional[int], strict: bool
) -> tuple[str, list[Judgement], dict[str, Any], list[str]]:
    intermediates: dict[str, Any] = {}
    notes: list[str] = []
    judgements: list[Judgement] = []

    def documents() -> str:
        text, dropped = format_documents(sample, budget)
        if dropped:
            intermediates["dropped_documents"] = dropped
            notes.append(f"context budget: dropped {', '.join(dropped)}")
        return text

    if strategy is GenerationStrategy.NAIVE:
        prompt = render_prompt(PromptTemplate.GENERATE_NAIVE, {"input_documents": documents()})
        return gateway.ask(prompt, "generate").text, judgements, intermediates, notes

    if strategy is GenerationStrategy.OURS_PROMPT:
        prompt = render_prompt(PromptTemplate.GENERATE_OURS_LOGIC, {"input_documents": documents()})
        return gateway.ask(prompt, "generate").text, judgements, intermediates, notes

    if strategy is GenerationStrategy.LLM_STEPS:
        steps = gateway.ask(render_prompt(PromptTemplate.GENERATE_LLM_STEPS_ASK, {}), "steps").text.strip()
        intermediates["generated_steps"] = steps
        prompt = render_prompt(
            PromptTemplate.GENERATE_LLM_STEPS_USE, {"input_documents": documents(), "generated_steps": steps}
        )
        return gateway.ask(prompt, "generate").text, judgements, intermediates, notes

    # Five-step pipeline.
    diagnostics: list[str] = []
    for doc in sample.source_documents:
        complete, diags = judge_document(doc, gateway, strict)
        judgements.extend(complete)
        diagnostics.extend(f"{doc.doc_id}: {d}" for d in diags)
    if diagnostics:
        intermediates["diagnostics"] = diagnostics
    clusters = cluster_by_facet(judgements)
    if not clusters:
        raise NoJudgements(f"sample {sample.paper_id}: no judgements extracted from any source document")
    sub_summaries = {}
    for cluster in clusters:
        prompt = render_prompt(
            PromptTemplate.SUB_SUMMARY,
            {"input_judgements": format_judgements(cluster.judgements), "criteria_facet": cluster.facet.value},
        )
        sub_summaries[cluster.facet.value] = gateway.ask(prompt, f"sub_summary:{cluster.facet.value}").text
    intermediates["sub_summaries"] = sub_summaries
    final_prompt = render_prompt(
        PromptTemplate.FINAL_FROM_SUB_SUMMARIES,
        {
            "input_sub_summaries": "\n\n".join(
                _sub_summary_block(CriteriaFacet(f), t) for f, t in sub_summaries.items()
            )
        },
    )
    return gateway.ask(final_prompt, "final").text, judgements, intermediates, notes


def generate_meta_review(
    sample: Sample,
    strategy: GenerationStrategy | str,
    gateway: Gateway,
    context_budget: Optional[int] = None,
    strict: bool = False,
) -> tuple[Optional[str], RunEntry]:
    """Generate one meta-review.

    A failing step aborts the sample: the text is ``None`` and the entry
    carries the error. Calls are logged on a fork of ``gateway``.
    """
    strategy = GenerationStrategy(strategy)
    local = gateway.fork()
    try:
        text, judgements, intermediates, notes = _generate(sample, strategy, local, context_budget, strict)
    except (MetarevError, ValueError) as exc:
        log.error("sample %s (%s) failed: %s", sample.paper_id, strategy.value, exc)
        entry = RunEntry(
            sample_id=sample.paper_id,
            calls=tuple(local.calls),
            intermediates={"strategy": strategy.value},
            error=f"{type(exc).__name__}: {exc}",
        )
        return None, entry
    entry = RunEntry(
        sample_id=sample.paper_id,
        calls=tuple(local.calls),
        judgements=tuple(judgements),
        generated_text=text,
        intermediates={"strategy": strategy.value, **intermediates},
        notes=tuple(notes),
    )
    return text, entry


def expected_completions(sample: Sample, strategy: GenerationStrategy | str, n_clusters: int = 0) -> int:
    strategy = GenerationStrategy(strategy)
    if strategy is GenerationStrategy.LLM_STEPS:
        return 2
    if strategy is GenerationStrategy.OURS_PIPELINE:
        return 2 * len(sample.source_documents) + n_clusters + 1
    return 1


def compute_fusion_eval(
    generated_text: str,
    source_judgements: Sequence[Judgement],
    gateway: Gateway,
    generated_judgements: Optional[Sequence[Judgement]] = None,
    strict: bool = False,
) -> FusionEvalScore:
    """Agreement between levels stated in a generated meta-review and levels
    predicted from the source judgements of the same facet.

    Raises :class:`NoJudgements` when nothing can be extracted from the text;
    callers report that as an absent score.
    """
    if not source_judgements:
        raise ValueError("no source judgements")
    if generated_judgements is None:
        doc = SourceDocument("generated", DocType.META_REVIEW, generated_text)
        generated_judgements = judge_document(doc, gateway, strict)[0] if generated_text.strip() else []
    if not generated_judgements:
        raise NoJudgements("no judgements extracted from the generated meta-review")
    extracted, predicted, fallbacks = [], [], []
    for j in generated_judgements:
        evidence, fell_back = same_facet_evidence(j.facet, source_judgements)
        if fell_back and j.facet not in fallbacks:
            fallbacks.append(j.facet)
        extracted.append(j.level)
        predicted.append(predict_meta_sentiment(j.content_expression, evidence, gateway))
    score = fusion_accuracy(extracted, predicted)
    return FusionEvalScore(score.accuracy, score.n_judgements, tuple(fallbacks))


def map_ordered(fn: Callable[[T], R], items: Sequence[T], concurrency: int = 1) -> list[R]:
    """Apply ``fn`` to every item, possibly concurrently, keeping input order."""
    if concurrency <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=concurrency) as pool:
        return list(pool.map(fn, items))


def extract_sample(
    sample: Sample, gateway: Gateway, strict: bool = False, include_meta_review: bool = True
) -> tuple[list[JudgementRecord], RunEntry]:
    """Complete judgements for every document of a sample, in document order."""
    local = gateway.fork()
    records: list[JudgementRecord] = []
    notes = []
    docs = sample.documents if include_meta_review else list(sample.source_documents)
    try:
        for doc in docs:
            if not doc.text.strip():
                notes.append(f"{doc.doc_id}: empty text, skipped")
                continue
            complete, diags = judge_document(doc, local, strict)
            notes.extend(f"{doc.doc_id}: {d}" for d in diags)
            records.extend(JudgementRecord(sample.paper_id, doc.doc_type, j) for j in complete)
    except BackendError as exc:
        entry = RunEntry(sample.paper_id, calls=tuple(local.calls), notes=tuple(notes), error=f"{type(exc).__name__}: {exc}")
        return [], entry
    entry = RunEntry(
        sample.paper_id,
        calls=tuple(local.calls),
        judgements=tuple(r.judgement for r in records),
        notes=tuple(notes),
    )
    return records, entry


@dataclass(frozen=True)
class SampleScores:
    paper_id: str
    fusion_eval: Optional[float] = None
    fusion_n: int = 0
    facet_eval: Optional[float] = None
    rouge1: Optional[float] = None
    rouge2: Optional[float] = None
    rougeL: Optional[float] = None
    error: Optional[str] = None
    notes: tuple[str, ...] = ()

    def to_record(self) -> dict[str, Any]:
        return {
            "paper_id": self.paper_id,
            "fusion_eval": self.fusion_eval,
            "fusion_n": self.fusion_n,
            "facet_eval": self.facet_eval,
            "rouge1": self.rouge1,
            "rouge2": self.rouge2,
            "rougeL": self.rougeL,
            "error": self.error,
            "notes": list(self.notes),
        }

    @classmethod
    def from_record(cls, raw: Mapping[str, Any]) -> SampleScores:
        return cls(**{**raw, "notes": tuple(raw.get("notes", ()))})


METRIC_COLUMNS = ("fusion_eval", "facet_eval", "rouge1", "rouge2", "rougeL")


@dataclass
class ScoreTable:
    rows: list[SampleScores]
    entries: list[RunEntry] = field(default_factory=list, compare=False)

    def mean(self, metric: str) -> Optional[float]:
        values = [getattr(r, metric) for r in self.rows if getattr(r, metric) is not None]
        return sum(values) / len(values) if values else None

    def excluded(self, metric: str) -> int:
        return sum(getattr(r, metric) is None for r in self.rows)

    @property
    def n_failed(self) -> int:
        return sum(r.error is not None for r in self.rows)

    def summary(self) -> dict[str, Any]:
        return {
            "summary": True,
            "n_samples": len(self.rows),
            "means": {m: self.mean(m) for m in METRIC_COLUMNS},
            "excluded": {m: self.excluded(m) for m in METRIC_COLUMNS},
            "n_failed": self.n_failed,
        }

    def to_records(self) -> list[dict[str, Any]]:
        return [r.to_record() for r in self.rows] + [self.summary()]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True, ensure_ascii=False) + "\n" for r in self.to_records())

    @classmethod
    def from_records(cls, records: Iterable[Mapping[str, Any]]) -> ScoreTable:
        return cls([SampleScores.from_record(r) for r in records if not r.get("summary")])


def _score_sample(
    sample: Sample,
    text: Optional[str],
    gateway: Gateway,
    source_judgements: Optional[Sequence[Judgement]],
    reference_judgements: Optional[Sequence[Judgement]],
    stem: bool,
    strict: bool,
) -> tuple[SampleScores, RunEntry]:
    local = gateway.fork()
    notes: list[str] = []
    if text is None:
        row = SampleScores(sample.paper_id, error="no generated text")
        return row, RunEntry(sample.paper_id, error=row.error)
    try:
        suite = rouge_suite(text, sample.meta_review.text, stem=stem)
        if source_judgements is None:
            source_judgements = []
            for doc in sample.source_documents:
                if doc.text.strip():
                    source_judgements.extend(judge_document(doc, local, strict)[0])
        if reference_judgements is None:
            reference_judgements = (
                judge_document(sample.meta_review, local, strict)[0] if sample.meta_review.text.strip() else []
            )
        generated_doc = SourceDocument(f"{sample.paper_id}:generated", DocType.META_REVIEW, text)
        generated_judgements = judge_document(generated_doc, local, strict)[0] if text.strip() else []

        fusion = None
        fusion_n = 0
        if not source_judgements:
            notes.append("fusion_eval absent: no source judgements")
        else:
            try:
                score = compute_fusion_eval(text, source_judgements, local, generated_judgements, strict)
                fusion, fusion_n = score.accuracy, score.n_judgements
                if score.fallback_facets:
                    notes.append(
                        "fusion_eval fallback to all source judgements for "
                        + ", ".join(f.value for f in score.fallback_facets)
                    )
            except NoJudgements:
                notes.append("fusion_eval absent: no judgements in generated text")
        facet = facet_eval(reference_judgements, generated_judgements).value
    except (MetarevError, ValueError) as exc:
        row = SampleScores(sample.paper_id, error=f"{type(exc).__name__}: {exc}")
        return row, RunEntry(sample.paper_id, calls=tuple(local.calls), error=row.error)
    row = SampleScores(
        sample.paper_id,
        fusion_eval=fusion,
        fusion_n=fusion_n,
        facet_eval=facet,
        rouge1=suite.r1.f1,
        rouge2=suite.r2.f1,
        rougeL=suite.rl.f1,
        notes=tuple(notes),
    )
    entry = RunEntry(
        sample.paper_id,
        calls=tuple(local.calls),
        judgements=tuple(generated_judgements),
        generated_text=text,
        scores={k: v for k, v in row.to_record().items() if k in METRIC_COLUMNS or k == "fusion_n"},
        notes=tuple(notes),
    )
    return row, entry


def evaluate_run(
    samples: Sequence[Sample],
    generated: Mapping[str, str],
    gateway: Gateway,
    source_judgements: Optional[Mapping[str, Sequence[Judgement]]] = None,
    reference_judgements: Optional[Mapping[str, Sequence[Judgement]]] = None,
    stem: bool = False,
    strict: bool = False,
    concurrency: int = 1,
) -> ScoreTable:
    """FusionEval, FacetEval and ROUGE for one generated text per sample.

    ``source_judgements`` / ``reference_judgements`` (keyed by paper_id)
    replace machine extraction for the sources / the human meta-review when
    given. Samples are scored concurrently; rows keep corpus order.
    """

    def score(sample: Sample) -> tuple[SampleScores, RunEntry]:
        return _score_sample(
            sample,
            generated.get(sample.paper_id),
            gateway,
            None if source_judgements is None else list(source_judgements.get(sample.paper_id, ())),
            None if reference_judgements is None else list(reference_judgements.get(sample.paper_id, ())),
            stem,
            strict,
        )

    results = map_ordered(score, list(samples), concurrency)
    return ScoreTable([row for row, _ in results], [entry for _, entry in results])
