"""Corpus-level reports: annotator agreement and review-sentiment analyses.

Reports are lists of flat records (written as JSON lines) plus a plain-text
rendering. Cells that cannot be computed are ``None`` and render as "—".
"""

from __future__ import annotations

from collections import defaultdict
from typing import Any, Iterable, Mapping, Optional, Sequence

from metarev.agreement import ALIGNMENT_THRESHOLD, Component, align_judgements, component_agreement, vector_agreement
from metarev.domain import FACETS, DocType, Sample, SpanKind
from metarev.errors import DegenerateAgreement, InsufficientData
from metarev.metrics import facet_frequency, pairwise_review_consistency, voting_disagreement_rate
from metarev.store import AnnotationSet, JudgementRecord, document_index, judgements_by_doc

DASH = "—"

AGREEMENT_COMPONENTS = {
    "content_expression": SpanKind.CONTENT,
    "sentiment_expression": SpanKind.SENTIMENT,
    "criteria_facet": Component.FACET,
    "sentiment_level": Component.LEVEL,
    "convincingness_level": Component.CONVINCINGNESS,
    "expresser": Component.EXPRESSER,
}


def _merge(annotations: Iterable[AnnotationSet]) -> dict[str, AnnotationSet]:
    merged: dict[str, AnnotationSet] = {}
    for a in annotations:
        if a.doc_id in merged:
            prev = merged[a.doc_id]
            a = AnnotationSet(a.annotator_id, a.doc_id, prev.judgements + a.judgements, prev.spans + a.spans)
        merged[a.doc_id] = a
    return merged


def _mask(length: int, spans) -> list[int]:
    out = [0] * length
    for s in spans:
        out[s.start : s.end] = [1] * (s.end - s.start)
    return out


def agreement_report(
    samples: Sequence[Sample],
    annotations_a: Iterable[AnnotationSet],
    annotations_b: Iterable[AnnotationSet],
    threshold: float = ALIGNMENT_THRESHOLD,
    stem: bool = False,
) -> list[dict[str, Any]]:
    """Kappa and alpha per document type and judgement component.

    Character masks are concatenated over all documents of a type before
    scoring; aligned judgement pairs are pooled the same way. Only documents
    annotated by both sides count.
    """
    index = document_index(samples)
    by_a, by_b = _merge(annotations_a), _merge(annotations_b)
    shared = [d for d in by_a if d in by_b and d in index]
    masks: dict[tuple[DocType, SpanKind], tuple[list[int], list[int]]] = defaultdict(lambda: ([], []))
    pairs: dict[DocType, list] = defaultdict(list)
    n_docs: dict[DocType, int] = defaultdict(int)
    for doc_id in shared:
        doc = index[doc_id][1]
        n_docs[doc.doc_type] += 1
        ann_a, ann_b = by_a[doc_id], by_b[doc_id]
        for kind in SpanKind:
            va, vb = masks[doc.doc_type, kind]
            va.extend(_mask(len(doc.text), ann_a.spans_of(kind)))
            vb.extend(_mask(len(doc.text), ann_b.spans_of(kind)))
        pairs[doc.doc_type].extend(align_judgements(ann_a.judgements, ann_b.judgements, threshold, stem))

    rows = []
    for doc_type in DocType:
        for name, component in AGREEMENT_COMPONENTS.items():
            kappa = alpha = None
            n = 0
            try:
                if isinstance(component, SpanKind):
                    va, vb = masks.get((doc_type, component), ([], []))
                    n = len(va)
                    kappa, alpha = vector_agreement(va, vb)
                else:
                    usable = [p for p in pairs.get(doc_type, []) if None not in (getattr(p.a, component.value), getattr(p.b, component.value))]
                    n = len(usable)
                    kappa, alpha = component_agreement(usable, component)
            except (InsufficientData, DegenerateAgreement):
                pass
            rows.append(
                {
                    "doc_type": doc_type.value,
                    "component": name,
                    "kappa": kappa,
                    "alpha": alpha,
                    "n": n,
                    "n_docs": n_docs.get(doc_type, 0),
                }
            )
    return rows


def analysis_report(samples: Sequence[Sample], records: Iterable[JudgementRecord]) -> list[dict[str, Any]]:
    """Facet frequency in meta-reviews, review-pair consistency and voting disagreement."""
    by_doc = judgements_by_doc(records)
    rows: list[dict[str, Any]] = []

    if samples:
        freq = facet_frequency([by_doc.get(s.meta_review.doc_id, []) for s in samples])
        for facet in FACETS:
            rows.append(
                {
                    "section": "facet_frequency",
                    "facet": facet.value,
                    "judgement_share": freq[facet].judgement_share,
                    "document_share": freq[facet].document_share,
                }
            )

    table = pairwise_review_consistency([(s, by_doc) for s in samples])
    for facet in FACETS:
        for stratum, stats in (("with_conflicts", table.with_conflicts), ("without_conflicts", table.without_conflicts)):
            stat = stats[facet]
            rows.append(
                {
                    "section": "review_consistency",
                    "facet": facet.value,
                    "stratum": stratum,
                    "mean": stat.mean if stat else None,
                    "variance": stat.variance if stat else None,
                    "n_pairs": stat.n if stat else 0,
                    "pooling": table.pooling,
                }
            )
    if table.skipped_pairs:
        rows.append({"section": "review_consistency_skipped", "pairs": [list(p) for p in table.skipped_pairs]})

    voting = voting_disagreement_rate(samples)
    rows.append(
        {
            "section": "voting",
            "disagreement_rate": voting.rate,
            "n_evaluated": voting.n_evaluated,
            "n_skipped": voting.n_skipped,
            "n_disagreements": voting.n_disagreements,
        }
    )
    return rows


def fmt(value: Any, digits: int = 4) -> str:
    if value is None:
        return DASH
    if isinstance(value, float):
        return f"{value:.{digits}f}"
    return str(value)


def render_table(headers: Sequence[str], rows: Sequence[Sequence[Any]], title: Optional[str] = None) -> str:
    cells = [[fmt(c) for c in row] for row in rows]
    widths = [max([len(h)] + [len(r[i]) for r in cells]) for i, h in enumerate(headers)]
    lines = []
    if title:
        lines.append(title)
    lines.append("  ".join(h.ljust(w) for h, w in zip(headers, widths)))
    lines.append("  ".join("-" * w for w in widths))
    lines.extend("  ".join(c.ljust(w) for c, w in zip(row, widths)) for row in cells)
    return "\n".join(lines)


def render_agreement(rows: Sequence[Mapping[str, Any]]) -> str:
    blocks = []
    for doc_type in DocType:
        sub = [r for r in rows if r["doc_type"] == doc_type.value]
        if not any(r["n_docs"] for r in sub):
            blocks.append(render_table(["component", "kappa", "alpha", "n"], [[DASH, None, None, 0]], title=f"{doc_type.label}: no shared documents"))
            continue
        blocks.append(
            render_table(
                ["component", "kappa", "alpha", "n"],
                [[r["component"], r["kappa"], r["alpha"], r["n"]] for r in sub],
                title=f"{doc_type.label} ({sub[0]['n_docs']} documents)",
            )
        )
    return "\n\n".join(blocks)


def render_analysis(rows: Sequence[Mapping[str, Any]]) -> str:
    blocks = []
    freq = [r for r in rows if r["section"] == "facet_frequency"]
    blocks.append(
        render_table(
            ["facet", "%judgements", "%documents"],
            [[r["facet"], r["judgement_share"], r["document_share"]] for r in freq],
            title="Facet frequency in meta-reviews",
        )
    )
    cons = [r for r in rows if r["section"] == "review_consistency"]
    table_rows = []
    for facet in FACETS:
        cell = {}
        for r in cons:
            if r["facet"] == facet.value:
                cell[r["stratum"]] = DASH if r["mean"] is None else f"{r['mean']:.3f} ({r['variance']:.3f})"
        table_rows.append([facet.value, cell.get("with_conflicts", DASH), cell.get("without_conflicts", DASH)])
    blocks.append(
        render_table(
            ["facet", "w/ conflicts", "w/o conflicts"],
            table_rows,
            title="Review-pair sentiment consistency per facet (mean with variance in parentheses)",
        )
    )
    vote = next(r for r in rows if r["section"] == "voting")
    blocks.append(
        render_table(
            ["disagreement rate", "evaluated", "skipped"],
            [[vote["disagreement_rate"], vote["n_evaluated"], vote["n_skipped"]]],
            title="Decision vs. majority voting over ratings",
        )
    )
    return "\n\n".join(blocks)


def render_scores(records: Sequence[Mapping[str, Any]]) -> str:
    rows = [r for r in records if not r.get("summary")]
    summary = next((r for r in records if r.get("summary")), None)
    cols = ["fusion_eval", "facet_eval", "rouge1", "rouge2", "rougeL"]
    body = [[r["paper_id"], *[r[c] for c in cols], r.get("error") or ""] for r in rows]
    if summary:
        body.append(["MEAN", *[summary["means"][c] for c in cols], ""])
        body.append(["excluded", *[summary["excluded"][c] for c in cols], ""])
    return render_table(["paper_id", *cols, "error"], body, title="Scores")
