"""Inter-annotator agreement: character-level span agreement and categorical
agreement on judgements aligned by ROUGE similarity."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from enum import Enum
from itertools import combinations, permutations
from typing import Hashable, Iterable, Optional, Sequence

from metarev.domain import Judgement, Span
from metarev.errors import DegenerateAgreement, EmptyInput, InsufficientData, LengthMismatch, SpanOutOfRange
from metarev.rouge import rouge_suite

ALIGNMENT_THRESHOLD = 2.0


class Component(str, Enum):
    FACET = "facet"
    LEVEL = "level"
    CONVINCINGNESS = "convincingness"
    EXPRESSER = "expresser"


def _bounds(span) -> tuple[int, int]:
    if isinstance(span, Span):
        return span.start, span.end
    start, end = span[-2], span[-1]
    return int(start), int(end)


def span_char_vectors(doc_len: int, spans_a: Iterable, spans_b: Iterable) -> tuple[list[int], list[int]]:
    """Binary highlight masks of length ``doc_len`` for both annotators.

    Spans are ``Span`` objects or ``(start, end)`` / ``(kind, start, end)``
    tuples with an exclusive end; overlapping spans merge.
    """

    def mask(spans: Iterable) -> list[int]:
        out = [0] * doc_len
        for span in spans:
            start, end = _bounds(span)
            if not 0 <= start < end <= doc_len:
                raise SpanOutOfRange(f"span [{start}, {end}) outside document of length {doc_len}")
            out[start:end] = [1] * (end - start)
        return out

    return mask(spans_a), mask(spans_b)


def cohens_kappa(labels_a: Sequence[Hashable], labels_b: Sequence[Hashable]) -> float:
    if len(labels_a) != len(labels_b):
        raise LengthMismatch(f"label sequences differ in length: {len(labels_a)} vs {len(labels_b)}")
    n = len(labels_a)
    if n == 0:
        raise EmptyInput("no labels to compare")
    observed = sum(a == b for a, b in zip(labels_a, labels_b)) / n
    marg_a = Counter(labels_a)
    marg_b = Counter(labels_b)
    expected = sum(marg_a[k] * marg_b.get(k, 0) for k in marg_a) / (n * n)
    if expected == 1.0:
        if observed == 1.0:
            return 1.0
        raise DegenerateAgreement("chance agreement is 1 but observed agreement is not")
    return (observed - expected) / (1.0 - expected)


def _ordinal_distance(categories: Sequence[Hashable], totals: Counter):
    rank = {c: i for i, c in enumerate(categories)}

    def delta(c, k) -> float:
        lo, hi = sorted((rank[c], rank[k]))
        between = sum(totals[categories[g]] for g in range(lo, hi + 1))
        return (between - (totals[c] + totals[k]) / 2.0) ** 2

    return delta


def krippendorff_alpha(
    units: Iterable[Sequence[Optional[Hashable]]],
    level: str = "nominal",
    categories: Optional[Sequence[Hashable]] = None,
) -> float:
    """Krippendorff's alpha from the coincidence matrix.

    ``units`` holds one value per coder for each unit; ``None`` is missing.
    Units with fewer than two values are not pairable and are dropped.
    ``level="ordinal"`` needs ``categories`` in rank order.
    """
    # Identical units contribute identically; group them to keep long inputs cheap.
    groups: Counter = Counter()
    for unit in units:
        values = tuple(v for v in unit if v is not None)
        if len(values) >= 2:
            groups[values] += 1
    pairable_units = sum(groups.values())
    coincidence: Counter = Counter()
    for values, count in groups.items():
        weight = count / (len(values) - 1)
        for c, k in permutations(values, 2):
            coincidence[c, k] += weight
    if pairable_units < 2:
        raise InsufficientData("need at least two units with two or more values")

    totals: Counter = Counter()
    for (c, _), w in coincidence.items():
        totals[c] += w
    n = sum(totals.values())

    if level == "nominal":
        def delta(c, k) -> float:
            return 0.0 if c == k else 1.0
    elif level == "ordinal":
        if categories is None:
            raise ValueError("ordinal alpha requires categories in rank order")
        unknown = set(totals) - set(categories)
        if unknown:
            raise ValueError(f"values not among categories: {sorted(map(str, unknown))}")
        delta = _ordinal_distance(list(categories), totals)
    else:
        raise ValueError(f"unsupported level {level!r}")

    observed = sum(w * delta(c, k) for (c, k), w in coincidence.items())
    expected = sum(totals[c] * totals[k] * delta(c, k) for c, k in combinations(list(totals), 2)) * 2
    if expected == 0.0:
        # A single value across all units: agreement is perfect but carries no information.
        if observed == 0.0:
            return 1.0
        raise DegenerateAgreement("expected disagreement is zero")
    return 1.0 - (n - 1) * observed / expected


def krippendorff_alpha_nominal(units: Iterable[Sequence[Optional[Hashable]]]) -> float:
    return krippendorff_alpha(units, level="nominal")


@dataclass(frozen=True)
class AlignedPair:
    a: Judgement
    b: Judgement
    similarity: float
    index_a: int = -1
    index_b: int = -1


def _alignment_text(j: Judgement) -> str:
    return f"{j.content_expression} {j.sentiment_expression}"


def align_judgements(
    set_a: Sequence[Judgement],
    set_b: Sequence[Judgement],
    threshold: float = ALIGNMENT_THRESHOLD,
    stem: bool = False,
) -> list[AlignedPair]:
    """Greedy one-to-one matching by descending ROUGE f1 sum.

    A pair qualifies only when its similarity is strictly above
    ``threshold``; ties go to the lowest ``(index_a, index_b)``. The result is
    ordered by ``index_a``.
    """
    candidates = []
    for i, ja in enumerate(set_a):
        text_a = _alignment_text(ja)
        for j, jb in enumerate(set_b):
            sim = rouge_suite(text_a, _alignment_text(jb), stem=stem).f1_sum
            if sim > threshold:
                candidates.append((-sim, i, j))
    candidates.sort()
    used_a: set[int] = set()
    used_b: set[int] = set()
    pairs = []
    for neg_sim, i, j in candidates:
        if i in used_a or j in used_b:
            continue
        used_a.add(i)
        used_b.add(j)
        pairs.append(AlignedPair(set_a[i], set_b[j], -neg_sim, i, j))
    pairs.sort(key=lambda p: p.index_a)
    return pairs


def component_labels(pairs: Sequence[AlignedPair], component: Component | str) -> tuple[list, list]:
    attr = Component(component).value
    return [getattr(p.a, attr) for p in pairs], [getattr(p.b, attr) for p in pairs]


def component_agreement(pairs: Sequence[AlignedPair], component: Component | str) -> tuple[float, float]:
    """(Cohen's kappa, nominal Krippendorff's alpha) for one judgement component."""
    if len(pairs) < 2:
        raise InsufficientData(f"need at least 2 aligned pairs, got {len(pairs)}")
    labels_a, labels_b = component_labels(pairs, component)
    return cohens_kappa(labels_a, labels_b), krippendorff_alpha_nominal(zip(labels_a, labels_b))


def span_agreement(doc_len: int, spans_a: Iterable, spans_b: Iterable) -> tuple[float, float]:
    vec_a, vec_b = span_char_vectors(doc_len, spans_a, spans_b)
    return vector_agreement(vec_a, vec_b)


def vector_agreement(vec_a: Sequence[int], vec_b: Sequence[int]) -> tuple[float, float]:
    if len(vec_a) < 2:
        raise InsufficientData("need at least two characters")
    return cohens_kappa(vec_a, vec_b), krippendorff_alpha_nominal(zip(vec_a, vec_b))
