"""Sentiment-aware metrics and corpus analyses.

A document is represented per facet by ``[P+, P, N+, N, O]``: counts of each
sentiment level plus a presence flag. Concatenating the six facets in
canonical order gives the 30-dimensional vector compared by FacetEval.

Similarities are computed on the frequency form of a slice, where each count
is divided by the number of judgements on that facet. This keeps a score
unchanged when every judgement of a document is repeated. Cosine similarity
with an all-zero side is defined as 0.0.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Mapping, Optional, Sequence

from metarev.domain import FACETS, CriteriaFacet, Decision, Judgement, Sample, SentimentLevel
from metarev.errors import EmptyCorpus, EmptyRatings, InsufficientRatings, LengthMismatch, NoJudgements

CONFLICT_GAP = 4
ACCEPT_ABOVE = 5


@dataclass(frozen=True)
class FacetSlice:
    sp: int = 0
    p: int = 0
    sn: int = 0
    n: int = 0

    def __post_init__(self) -> None:
        if min(self.sp, self.p, self.sn, self.n) < 0:
            raise ValueError("counts must be non-negative")

    @property
    def o(self) -> int:
        return int(self.sp + self.p + self.sn + self.n > 0)

    def as_tuple(self) -> tuple[int, int, int, int, int]:
        return (self.sp, self.p, self.sn, self.n, self.o)

    def frequencies(self) -> tuple[float, float, float, float, int]:
        total = self.sp + self.p + self.sn + self.n
        if not total:
            return (0.0, 0.0, 0.0, 0.0, 0)
        return (self.sp / total, self.p / total, self.sn / total, self.n / total, 1)


@dataclass(frozen=True)
class FacetVector:
    slices: tuple[FacetSlice, ...] = tuple(FacetSlice() for _ in FACETS)

    def __post_init__(self) -> None:
        if len(self.slices) != len(FACETS):
            raise ValueError(f"expected {len(FACETS)} facet slices")

    def __getitem__(self, facet: CriteriaFacet) -> FacetSlice:
        return self.slices[facet.position]

    def flatten(self) -> tuple[int, ...]:
        return tuple(x for s in self.slices for x in s.as_tuple())

    def frequencies(self) -> tuple[float, ...]:
        return tuple(x for s in self.slices for x in s.frequencies())


@dataclass(frozen=True)
class FacetEvalScore:
    value: float


@dataclass(frozen=True)
class FusionEvalScore:
    accuracy: float
    n_judgements: int
    fallback_facets: tuple[CriteriaFacet, ...] = ()

    @property
    def matches(self) -> int:
        return round(self.accuracy * self.n_judgements)


def cosine(u: Sequence[float], v: Sequence[float]) -> float:
    uu = sum(x * x for x in u)
    vv = sum(x * x for x in v)
    if uu == 0.0 or vv == 0.0:
        return 0.0
    if tuple(u) == tuple(v):
        return 1.0
    # One square root of the product keeps simple cases such as 1/2 exact.
    value = sum(a * b for a, b in zip(u, v)) / math.sqrt(uu * vv)
    return min(1.0, max(-1.0, value))


_LEVEL_FIELD = {
    SentimentLevel.STRONGLY_POSITIVE: "sp",
    SentimentLevel.POSITIVE: "p",
    SentimentLevel.STRONGLY_NEGATIVE: "sn",
    SentimentLevel.NEGATIVE: "n",
}


def facet_vector(judgements: Iterable[Judgement]) -> FacetVector:
    counts = [dict(sp=0, p=0, sn=0, n=0) for _ in FACETS]
    for j in judgements:
        if j.facet is None or j.level is None:
            raise ValueError(f"judgement without facet/level: {j.content_expression!r}")
        counts[j.facet.position][_LEVEL_FIELD[j.level]] += 1
    return FacetVector(tuple(FacetSlice(**c) for c in counts))


def facet_eval(human: Iterable[Judgement], generated: Iterable[Judgement]) -> FacetEvalScore:
    return FacetEvalScore(cosine(facet_vector(human).frequencies(), facet_vector(generated).frequencies()))


def facet_consistency(d_i: Iterable[Judgement], d_j: Iterable[Judgement], facet: CriteriaFacet) -> float:
    return cosine(facet_vector(d_i)[facet].frequencies(), facet_vector(d_j)[facet].frequencies())


def is_conflicting(ratings: Sequence[int]) -> bool:
    if len(ratings) < 2:
        raise InsufficientRatings("need at least two ratings")
    return max(ratings) - min(ratings) > CONFLICT_GAP


def majority_vote_decision(ratings: Sequence[int]) -> Decision:
    if not ratings:
        raise EmptyRatings("no ratings")
    above = sum(r > ACCEPT_ABOVE for r in ratings)
    return Decision.ACCEPT if above > len(ratings) - above else Decision.REJECT


@dataclass(frozen=True)
class Stat:
    mean: float
    variance: float
    n: int

    @classmethod
    def of(cls, values: Sequence[float]) -> Optional[Stat]:
        if not values:
            return None
        mean = sum(values) / len(values)
        return cls(mean, sum((x - mean) ** 2 for x in values) / len(values), len(values))


@dataclass
class ConsistencyTable:
    """Per-facet pooled pair statistics; a stratum with no pairs is ``None``."""

    with_conflicts: dict[CriteriaFacet, Optional[Stat]]
    without_conflicts: dict[CriteriaFacet, Optional[Stat]]
    skipped_pairs: list[tuple[str, str, str]] = field(default_factory=list)
    pooling: str = "per-pair"


def pairwise_review_consistency(
    samples: Sequence[tuple[Sample, Mapping[str, Sequence[Judgement]]]],
) -> ConsistencyTable:
    """Consistency between every unordered pair of official reviews.

    Each pair contributes to a facet only when at least one of the two
    reviews mentions it. Pairs whose rating gap exceeds the conflict gap go
    to the with-conflicts stratum. Pairs lacking a rating are skipped and
    listed in ``skipped_pairs`` as ``(paper_id, doc_id, doc_id)``.
    """
    pooled: dict[bool, dict[CriteriaFacet, list[float]]] = {True: defaultdict(list), False: defaultdict(list)}
    skipped = []
    for sample, by_doc in samples:
        reviews = sample.official_reviews
        vectors = {r.doc_id: facet_vector(by_doc.get(r.doc_id, ())) for r in reviews}
        for ri, rj in combinations(reviews, 2):
            if ri.rating is None or rj.rating is None:
                skipped.append((sample.paper_id, ri.doc_id, rj.doc_id))
                continue
            stratum = is_conflicting([ri.rating, rj.rating])
            vi, vj = vectors[ri.doc_id], vectors[rj.doc_id]
            for facet in FACETS:
                if vi[facet].o or vj[facet].o:
                    pooled[stratum][facet].append(cosine(vi[facet].frequencies(), vj[facet].frequencies()))
    return ConsistencyTable(
        with_conflicts={f: Stat.of(pooled[True][f]) for f in FACETS},
        without_conflicts={f: Stat.of(pooled[False][f]) for f in FACETS},
        skipped_pairs=skipped,
    )


@dataclass(frozen=True)
class VotingResult:
    rate: Optional[float]
    n_evaluated: int
    n_skipped: int
    n_disagreements: int


def voting_disagreement_rate(samples: Iterable[Sample]) -> VotingResult:
    """Share of samples whose decision differs from majority voting over ratings.

    Samples without a decision or without any rating are skipped.
    """
    evaluated = skipped = mismatched = 0
    for sample in samples:
        ratings = sample.ratings
        if sample.decision is None or not ratings:
            skipped += 1
            continue
        evaluated += 1
        mismatched += majority_vote_decision(ratings) is not sample.decision
    rate = mismatched / evaluated if evaluated else None
    return VotingResult(rate, evaluated, skipped, mismatched)


@dataclass(frozen=True)
class FacetShare:
    judgement_share: float
    document_share: float


def facet_frequency(documents: Sequence[Sequence[Judgement]]) -> dict[CriteriaFacet, FacetShare]:
    if not documents:
        raise EmptyCorpus("no documents")
    judgement_counts = dict.fromkeys(FACETS, 0)
    doc_counts = dict.fromkeys(FACETS, 0)
    for judgements in documents:
        present = set()
        for j in judgements:
            if j.facet is None:
                raise ValueError(f"judgement without facet: {j.content_expression!r}")
            judgement_counts[j.facet] += 1
            present.add(j.facet)
        for f in present:
            doc_counts[f] += 1
    total = sum(judgement_counts.values())
    return {
        f: FacetShare(judgement_counts[f] / total if total else 0.0, doc_counts[f] / len(documents))
        for f in FACETS
    }


def fusion_accuracy(extracted: Sequence[SentimentLevel], predicted: Sequence[SentimentLevel]) -> FusionEvalScore:
    if len(extracted) != len(predicted):
        raise LengthMismatch(f"{len(extracted)} extracted levels vs {len(predicted)} predictions")
    if not extracted:
        raise NoJudgements("no judgements to score")
    matches = sum(a == b for a, b in zip(extracted, predicted))
    return FusionEvalScore(matches / len(extracted), len(extracted))
