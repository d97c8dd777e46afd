from __future__ import annotations

from metarev.domain import ConvincingnessLevel, CriteriaFacet, Expresser, Judgement, SentimentLevel


def judgement(
    facet: CriteriaFacet,
    level: SentimentLevel,
    content: str = "the method",
    sentiment: str = "fine",
    doc_id: str = "",
) -> Judgement:
    return Judgement(
        f"{content} is {sentiment}.",
        content,
        sentiment,
        facet,
        level,
        ConvincingnessLevel.SLIGHTLY_CONVINCING,
        Expresser.SELF,
        doc_id=doc_id,
    )
