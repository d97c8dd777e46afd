"""ROUGE-1/2/L over a simple alphanumeric tokenizer.

Single reference only. ROUGE-L is the plain token LCS over the whole text,
without the summary-level union LCS.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

_TOKEN_RE = re.compile(r"[^\W_]+")


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, overlap: int, candidate_total: int, reference_total: int) -> RougeScore:
        p = overlap / candidate_total if candidate_total else 0.0
        r = overlap / reference_total if reference_total else 0.0
        f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
        return cls(p, r, f1)

    def as_dict(self) -> dict[str, float]:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1}


ZERO = RougeScore(0.0, 0.0, 0.0)


@dataclass(frozen=True)
class RougeSuite:
    r1: RougeScore
    r2: RougeScore
    rl: RougeScore

    @property
    def f1_sum(self) -> float:
        return self.r1.f1 + self.r2.f1 + self.rl.f1


@lru_cache(maxsize=1)
def _stemmer():
    try:
        from nltk.stem.porter import PorterStemmer
    except ImportError as exc:  # pragma: no cover - depends on environment
        raise RuntimeError("stemming requires nltk (pip install 'metarev[stem]')") from exc
    return PorterStemmer()


def tokenize(text: str, stem: bool = False) -> list[str]:
    tokens = _TOKEN_RE.findall(text.lower())
    if stem:
        stemmer = _stemmer()
        tokens = [stemmer.stem(t) for t in tokens]
    return tokens


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _rouge_n_tokens(cand: Sequence[str], ref: Sequence[str], n: int) -> RougeScore:
    if n < 1:
        raise ValueError("n must be >= 1")
    cand_grams = _ngrams(cand, n)
    ref_grams = _ngrams(ref, n)
    overlap = sum((cand_grams & ref_grams).values())
    return RougeScore.from_counts(overlap, sum(cand_grams.values()), sum(ref_grams.values()))


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, 1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def _rouge_l_tokens(cand: Sequence[str], ref: Sequence[str]) -> RougeScore:
    if not cand or not ref:
        return ZERO
    return RougeScore.from_counts(lcs_length(cand, ref), len(cand), len(ref))


def rouge_n(candidate: str, reference: str, n: int, stem: bool = False) -> RougeScore:
    return _rouge_n_tokens(tokenize(candidate, stem), tokenize(reference, stem), n)


def rouge_l(candidate: str, reference: str, stem: bool = False) -> RougeScore:
    return _rouge_l_tokens(tokenize(candidate, stem), tokenize(reference, stem))


def rouge_suite(candidate: str, reference: str, stem: bool = False) -> RougeSuite:
    cand = tokenize(candidate, stem)
    ref = tokenize(reference, stem)
    return RougeSuite(
        r1=_rouge_n_tokens(cand, ref, 1),
        r2=_rouge_n_tokens(cand, ref, 2),
        rl=_rouge_l_tokens(cand, ref),
    )
