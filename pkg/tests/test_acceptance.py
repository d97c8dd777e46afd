"""Acceptance suite: one test per exit criterion.

A summary line per criterion is printed at the end of the pytest run.
"""

from __future__ import annotations

import itertools
import os
import random
import time
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metarev.agreement import align_judgements, cohens_kappa, krippendorff_alpha_nominal
from metarev.cli import main
from metarev.domain import CriteriaFacet, DocType, SentimentLevel
from metarev.errors import NoJudgements
from metarev.gateway import Gateway, ReplayBackend
from metarev.metrics import facet_eval, facet_frequency, is_conflicting, majority_vote_decision, voting_disagreement_rate
from metarev.pipeline import GenerationStrategy, compute_fusion_eval, evaluate_run, expected_completions
from metarev.rouge import rouge_suite
from metarev.store import judgements_by_doc, load_corpus, load_judgements, load_run
from support.builders import judgement
from support.cases import FUSION_CASES, ROUGE_PAIRS, random_table
from support.fusion import fusion_sources
from support.oracles import alpha_nominal_oracle, conflict_oracle, rouge_l_oracle, rouge_n_oracle, vote_oracle

pytestmark = pytest.mark.acceptance

DATA = Path(__file__).parent / "data"
MODEL = "scripted-1"
F, L = CriteriaFacet, SentimentLevel


@pytest.mark.criterion(1, "ROUGE-1/2/L equal a brute-force oracle on 20 pairs to 1e-9, suite < 1 s")
def test_criterion_1_rouge_oracle():
    assert len(ROUGE_PAIRS) == 20
    started = time.perf_counter()
    got = [rouge_suite(c, r) for c, r in ROUGE_PAIRS]
    elapsed = time.perf_counter() - started
    for (cand, ref), suite in zip(ROUGE_PAIRS, got):
        for score, want in (
            (suite.r1, rouge_n_oracle(cand, ref, 1)),
            (suite.r2, rouge_n_oracle(cand, ref, 2)),
            (suite.rl, rouge_l_oracle(cand, ref)),
        ):
            assert abs(score.precision - want[0]) <= 1e-9
            assert abs(score.recall - want[1]) <= 1e-9
            assert abs(score.f1 - want[2]) <= 1e-9
    assert elapsed < 1.0


judgements_st = st.lists(
    st.tuples(st.sampled_from(list(F)), st.sampled_from(list(L))).map(lambda t: judgement(*t)), max_size=12
)


@settings(max_examples=1000, derandomize=True, deadline=None)
@given(judgements_st, judgements_st, st.integers(2, 5))
def _facet_eval_properties(human, generated, k):
    score = facet_eval(human, generated).value
    assert 0.0 <= score <= 1.0
    assert abs(score - facet_eval(generated, human).value) <= 1e-12
    assert abs(score - facet_eval(human, generated * k).value) <= 1e-12


@pytest.mark.criterion(2, "FacetEval worked examples exact; symmetry, duplication invariance, range on 1,000 cases")
def test_criterion_2_facet_eval():
    pair = [judgement(F.NOVELTY, L.POSITIVE), judgement(F.SOUNDNESS, L.STRONGLY_NEGATIVE)]
    assert facet_eval(pair, list(pair)).value == 1.0
    assert facet_eval([judgement(F.NOVELTY, L.POSITIVE)], [judgement(F.NOVELTY, L.STRONGLY_POSITIVE)]).value == 0.5
    assert facet_eval([judgement(F.NOVELTY, L.POSITIVE)], [judgement(F.CLARITY, L.POSITIVE)]).value == 0.0
    _facet_eval_properties()


@pytest.mark.criterion(3, "kappa hand example 0.5; alpha equals brute force on 50 tables; |kappa| < 0.05 at n = 1e5")
def test_criterion_3_agreement():
    assert abs(cohens_kappa(list("xxyy"), list("xyyy")) - 0.5) <= 1e-12
    rng = random.Random(20240501)
    for _ in range(50):
        units = random_table(rng)
        assert abs(krippendorff_alpha_nominal(units) - alpha_nominal_oracle(units)) <= 1e-9
    rng = random.Random(3)
    a = [rng.randrange(4) for _ in range(100_000)]
    b = [rng.randrange(4) for _ in range(100_000)]
    assert abs(cohens_kappa(a, b)) < 0.05


@pytest.mark.criterion(4, "alignment: identical pairs align at 3.0, disjoint never, greedy is one-to-one")
def test_criterion_4_alignment():
    same = judgement(F.CLARITY, L.NEGATIVE, "the experimental section", "thin")
    (pair,) = align_judgements([same], [same])
    assert abs(pair.similarity - 3.0) <= 1e-12
    other = judgement(F.NOVELTY, L.POSITIVE, "approaches", "novel")
    assert align_judgements([same], [other]) == []
    many = [same, judgement(F.CLARITY, L.NEGATIVE, "the experimental section", "rather thin")]
    pairs = align_judgements(many, [same])
    assert len(pairs) == 1 and (pairs[0].index_a, pairs[0].index_b) == (0, 0)
    pairs = align_judgements([same], many)
    assert len(pairs) == 1


@pytest.mark.criterion(5, "conflict and majority-vote rules equal brute force on all rating multisets of size <= 3")
def test_criterion_5_voting_rules():
    checked = 0
    for size in (1, 2, 3):
        for ratings in itertools.combinations_with_replacement(range(1, 11), size):
            ratings = list(ratings)
            assert majority_vote_decision(ratings).value == vote_oracle(ratings)
            if size >= 2:
                assert is_conflicting(ratings) == conflict_oracle(ratings)
            checked += 1
    assert checked == 285


def _replay_run(out: Path) -> list[bytes]:
    tables = []
    for strategy in GenerationStrategy:
        common = [
            "--corpus", str(DATA / "corpus.jsonl"), "--model", MODEL, "--mode", "replay",
            "--fixtures", str(DATA / "fixtures"), "--runs-dir", str(out / "runs"), "--strategy", strategy.value,
        ]
        generated = out / f"{strategy.value}.generated.jsonl"
        scores = out / f"{strategy.value}.scores.jsonl"
        assert main(["generate", *common, "--out", str(generated)]) == 0
        assert main(["evaluate", *common, "--generated", str(generated), "--out", str(scores)]) == 0
        tables.append(scores.read_bytes())
    return tables


@pytest.mark.criterion(6, "replay run over 5 samples and 4 strategies is byte-identical twice, < 10 s")
def test_criterion_6_determinism(tmp_path, capsys):
    started = time.perf_counter()
    first = _replay_run(tmp_path / "first")
    second = _replay_run(tmp_path / "second")
    elapsed = time.perf_counter() - started
    assert first == second
    assert all(len(read_json_lines_bytes(t)) == 6 for t in first)
    assert elapsed < 10.0


def read_json_lines_bytes(raw: bytes) -> list[str]:
    return [line for line in raw.decode("utf-8").splitlines() if line.strip()]


@pytest.mark.criterion(7, "recorded completions per sample equal the strategy budget formulas")
def test_criterion_7_budgets(tmp_path):
    samples = {s.paper_id: s for s in load_corpus(DATA / "corpus.jsonl")}
    assert len(samples) == 5
    for strategy in GenerationStrategy:
        runs = tmp_path / strategy.value
        code = main(
            ["generate", "--corpus", str(DATA / "corpus.jsonl"), "--model", MODEL, "--mode", "replay",
             "--fixtures", str(DATA / "fixtures"), "--runs-dir", str(runs), "--strategy", strategy.value,
             "--out", str(tmp_path / f"{strategy.value}.jsonl")]
        )
        assert code == 0
        (record,) = [load_run(p) for p in runs.glob("*.json")]
        assert len(record.entries) == 5
        for entry in record.entries:
            sample = samples[entry.sample_id]
            clusters = entry.intermediates.get("sub_summaries", {})
            if strategy is GenerationStrategy.OURS_PIPELINE:
                assert len(clusters) == len({j.facet for j in entry.judgements})
            want = {
                GenerationStrategy.NAIVE: 1,
                GenerationStrategy.LLM_STEPS: 2,
                GenerationStrategy.OURS_PROMPT: 1,
                GenerationStrategy.OURS_PIPELINE: 2 * len(sample.source_documents) + len(clusters) + 1,
            }[strategy]
            assert len(entry.calls) == want == expected_completions(sample, strategy, len(clusters))


@pytest.mark.criterion(8, "FusionEval: identity 1.0, two-of-three 0.6667 +/- 1e-9, zero extraction absent")
def test_criterion_8_fusion_eval():
    gateway = Gateway(ReplayBackend(DATA / "fixtures"), MODEL)
    identity_text, _ = FUSION_CASES["identity"]
    assert compute_fusion_eval(identity_text, fusion_sources(), gateway).accuracy == 1.0
    partial_text, _ = FUSION_CASES["two_of_three"]
    score = compute_fusion_eval(partial_text, fusion_sources(), gateway)
    assert abs(score.accuracy - 2 / 3) <= 1e-9 and score.n_judgements == 3
    empty_text, _ = FUSION_CASES["zero_extraction"]
    with pytest.raises(NoJudgements):
        compute_fusion_eval(empty_text, fusion_sources(), gateway)
    sample = load_corpus(DATA / "corpus.jsonl")[0]
    table = evaluate_run([sample], {sample.paper_id: empty_text}, gateway)
    (row,) = table.rows
    assert row.error is None and row.fusion_eval is None
    assert table.excluded("fusion_eval") == 1 and table.mean("fusion_eval") is None


PEERSUM = os.environ.get("METAREV_PEERSUM_PATH")
ANNOTATED = os.environ.get("METAREV_ANNOTATED_META_PATH")


@pytest.mark.criterion(9, "data-supplied: voting disagreement 0.237 +/- 0.01; Advancement shares 0.2545/0.8000")
def test_criterion_9_data_supplied():
    if not PEERSUM and not ANNOTATED:
        pytest.skip("set METAREV_PEERSUM_PATH and/or METAREV_ANNOTATED_META_PATH to run")
    if PEERSUM:
        result = voting_disagreement_rate(load_corpus(PEERSUM))
        assert result.rate is not None and abs(result.rate - 0.237) <= 0.01
    if ANNOTATED:
        records = [r for r in load_judgements(ANNOTATED) if r.doc_type is DocType.META_REVIEW]
        shares = facet_frequency(list(judgements_by_doc(records).values()))[F.ADVANCEMENT]
        assert abs(shares.judgement_share - 0.2545) <= 1e-4
        assert abs(shares.document_share - 0.8000) <= 1e-4
