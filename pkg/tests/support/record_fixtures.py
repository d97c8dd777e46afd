"""Regenerate the replay fixtures under tests/data/fixtures.

Run from the repository root: ``python tests/support/record_fixtures.py``.
Existing fixtures are kept; only missing requests are recorded.
"""

from __future__ import annotations

import sys
from pathlib import Path

HERE = Path(__file__).resolve().parent
sys.path.insert(0, str(HERE.parent))

from metarev.gateway import Gateway, RecordingBackend  # noqa: E402
from metarev.errors import NoJudgements  # noqa: E402
from metarev.pipeline import GenerationStrategy, compute_fusion_eval, evaluate_run, extract_sample, generate_meta_review  # noqa: E402
from metarev.store import load_corpus  # noqa: E402
from support.cases import FUSION_CASES  # noqa: E402
from support.fusion import fusion_sources  # noqa: E402
from support.scripted import ScriptedBackend  # noqa: E402

DATA = HERE.parent / "data"
MODEL_ID = "scripted-1"


def main() -> None:
    samples = load_corpus(DATA / "corpus.jsonl")
    gateway = Gateway(RecordingBackend(ScriptedBackend(), DATA / "fixtures"), MODEL_ID)
    for sample in samples:
        extract_sample(sample, gateway)
    for strategy in GenerationStrategy:
        generated = {}
        for sample in samples:
            text, entry = generate_meta_review(sample, strategy, gateway)
            if entry.error:
                raise SystemExit(f"{sample.paper_id} {strategy.value}: {entry.error}")
            generated[sample.paper_id] = text
        table = evaluate_run(samples, generated, gateway)
        print(strategy.value, table.summary()["means"])
    identity = evaluate_run(samples, {s.paper_id: s.meta_review.text for s in samples}, gateway)
    print("identity", identity.summary()["means"])
    for name, (text, _) in FUSION_CASES.items():
        try:
            print(name, compute_fusion_eval(text, fusion_sources(), gateway).accuracy)
        except NoJudgements:
            print(name, "absent")
    print(len(list((DATA / "fixtures").glob("*.json"))), "fixtures")


if __name__ == "__main__":
    main()
