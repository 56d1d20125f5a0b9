"""Rebuild the bundled cassette and the golden test fixtures.

Records every request the offline flows make against the rule-based provider:

* the question flow (keypoints -> questions -> verification) for every bundled
  document, so ``ehrtutor questions --doc di-0XX`` replays offline;
* ``simulate --n 3 --seed 42`` over the bundled corpus — the canonical
  reproducibility run;
* the di-001 seed-7 pipeline used as the golden record in the test suite.

Outputs:
    src/ehrtutor/data/bundled_cassette.jsonl
    tests/data/golden_di001_seed7.json
    tests/data/simulate_n3_s42.jsonl

Run from the repository root:  python3 scripts/build_cassette.py
"""

from __future__ import annotations

import pathlib
import sys

REPO = pathlib.Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from ehrtutor.config import EngineConfig
from ehrtutor.documents import get_bundled, load_bundled_corpus
from ehrtutor.gateway import GatewayMode, LLMGateway
from ehrtutor.pipeline import prepare_questions, run_batch, run_pipeline
from ehrtutor.records import save_record, validate_record, write_dataset
from ehrtutor.stubprovider import StubProvider


def main() -> int:
    config = EngineConfig()
    gateway = LLMGateway(GatewayMode.RECORD, provider=StubProvider())
    corpus = load_bundled_corpus()

    for document in corpus:
        _, questions = prepare_questions(gateway, config, document.text)
        verified = sum(1 for q in questions if q.verified)
        print(f"questions {document.doc_id}: {verified}/{len(questions)} verified")

    records, stats = run_batch(gateway, config, corpus, count=3, base_seed=42)
    if stats["skipped"]:
        raise SystemExit(f"simulate run skipped sessions: {stats}")
    for record in records:
        validate_record(record)
    dataset_path = REPO / "tests" / "data" / "simulate_n3_s42.jsonl"
    dataset_path.parent.mkdir(parents=True, exist_ok=True)
    write_dataset(records, str(dataset_path))
    print(f"wrote {dataset_path} ({len(records)} records)")

    golden = run_pipeline(gateway, config, get_bundled("di-001"), seed=7)
    validate_record(golden)
    golden_path = REPO / "tests" / "data" / "golden_di001_seed7.json"
    save_record(golden, str(golden_path))
    print(f"wrote {golden_path} ({len(golden.turns)} turns)")

    cassette_path = REPO / "src" / "ehrtutor" / "data" / "bundled_cassette.jsonl"
    gateway.save_cassette(cassette_path)
    assert gateway.cassette is not None
    print(f"wrote {cassette_path} ({len(gateway.cassette.entries)} entries)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
