"""Run one tutoring session offline and pretty-print it.

Uses the rule-based provider, so it needs no network or API key.

    python3 scripts/demo_session.py [doc_id] [seed]
"""

from __future__ import annotations

import pathlib
import sys

REPO = pathlib.Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from ehrtutor.config import EngineConfig
from ehrtutor.documents import get_bundled
from ehrtutor.gateway import GatewayMode, LLMGateway
from ehrtutor.pipeline import run_pipeline
from ehrtutor.stubprovider import StubProvider


def main() -> int:
    doc_id = sys.argv[1] if len(sys.argv) > 1 else "di-001"
    seed = int(sys.argv[2]) if len(sys.argv) > 2 else 7

    config = EngineConfig()
    gateway = LLMGateway(GatewayMode.LIVE, provider=StubProvider())
    record = run_pipeline(gateway, config, get_bundled(doc_id), seed=seed)

    print(f"=== session {record.record_id} ===\n")
    for question in record.questions:
        status = "verified" if question.verified else f"rejected ({question.rejection_reason})"
        print(f"{question.id} [{question.category.value}] {status}")
    print()
    for turn in record.turns:
        who = "Tutor" if turn.speaker.value == "tutor" else "Patient"
        print(f"{who} ({turn.kind.value}): {turn.text}\n")

    summary = record.summary
    assert summary is not None
    print("=== summary ===")
    for category, text in summary.keypoint_recap:
        print(f"  recap [{category.value}]: {text}")
    for qid, note in summary.missed_points:
        print(f"  missed {qid}: {note}")
    for key, answer in summary.checklist_answers.items():
        print(f"  {key}: {answer}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
