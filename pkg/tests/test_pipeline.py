"""Pipeline orchestration: golden replays, stage labels, batches, baselines."""

from __future__ import annotations

import logging

import pytest

from ehrtutor.agent import Speaker, TurnKind
from ehrtutor.config import EngineConfig
from ehrtutor.documents import DischargeInstruction, get_bundled, load_bundled_corpus
from ehrtutor.errors import (
    CorpusEmpty,
    EHRTutorError,
    NoVerifiedQuestions,
    ParseFailure,
)
from ehrtutor.gateway import FinishReason, GatewayMode, LLMGateway
from ehrtutor.pipeline import (
    MODEL_TAG_BASELINE,
    prepare_questions,
    run_baseline,
    run_batch,
    run_pipeline,
)
from ehrtutor.records import load_record, validate_record
from ehrtutor.stubprovider import StubProvider

from conftest import DATA_DIR


class PoisonedStub(StubProvider):
    """The offline provider, except one tag answers with a fixed reply."""

    def __init__(self, tag: str, reply: str):
        self.tag = tag
        self.reply = reply

    def complete(self, request):
        if request.request_tag == self.tag:
            return self.reply, FinishReason.COMPLETE, 0
        return super().complete(request)


def poisoned_gateway(tag: str, reply: str = "beep boop") -> LLMGateway:
    return LLMGateway(GatewayMode.LIVE, provider=PoisonedStub(tag, reply))


# -- golden replay ---------------------------------------------------------------


def test_replayed_pipeline_matches_the_golden_record(replay_gateway, config):
    record = run_pipeline(replay_gateway, config, get_bundled("di-001"), seed=7)
    golden = load_record(str(DATA_DIR / "golden_di001_seed7.json"))
    assert record == golden


def test_pipeline_record_validates(replay_gateway, config):
    record = run_pipeline(replay_gateway, config, get_bundled("di-001"), seed=7)
    validate_record(record)
    assert record.record_id == "ehrtutor:di-001:seed7"
    assert record.model_tag == "ehrtutor"


def test_rejected_questions_stay_in_the_record(stub_gateway, config):
    # di-002 mentions an allergy without naming it: that question cannot be
    # verified against the text and must survive as a rejected entry.
    record = run_pipeline(stub_gateway, config, get_bundled("di-002"), seed=1)
    rejected = [q for q in record.questions if not q.verified]
    assert rejected
    assert all(q.rejection_reason for q in rejected)
    assert all(q.answer_evidence == "" for q in rejected)


# -- stage labels ------------------------------------------------------------------


@pytest.mark.parametrize(
    "tag, stage",
    [
        ("keypoint_chain", "keypoints"),
        ("question_chain", "questions"),
        ("verification_chain", "verification"),
        ("assessment", "session"),
        ("summary_chain", "summary"),
    ],
)
def test_failures_carry_the_stage_that_raised_them(config, tag, stage):
    gateway = poisoned_gateway(tag)
    with pytest.raises(EHRTutorError) as err:
        run_pipeline(gateway, config, get_bundled("di-001"), seed=0)
    assert err.value.stage == stage


def test_no_keypoints_short_circuits(config):
    gateway = poisoned_gateway("keypoint_chain", "no-keypoints: nothing fits the categories")
    assert prepare_questions(gateway, config, "Some instruction text.") == ([], [])
    with pytest.raises(NoVerifiedQuestions) as err:
        run_pipeline(gateway, config, get_bundled("di-001"), seed=0)
    assert err.value.stage == "verification"


def test_all_rejected_is_no_verified_questions(config):
    gateway = poisoned_gateway(
        "verification_chain", "verdict: unverifiable\nreason: nothing grounds it"
    )
    with pytest.raises(NoVerifiedQuestions, match="di-001"):
        run_pipeline(gateway, config, get_bundled("di-001"), seed=0)


# -- batches ----------------------------------------------------------------------


def test_batch_cycles_corpus_and_seeds(stub_gateway, config):
    corpus = [get_bundled("di-001"), get_bundled("di-003")]
    records, stats = run_batch(stub_gateway, config, corpus, count=4, base_seed=100)
    assert stats == {"generated": 4, "skipped": 0}
    assert [r.doc_id for r in records] == ["di-001", "di-003", "di-001", "di-003"]
    assert [r.seed for r in records] == [100, 101, 102, 103]
    for record in records:
        validate_record(record)


def test_batch_rejects_empty_corpus(stub_gateway, config):
    with pytest.raises(CorpusEmpty):
        run_batch(stub_gateway, config, [], count=1, base_seed=0)


def test_batch_of_zero(stub_gateway, config):
    assert run_batch(stub_gateway, config, [get_bundled("di-001")], 0, 0) == (
        [],
        {"generated": 0, "skipped": 0},
    )


def test_batch_skips_hopeless_documents_and_says_so(stub_gateway, config, caplog):
    corpus = [get_bundled("di-001"), DischargeInstruction(doc_id="hollow", text="ok.")]
    with caplog.at_level(logging.WARNING, logger="ehrtutor.pipeline"):
        records, stats = run_batch(stub_gateway, config, corpus, count=4, base_seed=0)
    assert stats == {"generated": 2, "skipped": 2}
    assert [r.doc_id for r in records] == ["di-001", "di-001"]
    assert [r.seed for r in records] == [0, 2]  # skipped indexes keep their seeds
    failures = [r for r in caplog.records if "hollow" in r.getMessage()]
    assert len(failures) == 4  # two skipped sessions x two attempts each
    assert all("stage" in r.getMessage() for r in failures)


def test_parallel_batch_matches_sequential(stub_gateway, config):
    corpus = load_bundled_corpus()[:3]
    sequential, _ = run_batch(stub_gateway, config, corpus, count=6, base_seed=40)
    parallel_config = EngineConfig(batch_parallelism=4)
    parallel, _ = run_batch(stub_gateway, parallel_config, corpus, count=6, base_seed=40)
    assert parallel == sequential


# -- baseline ----------------------------------------------------------------------


def test_baseline_shape(stub_gateway, config):
    record = run_baseline(stub_gateway, config, get_bundled("di-001"), seed=5, doctor_turns=3)
    assert record.model_tag == MODEL_TAG_BASELINE
    assert record.record_id == "baseline:di-001:seed5"
    assert record.questions == ()
    assert record.summary is None
    assert [t.kind for t in record.turns] == [
        TurnKind.QUESTION,
        TurnKind.ANSWER,
        TurnKind.QUESTION,
        TurnKind.ANSWER,
        TurnKind.END,
    ]
    assert [t.speaker for t in record.turns] == [
        Speaker.TUTOR,
        Speaker.PATIENT,
        Speaker.TUTOR,
        Speaker.PATIENT,
        Speaker.TUTOR,
    ]
    validate_record(record)


def test_baseline_default_budget_comes_from_config(stub_gateway, config):
    record = run_baseline(stub_gateway, config, get_bundled("di-001"), seed=5)
    doctor_turns = [t for t in record.turns if t.speaker is Speaker.TUTOR]
    assert len(doctor_turns) == config.baseline_turns
    assert doctor_turns[-1].kind is TurnKind.END


def test_baseline_is_deterministic(stub_gateway, config):
    once = run_baseline(stub_gateway, config, get_bundled("di-004"), seed=9, doctor_turns=4)
    again = run_baseline(stub_gateway, config, get_bundled("di-004"), seed=9, doctor_turns=4)
    assert once == again


def test_baseline_rejects_zero_turns(stub_gateway, config):
    with pytest.raises(ValueError, match="at least one"):
        run_baseline(stub_gateway, config, get_bundled("di-001"), seed=0, doctor_turns=0)


def test_baseline_blank_doctor_turn_is_a_session_failure(scripted_gateway, config):
    gateway = scripted_gateway({"baseline": ["   "]})
    with pytest.raises(ParseFailure) as err:
        run_baseline(gateway, config, get_bundled("di-001"), seed=0, doctor_turns=1)
    assert err.value.stage == "session"
