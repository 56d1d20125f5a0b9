"""Acceptance suite: the engine's load-bearing guarantees, one verdict line each.

Run with ``pytest tests/test_acceptance.py -v``.  Every test prints a single
``[acceptance] PASS/FAIL — <guarantee>`` line so the checklist is readable
straight off the terminal even under ``-q``.
"""

from __future__ import annotations

import json
import math
import random
import subprocess
import sys
import time
from contextlib import contextmanager
from fractions import Fraction

import pytest

from ehrtutor.agent import (
    Phase,
    QuestionStatus,
    Speaker,
    TurnKind,
    start_session,
    step,
)
from ehrtutor.chains import REJECTION_FABRICATED, Category, Question, verify_question
from ehrtutor.config import EngineConfig
from ehrtutor.documents import get_bundled
from ehrtutor.evaluation import (
    JudgeReport,
    Metric,
    Perspective,
    aggregate_metric_means,
    audit_conversation,
    compute_win_rate,
    parse_judge_report,
    perspective_averages,
    score_metric,
)
from ehrtutor.gateway import (
    Cassette,
    CassetteEntry,
    FinishReason,
    GatewayMode,
    LLMGateway,
    load_cassette,
    record_cassette,
)
from ehrtutor.pipeline import prepare_questions
from ehrtutor.records import (
    DialogueRecord,
    load_record,
    read_dataset,
    record_from_dict,
    record_to_dict,
)
from ehrtutor.simulator import BehaviorPolicy, SimulatedPatient
from ehrtutor.stubprovider import StubProvider
from ehrtutor.textnorm import contains_normalized

from conftest import DATA_DIR
from helpers import simple_summary, verified_question

RANDOMIZED_SESSIONS = 1000


@pytest.fixture
def report(capsys):
    @contextmanager
    def verdict(guarantee: str):
        try:
            yield
        except BaseException:
            with capsys.disabled():
                print(f"[acceptance] FAIL — {guarantee}")
            raise
        with capsys.disabled():
            print(f"[acceptance] PASS — {guarantee}")

    return verdict


# -----------------------------------------------------------------------------
# 1. Deterministic end-to-end replay


def test_simulate_is_byte_identical_and_fast(tmp_path, report):
    command = [
        sys.executable, "-m", "ehrtutor.cli",
        "simulate", "--n", "3", "--seed", "42",
    ]
    started = time.monotonic()
    outputs = []
    for name in ("first.jsonl", "second.jsonl"):
        out = tmp_path / name
        done = subprocess.run(
            command + ["--out", str(out)], capture_output=True, text=True
        )
        assert done.returncode == 0, done.stderr
        outputs.append(out.read_bytes())
    elapsed = time.monotonic() - started

    with report("offline replay is byte-identical across runs and finishes fast"):
        assert outputs[0] == outputs[1]
        assert outputs[0] == (DATA_DIR / "simulate_n3_s42.jsonl").read_bytes()
        assert elapsed < 10.0, f"two replay runs took {elapsed:.1f}s"


# -----------------------------------------------------------------------------
# 2 + 3. Randomized session torture: state machine + answer secrecy


def synthetic_question(session_idx: int, q_idx: int) -> Question:
    tag = f"pad{session_idx}x{q_idx}"
    category = list(Category)[q_idx % len(list(Category))]
    evidence = (
        f"Apply the {tag} dressing to the healing area twice daily after "
        f"gently washing with warm water."
    )
    return Question(
        id=f"q{q_idx + 1}",
        category=category,
        text=f"How often should you apply the {tag} dressing?",
        keypoint_id=f"kp{q_idx + 1}",
        verified=True,
        answer_evidence=evidence,
    )


@pytest.fixture(scope="module")
def randomized_sessions():
    gateway = LLMGateway(GatewayMode.LIVE, provider=StubProvider())
    config = EngineConfig()
    rng = random.Random(318008)
    finished = []
    for i in range(RANDOMIZED_SESSIONS):
        questions = [synthetic_question(i, j) for j in range(rng.randint(1, 12))]
        raw = [rng.random() + 1e-6 for _ in range(3)]
        weights = tuple(value / sum(raw) for value in raw)
        seed = rng.randrange(2**31)
        patient = SimulatedPatient(BehaviorPolicy(weights=weights, seed=seed), gateway, config)
        state = start_session(
            " ".join(q.answer_evidence for q in questions), questions, seed
        )
        steps = 0
        while state.phase is Phase.AWAITING_ANSWER:
            assert steps <= 2 * len(questions) + 1, "session exceeded its step bound"
            state, _ = step(gateway, config, state, patient(state))
            steps += 1
        finished.append((state, steps))
    return finished


_CLEAN_WINDOWS = {
    (TurnKind.QUESTION, TurnKind.ANSWER),
    (TurnKind.QUESTION, TurnKind.ANSWER, TurnKind.HINT, TurnKind.ANSWER),
    (
        TurnKind.QUESTION,
        TurnKind.ANSWER,
        TurnKind.HINT,
        TurnKind.ANSWER,
        TurnKind.REVEAL,
    ),
}


def question_windows(turns):
    """Split a transcript into per-question turn windows."""
    assert turns[0].kind is TurnKind.GREETING
    assert turns[-1].kind is TurnKind.END
    windows: list[list] = []
    for turn in turns[1:-1]:
        if turn.kind is TurnKind.QUESTION:
            windows.append([turn])
        else:
            windows[-1].append(turn)
    return windows


def test_randomized_sessions_obey_the_state_machine(randomized_sessions, report):
    hinted = missed = 0
    with report(
        f"{RANDOMIZED_SESSIONS} randomized sessions: no early endings, hints "
        f"before reveals, bounded attempts, clean scratchpads, zero audit flags"
    ):
        for state, steps in randomized_sessions:
            # Ending is only legal once every question is resolved.
            assert state.phase is Phase.SUMMARIZING
            assert all(
                entry.status in (QuestionStatus.PASSED, QuestionStatus.FAILED)
                for entry in state.queue
            )

            windows = question_windows(state.transcript)
            assert len(windows) == len(state.queue)
            for index, window in enumerate(windows):
                kinds = tuple(turn.kind for turn in window)
                # Covers: <=2 attempts, <=1 hint, first wrong answer is
                # followed by a hint, reveals only after a failed retry.
                assert kinds in _CLEAN_WINDOWS, kinds
                assert window[0].text.endswith(state.queue[index].question.text)
                hinted += TurnKind.HINT in kinds
                missed += TurnKind.REVEAL in kinds

            assert len(state.scratchpad) == 1 + steps
            for entry in state.scratchpad:
                assert entry.thought.strip()
                assert entry.action is not None
                assert entry.observation.strip()

            assert audit_conversation(state.transcript, state)[Perspective.AGENT] == 0

        # The torture run must actually exercise the hard paths.
        assert hinted >= 100 and missed >= 100


def test_randomized_sessions_never_leak_answers_early(randomized_sessions, report):
    with report(
        f"{RANDOMIZED_SESSIONS} randomized sessions: no tutor turn quotes an "
        f"answer before a hint was given"
    ):
        for state, _ in randomized_sessions:
            windows = question_windows(state.transcript)
            evidences = [entry.question.answer_evidence for entry in state.queue]
            greeting, closing = state.transcript[0], state.transcript[-1]
            for turn in (greeting, closing):
                assert not any(contains_normalized(turn.text, e) for e in evidences)
            for w_index, window in enumerate(windows):
                hint_seen = False
                for turn in window:
                    if turn.kind is TurnKind.HINT:
                        hint_seen = True
                    if turn.speaker is not Speaker.TUTOR:
                        continue
                    for e_index, evidence in enumerate(evidences):
                        if contains_normalized(turn.text, evidence):
                            # Quoting is legal only in a reveal, only for the
                            # question this window belongs to, after a hint.
                            assert turn.kind is TurnKind.REVEAL
                            assert e_index == w_index
                            assert hint_seen


# -----------------------------------------------------------------------------
# 4. Rubric arithmetic


def test_rubric_score_table(report):
    with report("violation counts map to scores exactly: max(0, 5 - count)"):
        assert [score_metric(v) for v in range(11)] == [5, 4, 3, 2, 1, 0, 0, 0, 0, 0, 0]


# -----------------------------------------------------------------------------
# 5. Judge parsing and aggregation against a constructed fixture


EHRTUTOR_ROW = (4.59, 4.80, 4.35, 4.11, 4.64, 4.35, 4.75, 4.32)
GPT4_ROW = (3.36, 3.60, 3.39, 2.86, 3.11, 2.81, 3.42, 3.78)
SLOTS = (
    (Perspective.QUESTION, Metric.COVER_RATE),
    (Perspective.QUESTION, Metric.RELEVANCE),
    (Perspective.QUESTION, Metric.FLUENT),
    (Perspective.AGENT, Metric.RATIONALITY),
    (Perspective.RESPONSE, Metric.RELEVANCE),
    (Perspective.RESPONSE, Metric.SUFFICIENT),
    (Perspective.RESPONSE, Metric.FACTUALITY),
    (Perspective.SUMMARY, Metric.COVER_RATE),
)
_SPELLINGS = {
    (Perspective.QUESTION, Metric.COVER_RATE): ("Question", "Coverrate"),
    (Perspective.QUESTION, Metric.RELEVANCE): ("Question", "Relevance"),
    (Perspective.QUESTION, Metric.FLUENT): ("Question", "Fluent"),
    (Perspective.AGENT, Metric.RATIONALITY): ("Agent", "Correctness"),
    (Perspective.RESPONSE, Metric.RELEVANCE): ("Response", "Relevance"),
    (Perspective.RESPONSE, Metric.SUFFICIENT): ("Response", "Sufficient"),
    (Perspective.RESPONSE, Metric.FACTUALITY): ("Response", "Factuality"),
    (Perspective.SUMMARY, Metric.COVER_RATE): ("Summary", "Coverrate"),
}


def integer_score(target: float, index: int) -> int:
    """Integer per-report scores whose 100-report mean hits ``target`` exactly.

    ``target = b + k/100`` becomes ``k`` reports of ``b + 1`` and the rest ``b``.
    """
    base = math.floor(target)
    k = round((target - base) * 100)
    return base + 1 if index < k else base


def fixture_judge_outputs() -> list[str]:
    texts = []
    for index in range(100):
        payload: dict = {"best model": "EHRTutor"}
        for label, row in (("EHRTutor", EHRTUTOR_ROW), ("GPT4", GPT4_ROW)):
            entry: dict = {}
            for slot, target in zip(SLOTS, row):
                perspective, metric = _SPELLINGS[slot]
                entry.setdefault(perspective, {})[metric] = integer_score(target, index)
            payload[label] = entry
        texts.append(
            "Comparing both transcripts against the instruction.\n"
            + json.dumps(payload)
            + "\nOverall the structured tutor covers more ground."
        )
    return texts


def test_judge_aggregation_reproduces_the_reference_rows(report):
    reports = [parse_judge_report(text) for text in fixture_judge_outputs()]
    with report(
        "aggregating 100 parsed judge reports reproduces both reference score "
        "rows to within 0.005"
    ):
        for label, row in (("EHRTutor", EHRTUTOR_ROW), ("GPT4", GPT4_ROW)):
            means = aggregate_metric_means(reports, label)
            for (perspective, metric), target in zip(SLOTS, row):
                assert abs(means[perspective][metric] - target) < 0.005, (
                    label, perspective, metric)
        ehr_averages = perspective_averages(aggregate_metric_means(reports, "EHRTutor"))
        assert abs(ehr_averages[Perspective.QUESTION] - 13.74 / 3) < 0.005
        assert abs(ehr_averages[Perspective.RESPONSE] - 13.74 / 3) < 0.005


# -----------------------------------------------------------------------------
# 6. Win-rate arithmetic


def _report_with_best(best: str | None) -> JudgeReport:
    scores = {
        Perspective.QUESTION: {
            Metric.COVER_RATE: 4.0, Metric.RELEVANCE: 4.0, Metric.FLUENT: 4.0
        },
        Perspective.AGENT: {Metric.RATIONALITY: 4.0},
        Perspective.RESPONSE: {
            Metric.RELEVANCE: 4.0, Metric.SUFFICIENT: 4.0, Metric.FACTUALITY: 4.0
        },
        Perspective.SUMMARY: {Metric.COVER_RATE: 4.0},
    }
    return JudgeReport(best_model=best, per_model={"EHRTutor": scores, "GPT4": dict(scores)})


def test_win_rates_are_exact_and_complementary(report):
    with report("win rates are exact fractions and the two sides always sum to 1"):
        sweep = [_report_with_best("EHRTutor")] * 4
        assert compute_win_rate(sweep, "EHRTutor") == Fraction(1)
        three_one = sweep[:3] + [_report_with_best("GPT4")]
        assert compute_win_rate(three_one, "EHRTutor") == Fraction(3, 4)
        rng = random.Random(6)
        for _ in range(50):
            outcomes = [
                _report_with_best(rng.choice(["EHRTutor", "GPT4", None]))
                for _ in range(rng.randint(1, 30))
            ]
            total = compute_win_rate(outcomes, "EHRTutor") + compute_win_rate(
                outcomes, "GPT4"
            )
            assert total == Fraction(1)


# -----------------------------------------------------------------------------
# 7. Evidence grounding across the shipped fixtures


def golden_records() -> list[DialogueRecord]:
    records = read_dataset(str(DATA_DIR / "simulate_n3_s42.jsonl"))
    records.append(load_record(str(DATA_DIR / "golden_di001_seed7.json")))
    return records


def test_fixture_evidence_is_grounded_and_fabrication_is_caught(report, scripted_gateway, config):
    with report(
        "every verified fixture question quotes its instruction verbatim, and "
        "fabricated evidence is rejected"
    ):
        verified_total = 0
        for record in golden_records():
            for question in record.questions:
                if not question.verified:
                    continue
                verified_total += 1
                assert contains_normalized(record.instruction_text, question.answer_evidence)
        assert verified_total >= 10  # the fixtures must carry real coverage

        # Mutate one fixture: a made-up quote must fail the same check ...
        record = golden_records()[0]
        target = next(q for q in record.questions if q.verified)
        fabricated = "Stand on one leg for ninety minutes every midnight."
        assert not contains_normalized(record.instruction_text, fabricated)

        # ... and the verification chain must refuse to bless it.
        gateway = scripted_gateway(
            {"verification_chain": [f"verdict: verifiable\nevidence: {fabricated}"]}
        )
        fresh = Question(
            id=target.id,
            category=target.category,
            text=target.text,
            keypoint_id=target.keypoint_id,
        )
        checked = verify_question(gateway, config, record.instruction_text, fresh)
        assert not checked.verified
        assert checked.rejection_reason == REJECTION_FABRICATED


# -----------------------------------------------------------------------------
# 8. Persistence round-trips


_WORDS = (
    "ankle breakfast clinic daily dressing echo evening fever gauze inhaler "
    "monday morning ointment pharmacy rinse scan swelling tablet walking water"
).split()


def random_text(rng: random.Random) -> str:
    return " ".join(rng.choice(_WORDS) for _ in range(rng.randint(1, 6)))


def random_record(rng: random.Random, index: int) -> DialogueRecord:
    from ehrtutor.agent import Turn

    qids = ["q1", "q2", "q3"][: rng.randint(1, 3)]
    missed = tuple(q for q in qids if rng.random() < 0.4)
    kinds = [rng.choice(list(TurnKind)) for _ in range(rng.randint(1, 8))]
    turns = tuple(
        Turn(
            speaker=Speaker.PATIENT if kind is TurnKind.ANSWER else Speaker.TUTOR,
            text=random_text(rng),
            turn_index=i,
            kind=kind,
        )
        for i, kind in enumerate(kinds)
    )
    extras = {f"x_{random_text(rng).replace(' ', '_')}": rng.randint(0, 9)} if rng.random() < 0.5 else {}
    return DialogueRecord(
        record_id=f"fuzz:di-{index:03d}:seed{index}",
        doc_id=f"di-{index:03d}",
        model_tag=rng.choice(["ehrtutor", "baseline"]),
        seed=rng.randrange(2**31),
        instruction_text=random_text(rng),
        questions=tuple(verified_question(q) for q in qids),
        turns=turns,
        missed_question_ids=missed,
        summary=simple_summary(missed=missed) if rng.random() < 0.7 else None,
        extras=extras,
    )


def random_cassette(rng: random.Random) -> Cassette:
    cassette = Cassette()
    for _ in range(rng.randint(1, 6)):
        fingerprint = "".join(rng.choice("0123456789abcdef") for _ in range(64))
        finish = rng.choice([FinishReason.COMPLETE, FinishReason.TRUNCATED])
        content = random_text(rng) if finish is FinishReason.COMPLETE else ""
        cassette.add(
            CassetteEntry(
                fingerprint=fingerprint,
                request_tag=rng.choice(["assessment", "agent", "patient", "judge"]),
                content=content,
                finish_reason=finish,
            )
        )
    return cassette


def test_persistence_roundtrips_on_randomized_instances(tmp_path, report):
    rng = random.Random(808)
    with report(
        "100 randomized dialogue records and 100 randomized cassettes survive "
        "serialization unchanged"
    ):
        for index in range(100):
            record = random_record(rng, index)
            assert record_from_dict(json.loads(json.dumps(record_to_dict(record)))) == record
        path = tmp_path / "fuzz_cassette.jsonl"
        for _ in range(100):
            cassette = random_cassette(rng)
            record_cassette(cassette, path)
            loaded = load_cassette(path)
            assert loaded.entries == cassette.entries


# -----------------------------------------------------------------------------
# 9. Category coverage on the first bundled document


def test_di001_covers_all_four_question_categories(replay_gateway, config, report):
    with report(
        "di-001 yields verified questions in all four categories from the "
        "bundled cassette"
    ):
        _, questions = prepare_questions(replay_gateway, config, get_bundled("di-001").text)
        covered = {q.category for q in questions if q.verified}
        assert covered == set(Category)
