"""End-to-end session generation.

``run_pipeline`` drives one document through the whole engine — keypoints,
questions, verification, the tutoring session against a simulated patient, and
the closing summary — and packs the result into a
:class:`~ehrtutor.records.DialogueRecord`.  ``run_batch`` repeats that over a
corpus with per-session seeds; ``run_baseline`` generates the comparison
transcript from a single free-running role-play prompt, with no question queue
or verification behind it.

Failures keep their type but gain a ``stage`` label naming the phase that
raised them, so batch logs can say *where* a session died without string
matching.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from typing import Iterator, Sequence

from .agent import Phase, Speaker, Turn, TurnKind, finalize, start_session, step
from .chains import (
    KeyPoint,
    Question,
    extract_keypoints,
    generate_questions,
    verify_question,
)
from .config import TAG_BASELINE, TAG_PATIENT, EngineConfig
from .documents import DischargeInstruction
from .errors import CorpusEmpty, EHRTutorError, NoVerifiedQuestions, ParseFailure
from .gateway import ChatRequest, LLMGateway, Message
from .records import DialogueRecord, make_record_id
from .simulator import (
    UNIFORM_WEIGHTS,
    BehaviorPolicy,
    SimulatedPatient,
    directive_for,
    next_behavior,
)
from .templating import render_template

log = logging.getLogger(__name__)

MODEL_TAG_TUTOR = "ehrtutor"
MODEL_TAG_BASELINE = "baseline"

STAGE_KEYPOINTS = "keypoints"
STAGE_QUESTIONS = "questions"
STAGE_VERIFICATION = "verification"
STAGE_SESSION = "session"
STAGE_SUMMARY = "summary"


@contextmanager
def _label(stage: str) -> Iterator[None]:
    """Attach a stage label to engine errors passing through."""
    try:
        yield
    except EHRTutorError as exc:
        if exc.stage is None:
            exc.stage = stage
        raise


def prepare_questions(
    gateway: LLMGateway, config: EngineConfig, instruction_text: str
) -> tuple[list[KeyPoint], list[Question]]:
    """Keypoints -> questions -> verification. Returns keypoints and ALL
    questions (verified and rejected) in generation order."""
    with _label(STAGE_KEYPOINTS):
        keypoints = extract_keypoints(gateway, config, instruction_text)
    if not keypoints:
        return [], []
    with _label(STAGE_QUESTIONS):
        questions = generate_questions(gateway, config, instruction_text, keypoints)
    checked: list[Question] = []
    with _label(STAGE_VERIFICATION):
        for question in questions:
            checked.append(verify_question(gateway, config, instruction_text, question))
    return keypoints, checked


def run_pipeline(
    gateway: LLMGateway,
    config: EngineConfig,
    document: DischargeInstruction,
    seed: int,
    weights: tuple[float, float, float] = UNIFORM_WEIGHTS,
    persona: str | None = None,
    model_tag: str = MODEL_TAG_TUTOR,
) -> DialogueRecord:
    """One full tutoring session over ``document``, sealed into a record."""
    _, questions = prepare_questions(gateway, config, document.text)
    verified = [q for q in questions if q.verified]
    if not verified:
        error = NoVerifiedQuestions(
            f"document {document.doc_id} yielded no verified questions"
        )
        error.stage = STAGE_VERIFICATION
        raise error

    policy = BehaviorPolicy(weights=weights, seed=seed, persona=persona)
    patient = SimulatedPatient(policy, gateway, config)
    with _label(STAGE_SESSION):
        state = start_session(document.text, verified, seed)
        # Each question costs at most two patient answers (wrong, hint, wrong,
        # reveal); anything beyond the bound is a state-machine bug.
        max_steps = config.max_hints * len(verified) + len(verified) + 2
        steps = 0
        while state.phase is Phase.AWAITING_ANSWER:
            if steps >= max_steps:
                raise AssertionError("session exceeded its step bound")
            answer = patient(state)
            state, _ = step(gateway, config, state, answer)
            steps += 1
    with _label(STAGE_SUMMARY):
        summary = finalize(gateway, config, state)

    return DialogueRecord(
        record_id=make_record_id(model_tag, document.doc_id, seed),
        doc_id=document.doc_id,
        model_tag=model_tag,
        seed=seed,
        instruction_text=document.text,
        questions=tuple(questions),
        turns=tuple(state.transcript),
        missed_question_ids=tuple(state.missed),
        summary=summary,
    )


def run_batch(
    gateway: LLMGateway,
    config: EngineConfig,
    corpus: Sequence[DischargeInstruction],
    count: int,
    base_seed: int,
    weights: tuple[float, float, float] = UNIFORM_WEIGHTS,
    persona: str | None = None,
    model_tag: str = MODEL_TAG_TUTOR,
) -> tuple[list[DialogueRecord], dict[str, int]]:
    """Generate ``count`` sessions, cycling the corpus, seeding ``base_seed + i``.

    A failed session is retried once; a second failure skips it (logged, counted,
    never silently papered over).  Results come back in index order regardless
    of ``config.batch_parallelism``.
    """
    if not corpus:
        raise CorpusEmpty("cannot run a batch over an empty corpus")
    if count < 0:
        raise ValueError("count must be >= 0")

    def generate(index: int) -> DialogueRecord | None:
        document = corpus[index % len(corpus)]
        seed = base_seed + index
        for attempt in (1, 2):
            try:
                return run_pipeline(
                    gateway, config, document, seed,
                    weights=weights, persona=persona, model_tag=model_tag,
                )
            except EHRTutorError as exc:
                log.warning(
                    "session %d over %s failed at stage %s (attempt %d): %s",
                    index, document.doc_id, exc.stage, attempt, exc,
                )
        return None

    workers = max(1, config.batch_parallelism)
    if workers == 1:
        results = [generate(i) for i in range(count)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(generate, range(count)))

    records = [r for r in results if r is not None]
    stats = {"generated": len(records), "skipped": count - len(records)}
    return records, stats


def run_baseline(
    gateway: LLMGateway,
    config: EngineConfig,
    document: DischargeInstruction,
    seed: int,
    weights: tuple[float, float, float] = UNIFORM_WEIGHTS,
    persona: str | None = None,
    doctor_turns: int | None = None,
) -> DialogueRecord:
    """Free-running doctor/patient role-play over the same document.

    The doctor side is a single prompt with no question queue, verification,
    or decision table — the comparison arm for evaluation.  The patient side
    reuses the simulator's behavior policy; with no cited excerpt to lean on,
    its "correct" answers are bare acknowledgements.
    """
    budget = config.baseline_turns if doctor_turns is None else doctor_turns
    if budget < 1:
        raise ValueError("baseline needs at least one doctor turn")
    system = Message("system", render_template("baseline", {"instruction": document.text}))
    policy = BehaviorPolicy(weights=weights, seed=seed, persona=persona)

    turns: list[Turn] = []
    messages: list[Message] = [system]
    for round_index in range(budget):
        request = ChatRequest(
            model_id=config.provider.model_id,
            messages=tuple(messages),
            temperature=config.temperature_for(TAG_BASELINE),
            max_tokens=config.max_tokens,
            request_tag=TAG_BASELINE,
        )
        with _label(STAGE_SESSION):
            doctor_text = gateway.complete_chat(request).content.strip()
            if not doctor_text:
                raise ParseFailure(TAG_BASELINE, "doctor turn was empty")
        closing = round_index == budget - 1
        turns.append(
            Turn(
                speaker=Speaker.TUTOR,
                text=doctor_text,
                turn_index=len(turns),
                kind=TurnKind.END if closing else TurnKind.QUESTION,
            )
        )
        messages.append(Message("assistant", doctor_text))
        if closing:
            break

        behavior = next_behavior(policy, round_index)
        conversation = "\n".join(
            f"{'Tutor' if t.speaker is Speaker.TUTOR else 'Patient'}: {t.text}" for t in turns
        )
        patient_prompt = render_template(
            "patient",
            {
                "persona_line": f" Stay in character: {persona}" if persona else "",
                "instruction": document.text,
                "conversation": conversation,
                "question": doctor_text,
                "evidence": "",
                "directive": directive_for(behavior),
            },
        )
        patient_request = ChatRequest(
            model_id=config.provider.model_id,
            messages=(Message("user", patient_prompt),),
            temperature=config.temperature_for(TAG_PATIENT),
            max_tokens=config.max_tokens,
            request_tag=TAG_PATIENT,
        )
        with _label(STAGE_SESSION):
            patient_text = gateway.complete_chat(patient_request).content.strip()
            if not patient_text:
                raise ParseFailure(TAG_PATIENT, "patient turn was empty")
        turns.append(
            Turn(
                speaker=Speaker.PATIENT,
                text=patient_text,
                turn_index=len(turns),
                kind=TurnKind.ANSWER,
            )
        )
        messages.append(Message("user", patient_text))

    return DialogueRecord(
        record_id=make_record_id(MODEL_TAG_BASELINE, document.doc_id, seed),
        doc_id=document.doc_id,
        model_tag=MODEL_TAG_BASELINE,
        seed=seed,
        instruction_text=document.text,
        questions=(),
        turns=tuple(turns),
        missed_question_ids=(),
        summary=None,
    )
