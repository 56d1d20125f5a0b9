"""Tutoring agent: a ReAct-style loop wrapped around a hard state machine.

The model proposes actions in Thought/Action/Action Input form, but legality
is decided here, in code.  Whatever the model says, a first miss earns a hint,
a second miss earns the answer and an advance, and the session cannot end
while verified questions wait in the queue.  Coercions are noted on the
scratchpad so the trace stays honest.

The scratchpad is serialized into every agent prompt (oldest entries dropped
past a token budget) and never enters the patient-facing transcript.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum

from . import seeding
from .chains import (
    Hint,
    Question,
    SessionSummary,
    generate_hint,
    generate_summary,
    parse_kv_lines,
    run_chain,
    strip_fences,
)
from .config import TAG_AGENT, TAG_ASSESSMENT, EngineConfig
from .errors import IllegalPhase, NoVerifiedQuestions, ParseFailure
from .gateway import LLMGateway
from .templating import render_template


class Speaker(str, Enum):
    TUTOR = "tutor"
    PATIENT = "patient"


class TurnKind(str, Enum):
    GREETING = "greeting"
    QUESTION = "question"
    HINT = "hint"
    REVEAL = "reveal"
    ANSWER = "answer"
    END = "end"


class Phase(str, Enum):
    QUESTIONING = "questioning"
    AWAITING_ANSWER = "awaiting_answer"
    SUMMARIZING = "summarizing"
    DONE = "done"


class QuestionStatus(str, Enum):
    PENDING = "pending"
    ASKED = "asked"
    HINTED = "hinted"
    PASSED = "passed"
    FAILED = "failed"


class ActionKind(str, Enum):
    ASK_NEXT_QUESTION = "AskNextQuestion"
    GIVE_HINT = "GiveHint"
    REVEAL_AND_ADVANCE = "RevealAndAdvance"
    END_CONVERSATION = "EndConversation"


class Verdict(str, Enum):
    CORRECT = "correct"
    INCORRECT = "incorrect"
    IRRELEVANT = "irrelevant"


_TERMINAL = (QuestionStatus.PASSED, QuestionStatus.FAILED)
_ACTIVE = (QuestionStatus.ASKED, QuestionStatus.HINTED)


@dataclass(frozen=True)
class Turn:
    speaker: Speaker
    text: str
    turn_index: int
    kind: TurnKind

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError("turn text must be nonempty")
        if self.turn_index < 0:
            raise ValueError("turn_index must be >= 0")


@dataclass(frozen=True)
class AgentAction:
    kind: ActionKind
    target_question: str | None = None

    def __post_init__(self) -> None:
        needs_target = self.kind in (ActionKind.GIVE_HINT, ActionKind.REVEAL_AND_ADVANCE)
        if needs_target and not self.target_question:
            raise ValueError(f"{self.kind.value} requires a target question")


@dataclass(frozen=True)
class ScratchpadEntry:
    thought: str
    action: AgentAction
    observation: str


@dataclass(frozen=True)
class Assessment:
    verdict: Verdict
    rationale: str

    def __post_init__(self) -> None:
        if not self.rationale.strip():
            raise ValueError("assessment rationale must be nonempty")


@dataclass
class QueueEntry:
    question: Question
    status: QuestionStatus = QuestionStatus.PENDING
    hints_given: int = 0


@dataclass
class SessionState:
    """Everything one tutoring session owns.  Single writer: ``step``."""

    instruction_text: str
    queue: list[QueueEntry]
    transcript: list[Turn] = field(default_factory=list)
    scratchpad: list[ScratchpadEntry] = field(default_factory=list)
    phase: Phase = Phase.QUESTIONING
    missed: list[str] = field(default_factory=list)
    rng_seed: int = 0

    def active_entry(self) -> QueueEntry | None:
        for entry in self.queue:
            if entry.status in _ACTIVE:
                return entry
        return None

    def next_pending(self) -> QueueEntry | None:
        for entry in self.queue:
            if entry.status is QuestionStatus.PENDING:
                return entry
        return None

    def pending_count(self) -> int:
        return sum(1 for e in self.queue if e.status is QuestionStatus.PENDING)

    def entry_for(self, question_id: str) -> QueueEntry | None:
        for entry in self.queue:
            if entry.question.id == question_id:
                return entry
        return None

    def _append_turn(self, speaker: Speaker, text: str, kind: TurnKind) -> Turn:
        turn = Turn(speaker=speaker, text=text, turn_index=len(self.transcript), kind=kind)
        self.transcript.append(turn)
        return turn


_GREETINGS = (
    "Hello! Before you head home, let's go over your discharge instructions together. "
    "I'll ask a few questions to make sure everything is clear.",
    "Hi there! I'd like to review your discharge instructions with you. "
    "I'll ask you some questions — just answer as best you can.",
    "Welcome back. Let's make sure your discharge instructions make sense. "
    "I'm going to quiz you on the important parts.",
)

_ACKS = (
    "That's right.",
    "Exactly.",
    "Correct — well done.",
    "Yes, that's it.",
)

_CLOSING = (
    "That covers everything I wanted to check. Thank you for going through it with me — "
    "I'll pull together a short summary of what we reviewed."
)


def render_transcript(turns: list[Turn], limit: int | None = None) -> str:
    """Speaker-labelled plain text, most recent ``limit`` turns."""
    slice_ = turns[-limit:] if limit else turns
    return "\n".join(f"{'Tutor' if t.speaker is Speaker.TUTOR else 'Patient'}: {t.text}" for t in slice_)


def render_scratchpad(entries: list[ScratchpadEntry], token_budget: int) -> str:
    """Serialize scratchpad entries, dropping the oldest past the budget.

    Tokens are estimated as characters/4; the most recent entry always
    survives truncation.
    """
    rendered = [
        (
            f"Thought: {e.thought}\n"
            f"Action: {e.action.kind.value}\n"
            f"Action Input: {e.action.target_question or 'none'}\n"
            f"Observation: {e.observation}"
        )
        for e in entries
    ]
    if not rendered:
        return "(empty)"
    kept = list(rendered)
    while len(kept) > 1 and sum(len(r) for r in kept) // 4 > token_budget:
        kept.pop(0)
    dropped = len(rendered) - len(kept)
    prefix = f"(… {dropped} earlier entries truncated)\n" if dropped else ""
    return prefix + "\n".join(kept)


def start_session(instruction_text: str, questions: list[Question], seed: int) -> SessionState:
    """Open a session: greeting turn, first question turn, opening scratchpad entry."""
    verified = [q for q in questions if q.verified]
    if not verified:
        raise NoVerifiedQuestions("cannot start a session without a verified question")
    if len(verified) != len(questions):
        rejected = [q.id for q in questions if not q.verified]
        raise ValueError(f"session queue must contain only verified questions; got {rejected}")

    state = SessionState(
        instruction_text=instruction_text,
        queue=[QueueEntry(question=q) for q in verified],
        rng_seed=seed,
    )
    greeting = seeding.pick(_GREETINGS, "greeting", seed)
    state._append_turn(Speaker.TUTOR, greeting, TurnKind.GREETING)
    first = state.queue[0]
    first.status = QuestionStatus.ASKED
    state._append_turn(Speaker.TUTOR, first.question.text, TurnKind.QUESTION)
    state.phase = Phase.AWAITING_ANSWER
    state.scratchpad.append(
        ScratchpadEntry(
            thought="The session just opened; begin with the first verified question.",
            action=AgentAction(ActionKind.ASK_NEXT_QUESTION, target_question=first.question.id),
            observation=f"Asked {first.question.id}.",
        )
    )
    return state


def assess_answer(
    gateway: LLMGateway, config: EngineConfig, state: SessionState, patient_text: str
) -> Assessment:
    """Grade the patient's answer to the active question."""
    if state.phase is not Phase.AWAITING_ANSWER:
        raise IllegalPhase("assess_answer", state.phase.value, Phase.AWAITING_ANSWER.value)
    active = state.active_entry()
    assert active is not None, "awaiting answer with no active question"
    prompt = render_template(
        "assessment",
        {
            "question": active.question.text,
            "evidence": active.question.answer_evidence,
            "answer": patient_text,
        },
    )

    def parse(reply: str) -> Assessment:
        data = dict(parse_kv_lines(reply, TAG_ASSESSMENT))
        raw = data.get("verdict", "").lower()
        try:
            verdict = Verdict(raw)
        except ValueError:
            raise ParseFailure(
                TAG_ASSESSMENT,
                f"verdict must be correct, incorrect or irrelevant, got {raw!r}",
            ) from None
        rationale = data.get("rationale", "")
        if not rationale:
            raise ParseFailure(TAG_ASSESSMENT, "reply lacks a 'rationale:' line")
        return Assessment(verdict=verdict, rationale=rationale)

    return run_chain(gateway, config, TAG_ASSESSMENT, prompt, parse)


_REACT_THOUGHT = re.compile(r"^Thought:\s*(.+)$", re.MULTILINE)
_REACT_ACTION = re.compile(r"^Action:\s*(\S+)\s*$", re.MULTILINE)
_REACT_INPUT = re.compile(r"^Action Input:\s*(.*)$", re.MULTILINE)


def parse_react(text: str) -> tuple[str, AgentAction]:
    """Parse a Thought/Action/Action Input reply into a proposed action."""
    body = strip_fences(text)
    thought_m = _REACT_THOUGHT.search(body)
    if not thought_m:
        raise ParseFailure(TAG_AGENT, "reply lacks a 'Thought:' line")
    action_m = _REACT_ACTION.search(body)
    if not action_m:
        raise ParseFailure(TAG_AGENT, "reply lacks an 'Action:' line")
    try:
        kind = ActionKind(action_m.group(1))
    except ValueError:
        raise ParseFailure(TAG_AGENT, f"unknown action kind {action_m.group(1)!r}") from None
    input_m = _REACT_INPUT.search(body)
    raw_target = input_m.group(1).strip() if input_m else ""
    target = None if raw_target.lower() in ("", "none", "n/a", "-") else raw_target
    try:
        action = AgentAction(kind=kind, target_question=target)
    except ValueError as err:
        raise ParseFailure(TAG_AGENT, str(err)) from None
    return thought_m.group(1).strip(), action


def expected_action(
    state: SessionState, assessment: Assessment, max_hints: int
) -> AgentAction:
    """The one action the decision table allows right now."""
    active = state.active_entry()
    assert active is not None
    if assessment.verdict is Verdict.CORRECT:
        nxt = state.next_pending()
        if nxt is not None:
            return AgentAction(ActionKind.ASK_NEXT_QUESTION, target_question=nxt.question.id)
        return AgentAction(ActionKind.END_CONVERSATION)
    if active.hints_given < max_hints:
        return AgentAction(ActionKind.GIVE_HINT, target_question=active.question.id)
    return AgentAction(ActionKind.REVEAL_AND_ADVANCE, target_question=active.question.id)


def coerce_action(
    state: SessionState, assessment: Assessment, proposed: AgentAction, max_hints: int
) -> tuple[AgentAction, str | None]:
    """Replace an illegal proposal with the mandated action, noting it."""
    mandated = expected_action(state, assessment, max_hints)
    if proposed.kind is mandated.kind and proposed.target_question in (
        mandated.target_question,
        None,
    ):
        return mandated, None
    note = (
        f"Model proposed {proposed.kind.value}"
        f"{f' on {proposed.target_question}' if proposed.target_question else ''}; "
        f"coerced to {mandated.kind.value} per tutoring policy."
    )
    return mandated, note


def _format_queue(state: SessionState) -> str:
    return "\n".join(
        f"- [{e.question.id}] ({e.status.value}) {e.question.text}" for e in state.queue
    )


def _propose_action(
    gateway: LLMGateway,
    config: EngineConfig,
    state: SessionState,
    assessment: Assessment,
) -> tuple[str, AgentAction]:
    active = state.active_entry()
    assert active is not None
    prompt = render_template(
        "agent",
        {
            "instruction": state.instruction_text,
            "queue": _format_queue(state),
            "question_id": active.question.id,
            "status": active.status.value,
            "question": active.question.text,
            "evidence": active.question.answer_evidence,
            "verdict": assessment.verdict.value,
            "rationale": assessment.rationale,
            "hints_given": str(active.hints_given),
            "remaining": str(state.pending_count()),
            "scratchpad": render_scratchpad(state.scratchpad, config.scratchpad_token_budget),
            "conversation": render_transcript(state.transcript, config.transcript_tail_turns),
        },
    )
    return run_chain(gateway, config, TAG_AGENT, prompt, parse_react)


def _advance(state: SessionState, lead_in: str) -> tuple[list[str], str]:
    """Ask the next pending question or close the conversation.

    Returns the new tutor turn texts and an observation fragment.
    """
    texts: list[str] = []
    nxt = state.next_pending()
    if nxt is not None:
        nxt.status = QuestionStatus.ASKED
        text = f"{lead_in} {nxt.question.text}".strip()
        state._append_turn(Speaker.TUTOR, text, TurnKind.QUESTION)
        texts.append(text)
        return texts, f"asked {nxt.question.id}"
    state._append_turn(Speaker.TUTOR, _CLOSING, TurnKind.END)
    texts.append(_CLOSING)
    state.phase = Phase.SUMMARIZING
    return texts, "ended the conversation"


def step(
    gateway: LLMGateway, config: EngineConfig, state: SessionState, patient_text: str
) -> tuple[SessionState, str]:
    """Consume one patient answer and emit the tutor's reply.

    Exactly one scratchpad entry is appended per step; the transcript gains
    the patient turn plus the tutor turn(s) the action produced.
    """
    if state.phase is not Phase.AWAITING_ANSWER:
        raise IllegalPhase("step", state.phase.value, Phase.AWAITING_ANSWER.value)
    active = state.active_entry()
    assert active is not None, "awaiting answer with no active question"

    state._append_turn(Speaker.PATIENT, patient_text, TurnKind.ANSWER)
    assessment = assess_answer(gateway, config, state, patient_text)
    thought, proposed = _propose_action(gateway, config, state, assessment)
    action, note = coerce_action(state, assessment, proposed, config.max_hints)
    if note:
        thought = f"{thought} [{note}]"

    texts: list[str] = []
    question = active.question
    if action.kind is ActionKind.GIVE_HINT:
        hint: Hint = generate_hint(
            gateway,
            config,
            state.instruction_text,
            question,
            render_transcript(state.transcript, config.transcript_tail_turns),
        )
        active.status = QuestionStatus.HINTED
        active.hints_given += 1
        state._append_turn(Speaker.TUTOR, hint.text, TurnKind.HINT)
        texts.append(hint.text)
        observation = f"Gave hint {active.hints_given} for {question.id}."
    elif action.kind is ActionKind.REVEAL_AND_ADVANCE:
        active.status = QuestionStatus.FAILED
        state.missed.append(question.id)
        reveal = (
            f"Not quite — let me give you the answer. Your discharge instructions say: "
            f"\"{question.answer_evidence}\" Please read that part again when you get home."
        )
        state._append_turn(Speaker.TUTOR, reveal, TurnKind.REVEAL)
        texts.append(reveal)
        more, obs_tail = _advance(state, "Let's move on.")
        texts.extend(more)
        observation = f"Revealed the answer for {question.id}, marked it failed, {obs_tail}."
    elif action.kind is ActionKind.ASK_NEXT_QUESTION:
        active.status = QuestionStatus.PASSED
        ack = seeding.pick(_ACKS, "ack", state.rng_seed, len(state.transcript))
        more, obs_tail = _advance(state, ack)
        texts.extend(more)
        observation = f"Marked {question.id} passed, {obs_tail}."
    else:  # EndConversation
        active.status = QuestionStatus.PASSED
        ack = seeding.pick(_ACKS, "ack", state.rng_seed, len(state.transcript))
        state._append_turn(Speaker.TUTOR, f"{ack} {_CLOSING}", TurnKind.END)
        texts.append(f"{ack} {_CLOSING}")
        state.phase = Phase.SUMMARIZING
        observation = f"Marked {question.id} passed and ended the conversation."

    state.scratchpad.append(
        ScratchpadEntry(thought=thought, action=action, observation=observation)
    )
    return state, "\n\n".join(texts)


def finalize(
    gateway: LLMGateway, config: EngineConfig, state: SessionState
) -> SessionSummary:
    """Produce the session summary and close the session."""
    if state.phase is not Phase.SUMMARIZING:
        raise IllegalPhase("finalize", state.phase.value, Phase.SUMMARIZING.value)
    unresolved = [
        e.question.id for e in state.queue if e.status not in _TERMINAL
    ]
    assert not unresolved, f"summarizing with unresolved questions {unresolved}"
    missed_questions = [
        e.question for e in state.queue if e.question.id in state.missed
    ]
    summary = generate_summary(
        gateway,
        config,
        state.instruction_text,
        render_transcript(state.transcript),
        missed_questions,
    )
    state.phase = Phase.DONE
    return summary
