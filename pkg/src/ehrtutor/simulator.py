"""Synthetic patient.

A :class:`BehaviorPolicy` fixes how often the simulated patient answers
correctly, wrongly, or off-topic.  ``next_behavior`` is a pure function of
(seed, draw index, weights) built on the repo-pinned SHA-256 generator in
:mod:`ehrtutor.seeding`, so the same policy replays the same label sequence on
any platform.  The simulator sees the instruction, the current question, and
the public conversation — never the agent's scratchpad.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

from . import seeding
from .chains import Question, run_chain
from .config import TAG_PATIENT, EngineConfig
from .errors import InvalidWeights, ParseFailure
from .gateway import LLMGateway
from .templating import render_template

log = logging.getLogger(__name__)

BEHAVIOR_CORRECT = "correct"
BEHAVIOR_WRONG = "wrong"
BEHAVIOR_IRRELEVANT = "irrelevant"

_LABELS = (BEHAVIOR_CORRECT, BEHAVIOR_WRONG, BEHAVIOR_IRRELEVANT)

_WEIGHT_TOLERANCE = 1e-9

UNIFORM_WEIGHTS = (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)


def _check_weights(weights: tuple[float, float, float]) -> None:
    if len(weights) != 3:
        raise InvalidWeights(f"expected three weights, got {len(weights)}")
    if any(w < 0 for w in weights):
        raise InvalidWeights(f"weights must be nonnegative: {weights}")
    total = math.fsum(weights)
    if abs(total - 1.0) > _WEIGHT_TOLERANCE:
        raise InvalidWeights(f"weights must sum to 1 (got {total!r})")


@dataclass(frozen=True)
class BehaviorPolicy:
    """(p_correct, p_wrong, p_irrelevant) plus the seed that drives the draws."""

    weights: tuple[float, float, float] = UNIFORM_WEIGHTS
    seed: int = 0
    persona: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "weights", tuple(self.weights))
        _check_weights(self.weights)


def next_behavior(policy: BehaviorPolicy, draw_index: int) -> str:
    """Deterministic behavior label for the given draw index."""
    if draw_index < 0:
        raise ValueError("draw_index must be >= 0")
    _check_weights(policy.weights)
    index = seeding.weighted_index(policy.weights, "behavior", policy.seed, draw_index)
    return _LABELS[index]


_DIRECTIVES = {
    BEHAVIOR_CORRECT: (
        "Answer the question correctly, paraphrasing the relevant excerpt in plain, "
        "everyday words."
    ),
    BEHAVIOR_WRONG: (
        "Give a plausible but incorrect answer that conflicts with the relevant "
        "excerpt. Do not answer correctly."
    ),
    BEHAVIOR_IRRELEVANT: (
        "Reply with a short, polite remark that has nothing to do with the question."
    ),
}


def directive_for(behavior: str) -> str:
    """The instruction text the patient prompt carries for a behavior label."""
    if behavior not in _DIRECTIVES:
        raise ValueError(f"unknown behavior {behavior!r}")
    return _DIRECTIVES[behavior]


def respond(
    gateway: LLMGateway,
    config: EngineConfig,
    behavior: str,
    question: Question,
    instruction_text: str,
    transcript_tail: str,
    persona: str | None = None,
) -> str:
    """Produce one patient utterance with the requested behavior."""
    if behavior not in _LABELS:
        raise ValueError(f"unknown behavior {behavior!r}")
    if not question.verified:
        raise ValueError(f"cannot answer unverified question {question.id}")

    persona_line = f" Stay in character: {persona}" if persona else ""
    prompt = render_template(
        "patient",
        {
            "persona_line": persona_line,
            "instruction": instruction_text,
            "conversation": transcript_tail or "(the session just started)",
            "question": question.text,
            "evidence": question.answer_evidence,
            "directive": _DIRECTIVES[behavior],
        },
    )

    def parse(reply: str) -> str:
        text = reply.strip().strip('"').strip()
        if not text:
            raise ParseFailure(TAG_PATIENT, "patient reply was empty")
        return text

    return run_chain(gateway, config, TAG_PATIENT, prompt, parse)


class SimulatedPatient:
    """Responder bridging a behavior policy onto a session state.

    The draw index is derived from the transcript (number of patient turns so
    far), so the mapping from session state to behavior stays pure.  Repeated
    wrong answers to the same question are allowed; they are logged for
    dataset hygiene, not rejected.
    """

    def __init__(self, policy: BehaviorPolicy, gateway: LLMGateway, config: EngineConfig):
        self.policy = policy
        self.gateway = gateway
        self.config = config

    def __call__(self, state) -> str:  # state: agent.SessionState
        from .agent import Speaker, render_transcript

        active = state.active_entry()
        assert active is not None, "simulator called with no active question"
        draw_index = sum(1 for t in state.transcript if t.speaker is Speaker.PATIENT)
        behavior = next_behavior(self.policy, draw_index)
        tail = render_transcript(state.transcript, self.config.transcript_tail_turns)
        text = respond(
            self.gateway,
            self.config,
            behavior,
            active.question,
            state.instruction_text,
            tail,
            persona=self.policy.persona,
        )
        if behavior == BEHAVIOR_WRONG:
            earlier = [
                t.text
                for t in state.transcript
                if t.speaker is Speaker.PATIENT and t.text == text
            ]
            if earlier:
                log.debug("simulator repeated a wrong answer verbatim: %r", text)
        return text
