"""Prompt chains: keypoints -> questions -> verification -> hints -> summary.

Each chain renders its template, calls the gateway once, and parses the reply
with a strict parser.  On a parse failure the chain re-prompts exactly once
with the previous reply and the parser's complaint appended; a second failure
raises :class:`ParseFailure`.  Parsers are total: they either return a
well-formed value or raise a typed error — nothing malformed leaks downstream.

Evidence grounding is the anti-hallucination core: any excerpt a model cites
must literally occur in the instruction text (whitespace-insensitively).  A
"verifiable" verdict whose excerpt is absent becomes a rejection with reason
"fabricated evidence"; it is never silently accepted.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Sequence, TypeVar

from .config import (
    TAG_HINT,
    TAG_KEYPOINTS,
    TAG_QUESTIONS,
    TAG_SUMMARY,
    TAG_VERIFICATION,
    EngineConfig,
)
from .errors import EmptyInstruction, IncompleteResponse, NoQuestions, ParseFailure
from .gateway import ChatRequest, ChatResponse, FinishReason, LLMGateway, Message
from .templating import render_template
from .textnorm import contains_normalized, find_normalized

T = TypeVar("T")

REJECTION_FABRICATED = "fabricated evidence"

#: the seven checklist slots every session summary must answer.
CHECKLIST_KEYS: tuple[str, ...] = (
    "medical_problem",
    "medical_allergies",
    "good_exercises",
    "diet",
    "activities_to_avoid",
    "next_appointment",
    "points_not_understood",
)

CHECKLIST_NOT_APPLICABLE = "not applicable"


class Category(str, Enum):
    TEST = "test"
    MEDICATION = "medication"
    COMPLICATIONS_PROGRESS = "complications_progress"
    FOLLOW_UP = "follow_up"


@dataclass(frozen=True)
class KeyPoint:
    """A single fact a patient must take away, anchored to the document."""

    id: str
    category: Category
    text: str
    evidence_span: tuple[int, int]

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError("keypoint text must be nonempty")
        start, end = self.evidence_span
        if start < 0 or end <= start:
            raise ValueError(f"bad evidence span {self.evidence_span}")


@dataclass(frozen=True)
class Question:
    """A quiz question derived from one keypoint.

    A question is born unverified.  Verification either grounds it
    (``verified=True`` with nonempty ``answer_evidence``) or rejects it
    (``rejection_reason`` set); no question ends up in both states.
    """

    id: str
    category: Category
    text: str
    keypoint_id: str
    verified: bool = False
    answer_evidence: str = ""
    rejection_reason: str | None = None

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError("question text must be nonempty")
        if self.verified:
            if not self.answer_evidence.strip():
                raise ValueError("a verified question must carry answer evidence")
            if self.rejection_reason is not None:
                raise ValueError("a verified question cannot carry a rejection reason")
        elif self.rejection_reason is not None and not self.rejection_reason.strip():
            raise ValueError("rejection_reason must be nonempty when set")


@dataclass(frozen=True)
class Hint:
    question_id: str
    text: str
    reveals_answer: bool = False

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError("hint text must be nonempty")


@dataclass(frozen=True)
class SessionSummary:
    """End-of-session recap: key points, missed questions, checklist answers."""

    keypoint_recap: tuple[tuple[Category, str], ...]
    missed_points: tuple[tuple[str, str], ...]
    checklist_answers: dict[str, str]

    def __post_init__(self) -> None:
        missing = [k for k in CHECKLIST_KEYS if not self.checklist_answers.get(k, "").strip()]
        if missing:
            raise ValueError(f"checklist answers missing keys: {missing}")
        extra = set(self.checklist_answers) - set(CHECKLIST_KEYS)
        if extra:
            raise ValueError(f"unknown checklist keys: {sorted(extra)}")


# --------------------------------------------------------------------------
# gateway plumbing


def _complete(
    gateway: LLMGateway, config: EngineConfig, tag: str, prompt: str
) -> tuple[ChatResponse, tuple[Message, ...]]:
    messages = (Message("user", prompt),)
    request = ChatRequest(
        model_id=config.provider.model_id,
        messages=messages,
        temperature=config.temperature_for(tag),
        max_tokens=config.max_tokens,
        request_tag=tag,
    )
    response = gateway.complete_chat(request)
    if response.finish_reason is not FinishReason.COMPLETE:
        raise IncompleteResponse(tag, response.finish_reason.value)
    return response, messages


def run_chain(
    gateway: LLMGateway,
    config: EngineConfig,
    tag: str,
    prompt: str,
    parse: Callable[[str], T],
) -> T:
    """One chain invocation with a single automatic repair retry."""
    response, messages = _complete(gateway, config, tag, prompt)
    try:
        return parse(response.content)
    except ParseFailure as err:
        repair = messages + (
            Message("assistant", response.content),
            Message(
                "user",
                f"Your previous reply could not be used: {err}. "
                "Reply again using exactly the required format and nothing else.",
            ),
        )
        request = ChatRequest(
            model_id=config.provider.model_id,
            messages=repair,
            temperature=config.temperature_for(tag),
            max_tokens=config.max_tokens,
            request_tag=tag,
        )
        retry = gateway.complete_chat(request)
        if retry.finish_reason is not FinishReason.COMPLETE:
            raise IncompleteResponse(tag, retry.finish_reason.value)
        return parse(retry.content)


# --------------------------------------------------------------------------
# structured-text parsing helpers

_FENCE = re.compile(r"^```[a-zA-Z]*\s*$")
_KV_LINE = re.compile(r"^([A-Za-z_][A-Za-z0-9_-]*)\s*:\s*(.*)$")


def strip_fences(text: str) -> str:
    lines = [line for line in text.strip().splitlines() if not _FENCE.match(line)]
    return "\n".join(lines).strip()


def parse_kv_lines(text: str, source: str) -> list[tuple[str, str]]:
    """Parse ``key: value`` lines, rejecting anything else (totality)."""
    pairs: list[tuple[str, str]] = []
    for line in strip_fences(text).splitlines():
        if not line.strip():
            continue
        match = _KV_LINE.match(line.strip())
        if not match:
            raise ParseFailure(source, f"line is not 'key: value': {line.strip()!r}")
        pairs.append((match.group(1), match.group(2).strip()))
    if not pairs:
        raise ParseFailure(source, "reply contained no 'key: value' lines")
    return pairs


def parse_blocks(
    text: str, source: str, required: Sequence[str]
) -> list[dict[str, str]]:
    """Parse blank-line-separated blocks of ``key: value`` lines."""
    blocks: list[dict[str, str]] = []
    for chunk in re.split(r"\n\s*\n", strip_fences(text)):
        if not chunk.strip():
            continue
        block: dict[str, str] = {}
        for line in chunk.splitlines():
            if not line.strip():
                continue
            match = _KV_LINE.match(line.strip())
            if not match:
                raise ParseFailure(source, f"line is not 'key: value': {line.strip()!r}")
            key, value = match.group(1), match.group(2).strip()
            if key in block:
                raise ParseFailure(source, f"duplicate key {key!r} within one block")
            block[key] = value
        unknown = set(block) - set(required)
        if unknown:
            raise ParseFailure(source, f"unknown keys {sorted(unknown)} in block")
        missing = [k for k in required if k not in block]
        if missing:
            raise ParseFailure(source, f"block is missing keys {missing}")
        blocks.append(block)
    return blocks


def _parse_category(raw: str, source: str) -> Category:
    try:
        return Category(raw.strip())
    except ValueError:
        raise ParseFailure(
            source,
            f"unknown category {raw.strip()!r}; expected one of "
            f"{[c.value for c in Category]}",
        ) from None


# --------------------------------------------------------------------------
# chain operations


def extract_keypoints(
    gateway: LLMGateway, config: EngineConfig, instruction_text: str
) -> list[KeyPoint]:
    """Pull categorized, document-anchored keypoints out of an instruction."""
    if not instruction_text.strip():
        raise EmptyInstruction("discharge instruction text is empty")

    prompt = render_template(
        "keypoint_chain",
        {"instruction": instruction_text, "max_keypoints": str(config.max_keypoints)},
    )

    def parse(reply: str) -> list[KeyPoint]:
        body = strip_fences(reply)
        if body.lower().startswith("no-keypoints:"):
            return []
        blocks = parse_blocks(body, TAG_KEYPOINTS, required=("category", "text", "evidence"))
        if not blocks:
            raise ParseFailure(TAG_KEYPOINTS, "reply contained no keypoint blocks")
        keypoints: list[KeyPoint] = []
        for i, block in enumerate(blocks[: config.max_keypoints], start=1):
            category = _parse_category(block["category"], TAG_KEYPOINTS)
            span = find_normalized(instruction_text, block["evidence"])
            if span is None:
                raise ParseFailure(
                    TAG_KEYPOINTS,
                    f"evidence for keypoint {i} is not a verbatim excerpt of the "
                    f"instruction: {block['evidence']!r}",
                )
            if not block["text"]:
                raise ParseFailure(TAG_KEYPOINTS, f"keypoint {i} has empty text")
            keypoints.append(
                KeyPoint(id=f"kp{i}", category=category, text=block["text"], evidence_span=span)
            )
        return keypoints

    return run_chain(gateway, config, TAG_KEYPOINTS, prompt, parse)


def format_keypoints(keypoints: Sequence[KeyPoint], instruction_text: str) -> str:
    lines = []
    for kp in keypoints:
        start, end = kp.evidence_span
        excerpt = instruction_text[start:end]
        lines.append(f"- id: {kp.id} | category: {kp.category.value} | fact: {kp.text} | evidence: {excerpt}")
    return "\n".join(lines)


def generate_questions(
    gateway: LLMGateway,
    config: EngineConfig,
    instruction_text: str,
    keypoints: Sequence[KeyPoint],
) -> list[Question]:
    """Write one unverified question per keypoint, category inherited."""
    if not keypoints:
        raise ValueError("generate_questions requires at least one keypoint")
    by_id = {kp.id: kp for kp in keypoints}
    prompt = render_template(
        "question_chain",
        {
            "instruction": instruction_text,
            "keypoints": format_keypoints(keypoints, instruction_text),
        },
    )

    def parse(reply: str) -> list[Question]:
        body = strip_fences(reply)
        if body.lower().startswith("no-questions:"):
            raise NoQuestions(body.split(":", 1)[1].strip() or "model declined to write questions")
        blocks = parse_blocks(body, TAG_QUESTIONS, required=("keypoint", "question"))
        if not blocks:
            raise NoQuestions("model returned an empty question list")
        questions: list[Question] = []
        for i, block in enumerate(blocks, start=1):
            kp = by_id.get(block["keypoint"])
            if kp is None:
                raise ParseFailure(
                    TAG_QUESTIONS,
                    f"question {i} cites unknown keypoint id {block['keypoint']!r}",
                )
            if not block["question"]:
                raise ParseFailure(TAG_QUESTIONS, f"question {i} has empty text")
            questions.append(
                Question(
                    id=f"q{i}",
                    category=kp.category,
                    text=block["question"],
                    keypoint_id=kp.id,
                )
            )
        return questions

    return run_chain(gateway, config, TAG_QUESTIONS, prompt, parse)


def verify_question(
    gateway: LLMGateway, config: EngineConfig, instruction_text: str, question: Question
) -> Question:
    """Ground or reject a question; never edits its text or category."""
    if question.verified:
        raise ValueError(f"question {question.id} is already verified")

    prompt = render_template(
        "verification_chain",
        {"instruction": instruction_text, "question": question.text},
    )

    def parse(reply: str) -> Question:
        data = dict(parse_kv_lines(reply, TAG_VERIFICATION))
        verdict = data.get("verdict", "").lower()
        if verdict == "verifiable":
            excerpt = data.get("evidence", "")
            if not excerpt:
                raise ParseFailure(TAG_VERIFICATION, "verifiable verdict without an evidence line")
            if find_normalized(instruction_text, excerpt) is None:
                # The model cited text that is not in the document. That is a
                # grounding failure, not a formatting one: reject, don't retry.
                return replace(question, verified=False, rejection_reason=REJECTION_FABRICATED)
            return replace(question, verified=True, answer_evidence=excerpt)
        if verdict == "unverifiable":
            reason = data.get("reason", "")
            if not reason:
                raise ParseFailure(TAG_VERIFICATION, "unverifiable verdict without a reason line")
            return replace(question, verified=False, rejection_reason=reason)
        raise ParseFailure(
            TAG_VERIFICATION, f"verdict must be verifiable or unverifiable, got {verdict!r}"
        )

    return run_chain(gateway, config, TAG_VERIFICATION, prompt, parse)


def generate_hint(
    gateway: LLMGateway,
    config: EngineConfig,
    instruction_text: str,
    question: Question,
    transcript_tail: str,
) -> Hint:
    """A nudge toward the answer that never states the answer itself."""
    if not question.verified:
        raise ValueError(f"cannot hint unverified question {question.id}")
    if not transcript_tail.strip() or "Patient:" not in transcript_tail:
        raise ValueError("transcript tail must contain the question and a patient answer")

    prompt = render_template(
        "hint_chain",
        {
            "instruction": instruction_text,
            "category": question.category.value,
            "question": question.text,
            "evidence": question.answer_evidence,
            "conversation": transcript_tail,
        },
    )

    def parse(reply: str) -> Hint:
        data = dict(parse_kv_lines(reply, TAG_HINT))
        text = data.get("hint", "")
        if not text:
            raise ParseFailure(TAG_HINT, "reply lacks a 'hint:' line")
        if contains_normalized(text, question.answer_evidence):
            raise ParseFailure(
                TAG_HINT, "hint repeats the supporting excerpt verbatim (it must not)"
            )
        return Hint(question_id=question.id, text=text, reveals_answer=False)

    return run_chain(gateway, config, TAG_HINT, prompt, parse)


def generate_summary(
    gateway: LLMGateway,
    config: EngineConfig,
    instruction_text: str,
    conversation: str,
    missed_questions: Sequence[Question],
) -> SessionSummary:
    """End-of-session summary with the full seven-item checklist."""
    missed_ids = [q.id for q in missed_questions]
    if missed_questions:
        missed_lines = "\n".join(
            f"- {q.id}: {q.text} (answer excerpt: {q.answer_evidence})" for q in missed_questions
        )
    else:
        missed_lines = "(none — the patient eventually answered every question)"

    prompt = render_template(
        "summary_chain",
        {
            "instruction": instruction_text,
            "conversation": conversation,
            "missed": missed_lines,
            "max_recap": str(config.max_keypoints),
        },
    )

    def parse(reply: str) -> SessionSummary:
        pairs = parse_kv_lines(reply, TAG_SUMMARY)
        recap: list[tuple[Category, str]] = []
        missed: dict[str, str] = {}
        checklist: dict[str, str] = {}
        for key, value in pairs:
            if key == "recap":
                cat_raw, _, text = value.partition(":")
                category = _parse_category(cat_raw, TAG_SUMMARY)
                if not text.strip():
                    raise ParseFailure(TAG_SUMMARY, f"recap line for {cat_raw!r} has no text")
                recap.append((category, text.strip()))
            elif key == "missed":
                qid, _, text = value.partition(":")
                qid = qid.strip()
                if qid not in missed_ids:
                    raise ParseFailure(
                        TAG_SUMMARY, f"missed line names {qid!r}, which was not missed"
                    )
                if qid in missed:
                    raise ParseFailure(TAG_SUMMARY, f"duplicate missed line for {qid}")
                if not text.strip():
                    raise ParseFailure(TAG_SUMMARY, f"missed line for {qid} has no explanation")
                missed[qid] = text.strip()
            elif key in CHECKLIST_KEYS:
                if not value:
                    raise ParseFailure(TAG_SUMMARY, f"checklist line {key!r} is empty")
                checklist[key] = value
            else:
                raise ParseFailure(TAG_SUMMARY, f"unknown summary line key {key!r}")
        absent = [qid for qid in missed_ids if qid not in missed]
        if absent:
            raise ParseFailure(TAG_SUMMARY, f"summary lacks missed lines for {absent}")
        lacking = [k for k in CHECKLIST_KEYS if k not in checklist]
        if lacking:
            raise ParseFailure(TAG_SUMMARY, f"summary lacks checklist lines for {lacking}")
        ordered_missed = tuple((qid, missed[qid]) for qid in missed_ids)
        return SessionSummary(
            keypoint_recap=tuple(recap),
            missed_points=ordered_missed,
            checklist_answers=checklist,
        )

    return run_chain(gateway, config, TAG_SUMMARY, prompt, parse)
