"""Dialogue records: the on-disk form of a finished tutoring session.

A :class:`DialogueRecord` captures everything a session produced — the verified
and rejected questions, the full transcript, which questions the patient missed,
and the closing summary — plus enough metadata (document id, seed, generator
tag) to reproduce it.  Records serialize to plain JSON dicts; datasets are
newline-delimited JSON, one record per line, each line carrying its own
``schema_version`` so files survive partial appends from different writers.

Unknown top-level JSON keys are preserved through a round-trip: they land in
``extras`` on load and are written back on save.  That lets downstream tools
annotate records without this module having to know about every field.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

from .agent import Speaker, Turn, TurnKind
from .chains import CHECKLIST_KEYS, Category, Question, SessionSummary
from .errors import IoFailure, ParseFailure, SchemaMismatch

RECORD_SCHEMA_VERSION = 1

_KNOWN_KEYS = frozenset(
    {
        "schema_version",
        "record_id",
        "doc_id",
        "model_tag",
        "seed",
        "instruction_text",
        "questions",
        "turns",
        "missed_question_ids",
        "summary",
    }
)


@dataclass
class DialogueRecord:
    """One finished (or baseline) tutoring session, ready for storage."""

    record_id: str
    doc_id: str
    model_tag: str
    seed: int
    instruction_text: str
    questions: tuple[Question, ...]
    turns: tuple[Turn, ...]
    missed_question_ids: tuple[str, ...]
    summary: SessionSummary | None
    extras: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.questions = tuple(self.questions)
        self.turns = tuple(self.turns)
        self.missed_question_ids = tuple(self.missed_question_ids)


def make_record_id(model_tag: str, doc_id: str, seed: int) -> str:
    """Deterministic identity: same generator, document, and seed — same id."""
    return f"{model_tag}:{doc_id}:seed{seed}"


# -- dict conversion ---------------------------------------------------------


def question_to_dict(question: Question) -> dict[str, Any]:
    return {
        "id": question.id,
        "category": question.category.value,
        "text": question.text,
        "keypoint_id": question.keypoint_id,
        "verified": question.verified,
        "answer_evidence": question.answer_evidence,
        "rejection_reason": question.rejection_reason,
    }


def _question_from_dict(data: Mapping[str, Any]) -> Question:
    return Question(
        id=data["id"],
        category=Category(data["category"]),
        text=data["text"],
        keypoint_id=data["keypoint_id"],
        verified=data["verified"],
        answer_evidence=data["answer_evidence"],
        rejection_reason=data["rejection_reason"],
    )


def turn_to_dict(turn: Turn) -> dict[str, Any]:
    return {
        "speaker": turn.speaker.value,
        "text": turn.text,
        "turn_index": turn.turn_index,
        "kind": turn.kind.value,
    }


def _turn_from_dict(data: Mapping[str, Any]) -> Turn:
    return Turn(
        speaker=Speaker(data["speaker"]),
        text=data["text"],
        turn_index=data["turn_index"],
        kind=TurnKind(data["kind"]),
    )


def summary_to_dict(summary: SessionSummary) -> dict[str, Any]:
    return {
        "keypoint_recap": [[category.value, text] for category, text in summary.keypoint_recap],
        "missed_points": [[qid, note] for qid, note in summary.missed_points],
        "checklist_answers": dict(summary.checklist_answers),
    }


def _summary_from_dict(data: Mapping[str, Any]) -> SessionSummary:
    return SessionSummary(
        keypoint_recap=tuple(
            (Category(category), text) for category, text in data["keypoint_recap"]
        ),
        missed_points=tuple((qid, note) for qid, note in data["missed_points"]),
        checklist_answers=dict(data["checklist_answers"]),
    )


def record_to_dict(record: DialogueRecord) -> dict[str, Any]:
    out: dict[str, Any] = {
        "schema_version": RECORD_SCHEMA_VERSION,
        "record_id": record.record_id,
        "doc_id": record.doc_id,
        "model_tag": record.model_tag,
        "seed": record.seed,
        "instruction_text": record.instruction_text,
        "questions": [question_to_dict(q) for q in record.questions],
        "turns": [turn_to_dict(t) for t in record.turns],
        "missed_question_ids": list(record.missed_question_ids),
        "summary": summary_to_dict(record.summary) if record.summary else None,
    }
    for key, value in record.extras.items():
        if key in _KNOWN_KEYS:
            raise ValueError(f"extras key {key!r} collides with a record field")
        out[key] = value
    return out


def record_from_dict(data: Mapping[str, Any]) -> DialogueRecord:
    version = data.get("schema_version")
    if version != RECORD_SCHEMA_VERSION:
        raise SchemaMismatch("<record>", found=version, expected=RECORD_SCHEMA_VERSION)
    try:
        record = DialogueRecord(
            record_id=data["record_id"],
            doc_id=data["doc_id"],
            model_tag=data["model_tag"],
            seed=data["seed"],
            instruction_text=data["instruction_text"],
            questions=tuple(_question_from_dict(q) for q in data["questions"]),
            turns=tuple(_turn_from_dict(t) for t in data["turns"]),
            missed_question_ids=tuple(data["missed_question_ids"]),
            summary=_summary_from_dict(data["summary"]) if data["summary"] else None,
            extras={k: v for k, v in data.items() if k not in _KNOWN_KEYS},
        )
    except KeyError as exc:
        raise ParseFailure("record", f"missing record field {exc.args[0]!r}") from exc
    except ValueError as exc:
        raise ParseFailure("record", str(exc)) from exc
    return record


# -- validation --------------------------------------------------------------


def validate_record(record: DialogueRecord) -> None:
    """Raise ``ValueError`` on the first structural defect found."""
    if not record.record_id:
        raise ValueError("record_id is empty")
    if not record.doc_id:
        raise ValueError("doc_id is empty")
    if not record.instruction_text.strip():
        raise ValueError("instruction_text is empty")
    for index, turn in enumerate(record.turns):
        if turn.turn_index != index:
            raise ValueError(f"turn {index} carries turn_index {turn.turn_index}")
    if record.turns and record.turns[0].speaker is not Speaker.TUTOR:
        raise ValueError("transcript must open with a tutor turn")
    question_ids = {q.id for q in record.questions}
    if len(question_ids) != len(record.questions):
        raise ValueError("duplicate question ids")
    for qid in record.missed_question_ids:
        if qid not in question_ids:
            raise ValueError(f"missed question {qid!r} is not in the question list")
    if record.summary is not None:
        if set(record.summary.checklist_answers) != set(CHECKLIST_KEYS):
            raise ValueError("summary checklist keys are wrong")
        summary_missed = [qid for qid, _ in record.summary.missed_points]
        if summary_missed != list(record.missed_question_ids):
            raise ValueError("summary missed points disagree with missed_question_ids")


# -- file IO -----------------------------------------------------------------


def save_record(record: DialogueRecord, path: str) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(record_to_dict(record), handle, ensure_ascii=False, indent=2, sort_keys=True)
        handle.write("\n")


def load_record(path: str) -> DialogueRecord:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            text = handle.read()
    except OSError as exc:
        raise IoFailure(path, str(exc)) from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise IoFailure(path, f"invalid JSON: {exc.msg}", offset=exc.pos) from exc
    if not isinstance(data, dict):
        raise IoFailure(path, "record file does not hold a JSON object")
    return record_from_dict(data)


def write_dataset(records: Iterable[DialogueRecord], path: str) -> int:
    """Write records as NDJSON. Returns the number written."""
    count = 0
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(dumps_record_line(record))
            handle.write("\n")
            count += 1
    return count


def dumps_record_line(record: DialogueRecord) -> str:
    """One record as a single compact, key-sorted JSON line (no newline)."""
    return json.dumps(
        record_to_dict(record), ensure_ascii=False, sort_keys=True, separators=(",", ":")
    )


def read_dataset(path: str) -> list[DialogueRecord]:
    try:
        with open(path, "rb") as handle:
            raw = handle.read()
    except OSError as exc:
        raise IoFailure(path, str(exc)) from exc
    records: list[DialogueRecord] = []
    offset = 0
    for line in raw.split(b"\n"):
        if line.strip():
            try:
                data = json.loads(line.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError) as exc:
                raise IoFailure(path, f"bad dataset line: {exc}", offset=offset) from exc
            if not isinstance(data, dict):
                raise IoFailure(path, "dataset line is not a JSON object", offset=offset)
            records.append(record_from_dict(data))
        offset += len(line) + 1
    return records
