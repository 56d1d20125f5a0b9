"""Small builders shared across test modules."""

from __future__ import annotations

from ehrtutor.agent import Speaker, Turn, TurnKind
from ehrtutor.chains import CHECKLIST_KEYS, Category, Question, SessionSummary

# Evidence sentences deliberately carry 4+ distinctive content words so the
# offline grader classifies a verbatim paraphrase as correct (its threshold is
# three shared content words).
EVIDENCE = {
    "q1": "Take the blue pressure tablet every morning with breakfast and plenty of water.",
    "q2": "Call the cardiology clinic on Monday to book your echo scan appointment.",
    "q3": "Watch for sudden ankle swelling, severe dizziness, or chest tightness and report them.",
}

QUESTION_TEXT = {
    "q1": "When are you supposed to take the blue pressure tablet?",
    "q2": "Who do you need to call on Monday, and why?",
    "q3": "What warning signs should you report?",
}

CATEGORIES = {
    "q1": Category.MEDICATION,
    "q2": Category.FOLLOW_UP,
    "q3": Category.COMPLICATIONS_PROGRESS,
}


def instruction_for(qids) -> str:
    return " ".join(EVIDENCE[q] for q in qids)


def verified_question(qid: str) -> Question:
    return Question(
        id=qid,
        category=CATEGORIES[qid],
        text=QUESTION_TEXT[qid],
        keypoint_id=f"kp-{qid}",
        verified=True,
        answer_evidence=EVIDENCE[qid],
    )


def rejected_question(qid: str = "q9", reason: str = "not graded by the text") -> Question:
    return Question(
        id=qid,
        category=Category.MEDICATION,
        text="Can you tell me what you're allergic to?",
        keypoint_id=f"kp-{qid}",
        verified=False,
        rejection_reason=reason,
    )


def full_checklist(**overrides: str) -> dict[str, str]:
    answers = {key: "covered during the session" for key in CHECKLIST_KEYS}
    answers.update(overrides)
    return answers


def simple_summary(missed=()) -> SessionSummary:
    return SessionSummary(
        keypoint_recap=((Category.MEDICATION, "take the tablet each morning"),),
        missed_points=tuple((qid, "needs another read") for qid in missed),
        checklist_answers=full_checklist(),
    )


def turns_from(script) -> tuple[Turn, ...]:
    """Build a transcript from (speaker, kind, text) triples."""
    return tuple(
        Turn(speaker=speaker, text=text, turn_index=i, kind=kind)
        for i, (speaker, kind, text) in enumerate(script)
    )


def tutor(kind: TurnKind, text: str):
    return (Speaker.TUTOR, kind, text)


def patient(text: str):
    return (Speaker.PATIENT, TurnKind.ANSWER, text)
