"""Evaluation harness: LLM-as-judge scoring plus mechanical audits.

The judge compares two transcripts of the same instruction and emits one
dictionary of 0–5 scores across four perspectives (Question, Agent, Response,
Summary).  The printed schema spells Agent/Rationality as ``Correctness`` and
CoverRate as ``Coverrate``; the parser canonicalizes both.  Rubric arithmetic
is deliberately boring: a metric score is 5 minus one point per violation,
floored at zero.

Win rates are computed with exact rational arithmetic (:class:`~fractions.Fraction`)
so the rates of a two-model report set always sum to 1 exactly, ties split
0.5/0.5.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from enum import Enum
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .agent import SessionState, Speaker, Turn, TurnKind
from .chains import CHECKLIST_KEYS, KeyPoint, SessionSummary, run_chain
from .config import TAG_JUDGE, EngineConfig, QualityThresholds
from .errors import EmptyReports, MissingPerspective, NoScores, ParseFailure
from .gateway import LLMGateway
from .templating import render_template
from .textnorm import contains_normalized, normalize_ws

JUDGE_LABELS = ("EHRTutor", "GPT4")

_TIE_WORDS = frozenset({"tie", "tied", "draw", "equal", "none", "both", "neither"})


class Perspective(str, Enum):
    QUESTION = "Question"
    AGENT = "Agent"
    RESPONSE = "Response"
    SUMMARY = "Summary"


class Metric(str, Enum):
    COVER_RATE = "CoverRate"
    RELEVANCE = "Relevance"
    FLUENT = "Fluent"
    RATIONALITY = "Rationality"
    SUFFICIENT = "Sufficient"
    FACTUALITY = "Factuality"


#: the eight valid (perspective, metric) slots.
METRIC_SLOTS: dict[Perspective, tuple[Metric, ...]] = {
    Perspective.QUESTION: (Metric.COVER_RATE, Metric.RELEVANCE, Metric.FLUENT),
    Perspective.AGENT: (Metric.RATIONALITY,),
    Perspective.RESPONSE: (Metric.RELEVANCE, Metric.SUFFICIENT, Metric.FACTUALITY),
    Perspective.SUMMARY: (Metric.COVER_RATE,),
}

# Judge output spellings -> canonical metric, per perspective.
_METRIC_ALIASES: dict[Perspective, dict[str, Metric]] = {
    Perspective.QUESTION: {
        "coverrate": Metric.COVER_RATE,
        "relevance": Metric.RELEVANCE,
        "fluent": Metric.FLUENT,
    },
    Perspective.AGENT: {
        "correctness": Metric.RATIONALITY,
        "rationality": Metric.RATIONALITY,
    },
    Perspective.RESPONSE: {
        "relevance": Metric.RELEVANCE,
        "sufficient": Metric.SUFFICIENT,
        "factuality": Metric.FACTUALITY,
    },
    Perspective.SUMMARY: {"coverrate": Metric.COVER_RATE},
}

# Canonical metric -> judge-schema spelling (for serialization).
_METRIC_PRINT: dict[tuple[Perspective, Metric], str] = {
    (Perspective.QUESTION, Metric.COVER_RATE): "Coverrate",
    (Perspective.QUESTION, Metric.RELEVANCE): "Relevance",
    (Perspective.QUESTION, Metric.FLUENT): "Fluent",
    (Perspective.AGENT, Metric.RATIONALITY): "Correctness",
    (Perspective.RESPONSE, Metric.RELEVANCE): "Relevance",
    (Perspective.RESPONSE, Metric.SUFFICIENT): "Sufficient",
    (Perspective.RESPONSE, Metric.FACTUALITY): "Factuality",
    (Perspective.SUMMARY, Metric.COVER_RATE): "Coverrate",
}


class QualityLevel(str, Enum):
    EXCELLENT = "excellent"
    GOOD = "good"
    FAIR = "fair"
    POOR = "poor"


@dataclass(frozen=True)
class MetricScore:
    perspective: Perspective
    metric: Metric
    value: float

    def __post_init__(self) -> None:
        if self.metric not in METRIC_SLOTS[self.perspective]:
            raise ValueError(
                f"metric {self.metric.value} is not scored under {self.perspective.value}"
            )
        if not 0.0 <= self.value <= 5.0:
            raise ValueError(f"score must be in [0, 5], got {self.value}")


@dataclass(frozen=True)
class JudgeReport:
    """One judged comparison.  ``best_model=None`` records a declared tie."""

    best_model: str | None
    per_model: Mapping[str, Mapping[Perspective, Mapping[Metric, float]]]

    def __post_init__(self) -> None:
        if self.best_model is not None and self.best_model not in self.per_model:
            raise ValueError(f"best_model {self.best_model!r} is not a judged model")
        for label, perspectives in self.per_model.items():
            for perspective, metrics in METRIC_SLOTS.items():
                got = perspectives.get(perspective)
                if got is None:
                    raise ValueError(f"{label} lacks the {perspective.value} perspective")
                for metric in metrics:
                    if metric not in got:
                        raise ValueError(
                            f"{label}.{perspective.value} lacks metric {metric.value}"
                        )

    def scores_for(self, label: str) -> list[MetricScore]:
        perspectives = self.per_model[label]
        return [
            MetricScore(perspective, metric, perspectives[perspective][metric])
            for perspective, metrics in METRIC_SLOTS.items()
            for metric in metrics
        ]


def score_metric(violations: int) -> int:
    """Rubric: start from 5, deduct one per violation, floor at zero."""
    if violations < 0:
        raise ValueError("violation count cannot be negative")
    return max(0, 5 - violations)


def round_half_up(value: float, places: int = 2) -> float:
    """Decimal half-up rounding for human-facing report numbers."""
    quantum = Decimal(1).scaleb(-places)
    return float(Decimal(repr(value)).quantize(quantum, rounding=ROUND_HALF_UP))


def average_perspective(scores: Iterable[MetricScore], perspective: Perspective) -> float:
    """Unrounded arithmetic mean of one perspective's scores."""
    values = [s.value for s in scores if s.perspective is perspective]
    if not values:
        raise NoScores(f"no scores for perspective {perspective.value}")
    return sum(values) / len(values)


def classify_quality(
    averages: Mapping[Perspective, float],
    thresholds: QualityThresholds = QualityThresholds(),
) -> QualityLevel:
    """Quality ladder keyed on the weakest perspective average.

    The cut points are a convention of this implementation (see README), kept
    monotone: raising any average can never lower the level.
    """
    missing = [p.value for p in Perspective if p not in averages]
    if missing:
        raise MissingPerspective(f"missing perspective averages: {missing}")
    worst = min(averages[p] for p in Perspective)
    if worst >= thresholds.excellent:
        return QualityLevel.EXCELLENT
    if worst >= thresholds.good:
        return QualityLevel.GOOD
    if worst >= thresholds.fair:
        return QualityLevel.FAIR
    return QualityLevel.POOR


def compute_win_rate(reports: Sequence[JudgeReport], model_label: str) -> Fraction:
    """Fraction of reports naming ``model_label`` best; ties count half."""
    if not reports:
        raise EmptyReports("cannot compute a win rate over zero reports")
    wins = sum(1 for r in reports if r.best_model == model_label)
    ties = sum(1 for r in reports if r.best_model is None)
    return Fraction(2 * wins + ties, 2 * len(reports))


# --------------------------------------------------------------------------
# judge output parsing


def _find_offset(text: str, token: str) -> int:
    at = text.find(token)
    return at if at >= 0 else 0


def _coerce_score(raw: object, text: str, path: str) -> float:
    if isinstance(raw, bool):
        raise ParseFailure(TAG_JUDGE, f"{path}: boolean is not a score", _find_offset(text, path))
    if isinstance(raw, (int, float)):
        value = float(raw)
    elif isinstance(raw, str):
        try:
            value = float(raw.strip())
        except ValueError:
            raise ParseFailure(
                TAG_JUDGE,
                f"{path}: score {raw!r} is not numeric",
                _find_offset(text, raw),
            ) from None
    else:
        raise ParseFailure(
            TAG_JUDGE, f"{path}: score has type {type(raw).__name__}", _find_offset(text, path)
        )
    if not 0.0 <= value <= 5.0:
        raise ParseFailure(
            TAG_JUDGE, f"{path}: score {value} outside [0, 5]", _find_offset(text, str(raw))
        )
    return value


def parse_judge_report(text: str) -> JudgeReport:
    """Parse a judge reply into a :class:`JudgeReport`.

    Tolerates prose around the outermost braces and scores written either as
    bare numbers or quoted strings; everything else is strict and fails with a
    byte offset.
    """
    start = text.find("{")
    end = text.rfind("}")
    if start < 0 or end <= start:
        raise ParseFailure(TAG_JUDGE, "no JSON object found in reply", 0)
    try:
        data = json.loads(text[start : end + 1])
    except json.JSONDecodeError as err:
        raise ParseFailure(TAG_JUDGE, f"bad JSON: {err.msg}", start + err.pos) from None
    if not isinstance(data, dict):
        raise ParseFailure(TAG_JUDGE, "top-level JSON value is not an object", start)

    best_raw: str | None = None
    per_model: dict[str, dict[Perspective, dict[Metric, float]]] = {}
    for key, value in data.items():
        if key.strip().lower() in ("best model", "best_model"):
            if not isinstance(value, str):
                raise ParseFailure(
                    TAG_JUDGE, "'best model' must be a string", _find_offset(text, key)
                )
            best_raw = value.strip()
            continue
        if not isinstance(value, dict):
            raise ParseFailure(
                TAG_JUDGE,
                f"model entry {key!r} is not an object",
                _find_offset(text, key),
            )
        label = key.strip()
        perspectives: dict[Perspective, dict[Metric, float]] = {}
        lowered = {str(k).strip().lower(): (k, v) for k, v in value.items()}
        for perspective in Perspective:
            found = lowered.get(perspective.value.lower())
            if found is None:
                raise ParseFailure(
                    TAG_JUDGE,
                    f"missing {label}.{perspective.value}",
                    _find_offset(text, label),
                )
            _, metrics_raw = found
            if not isinstance(metrics_raw, dict):
                raise ParseFailure(
                    TAG_JUDGE,
                    f"{label}.{perspective.value} is not an object",
                    _find_offset(text, perspective.value),
                )
            aliases = _METRIC_ALIASES[perspective]
            metrics: dict[Metric, float] = {}
            for metric_key, raw_score in metrics_raw.items():
                canonical = aliases.get(str(metric_key).strip().lower())
                if canonical is None:
                    raise ParseFailure(
                        TAG_JUDGE,
                        f"unknown metric {metric_key!r} under {label}.{perspective.value}",
                        _find_offset(text, str(metric_key)),
                    )
                path = f"{label}.{perspective.value}.{metric_key}"
                metrics[canonical] = _coerce_score(raw_score, text, path)
            lacking = [m.value for m in METRIC_SLOTS[perspective] if m not in metrics]
            if lacking:
                raise ParseFailure(
                    TAG_JUDGE,
                    f"missing {label}.{perspective.value} metrics: {lacking}",
                    _find_offset(text, label),
                )
            perspectives[perspective] = metrics
        per_model[label] = perspectives

    if not per_model:
        raise ParseFailure(TAG_JUDGE, "reply judged no models", start)
    if best_raw is None:
        raise ParseFailure(TAG_JUDGE, "reply lacks a 'best model' entry", start)

    best: str | None
    if best_raw.lower() in _TIE_WORDS:
        best = None
    else:
        match = [label for label in per_model if label.lower() == best_raw.lower()]
        if not match:
            raise ParseFailure(
                TAG_JUDGE,
                f"'best model' names {best_raw!r}, which was not judged",
                _find_offset(text, best_raw),
            )
        best = match[0]
    return JudgeReport(best_model=best, per_model=per_model)


def serialize_judge_report(report: JudgeReport) -> str:
    """Render a report back into the judge-output dictionary schema."""
    out: dict[str, object] = {
        "best model": report.best_model if report.best_model is not None else "tie"
    }
    for label, perspectives in report.per_model.items():
        entry: dict[str, dict[str, float]] = {}
        for perspective, metrics in METRIC_SLOTS.items():
            entry[perspective.value] = {
                _METRIC_PRINT[(perspective, metric)]: perspectives[perspective][metric]
                for metric in metrics
            }
        out[label] = entry
    return json.dumps(out, ensure_ascii=False)


def judge_pair(
    gateway: LLMGateway,
    config: EngineConfig,
    instruction_text: str,
    transcript_a: str,
    transcript_b: str,
    labels: tuple[str, str] = JUDGE_LABELS,
) -> JudgeReport:
    """Judge two transcripts of the same instruction against each other.

    The comparison prompt carries two fixed slots, so ``labels`` must be a
    permutation of ``("EHRTutor", "GPT4")`` assigning transcripts to slots.
    """
    if sorted(labels) != sorted(JUDGE_LABELS):
        raise ValueError(f"labels must be a permutation of {JUDGE_LABELS}, got {labels}")
    by_label = {labels[0]: transcript_a, labels[1]: transcript_b}
    prompt = render_template(
        "judge",
        {
            "instruction": instruction_text,
            "EHRTutor": by_label["EHRTutor"],
            "GPT4": by_label["GPT4"],
        },
    )
    return run_chain(gateway, config, TAG_JUDGE, prompt, parse_judge_report)


# --------------------------------------------------------------------------
# aggregation over many reports


def aggregate_metric_means(
    reports: Sequence[JudgeReport], label: str
) -> dict[Perspective, dict[Metric, float]]:
    """Per-slot arithmetic means of a model's scores across reports."""
    if not reports:
        raise EmptyReports("cannot aggregate zero reports")
    sums: dict[tuple[Perspective, Metric], float] = {}
    for report in reports:
        for score in report.scores_for(label):
            key = (score.perspective, score.metric)
            sums[key] = sums.get(key, 0.0) + score.value
    n = len(reports)
    means: dict[Perspective, dict[Metric, float]] = {}
    for (perspective, metric), total in sums.items():
        means.setdefault(perspective, {})[metric] = total / n
    return means


def perspective_averages(
    means: Mapping[Perspective, Mapping[Metric, float]]
) -> dict[Perspective, float]:
    return {
        perspective: sum(metrics.values()) / len(metrics)
        for perspective, metrics in means.items()
    }


# --------------------------------------------------------------------------
# mechanical conversation audit


def audit_conversation(
    transcript: Sequence[Turn],
    state: SessionState,
    *,
    keypoints: Sequence[KeyPoint] | None = None,
    summary: SessionSummary | None = None,
) -> dict[Perspective, int]:
    """Count mechanically checkable violations per perspective.

    Checked: repeated questions and premature conversation ends (Agent);
    hints that leak a not-yet-revealed answer verbatim (Response); question
    categories present in the keypoints but never asked (Question); blank or
    missing checklist answers (Summary).  Semantic quality is the judge's job,
    not this auditor's.
    """
    violations = {p: 0 for p in Perspective}

    # Agent: the same question asked twice.
    seen: set[str] = set()
    for turn in transcript:
        if turn.speaker is Speaker.TUTOR and turn.kind is TurnKind.QUESTION:
            key = normalize_ws(turn.text)
            if key in seen:
                violations[Perspective.AGENT] += 1
            seen.add(key)

    # Agent: conversation ended while questions were still open.
    ended = any(
        e.action.kind.value == "EndConversation" for e in state.scratchpad
    ) or any(t.kind is TurnKind.END for t in transcript)
    open_statuses = [
        e.question.id
        for e in state.queue
        if e.status.value not in ("passed", "failed")
    ]
    if ended and open_statuses:
        violations[Perspective.AGENT] += len(open_statuses)

    # Response: a hint that contains a still-hidden answer verbatim.
    reveal_at: dict[str, int] = {}
    evidence_by_question = {
        e.question.id: e.question.answer_evidence for e in state.queue
    }
    for turn in transcript:
        if turn.kind is TurnKind.REVEAL:
            for qid, evidence in evidence_by_question.items():
                if evidence and contains_normalized(turn.text, evidence):
                    reveal_at.setdefault(qid, turn.turn_index)
    for turn in transcript:
        if turn.kind is not TurnKind.HINT:
            continue
        for qid, evidence in evidence_by_question.items():
            if not evidence:
                continue
            revealed = reveal_at.get(qid)
            if revealed is not None and revealed <= turn.turn_index:
                continue
            if contains_normalized(turn.text, evidence):
                violations[Perspective.RESPONSE] += 1

    # Question: keypoint categories never covered by an asked question.
    if keypoints is not None:
        keypoint_categories = {kp.category for kp in keypoints}
        asked_categories = {e.question.category for e in state.queue}
        violations[Perspective.QUESTION] += len(keypoint_categories - asked_categories)

    # Summary: missing or blank checklist answers, one violation per item.
    if summary is not None:
        for key in CHECKLIST_KEYS:
            if not summary.checklist_answers.get(key, "").strip():
                violations[Perspective.SUMMARY] += 1

    return violations
