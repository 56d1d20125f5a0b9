"""Deterministic rule-based provider.

A stand-in model for offline use: cassette recording, demos, and large
randomized test fleets.  Every reply is a pure function of the request —
string rules plus the pinned hash generator, no wall clock, no platform RNG —
so recorded cassettes replay forever and test fleets are reproducible.

It is deliberately unglamorous: keyword lexicons pick keypoint sentences,
questions come from per-category templates, verification scores sentence
overlap, and the patient paraphrases or contradicts the cited excerpt.
"""

from __future__ import annotations

import json
import re

from . import seeding
from .gateway import ChatRequest, FinishReason
from .textnorm import normalize_ws

_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+")

# Category lexicons. Multi-word phrases count double when scoring; ties go to
# the earlier category in _CATEGORY_ORDER.
_LEXICONS: dict[str, re.Pattern[str]] = {
    "complications_progress": re.compile(
        r"\b(call your doctor|call your surgeon|emergency room|emergency|911|warning"
        r"|signs?|symptoms?|fever|chills|vomiting|bleeding|worsening|worse)\b",
        re.IGNORECASE,
    ),
    "test": re.compile(
        r"\b(blood test|lab testing|peak flow|blood sugar|mri|x-ray|ct|ultrasound"
        r"|scan|testing|tests?|procedure|catheterization|inr)\b",
        re.IGNORECASE,
    ),
    "medication": re.compile(
        r"\b(mg|milligrams?|doses?|tablets?|pills?|medications?|medicines?|insulin"
        r"|units|inhaler|puffs|warfarin|allergy|allergic)\b",
        re.IGNORECASE,
    ),
    "follow_up": re.compile(
        r"\b(follow-up|follow up|appointments?|scheduled|clinic)\b", re.IGNORECASE
    ),
}
_CATEGORY_ORDER = ("complications_progress", "test", "medication", "follow_up")
_PER_CATEGORY_CAP = 2

_STOPWORDS = frozenset(
    """a an and are as at be been before by can could did do does for from had has have
    how i if in is it its me my not of off on or our should so some that the their them
    they this to was we were what when which who why will with would you your please tell
    about any also only just go get""".split()
)

_DOSE = re.compile(
    r"((?:[A-Za-z][A-Za-z-]*\s+)?[A-Za-z][A-Za-z-]{2,})\s+[\d.]+\s*(?:mg|units)\b",
    re.IGNORECASE,
)
_DRUG_NOISE = frozenset({"take", "on", "one", "the", "your", "a", "an", "this", "of"})
_INHALER = re.compile(r"([A-Za-z-]{3,})\s+(?:rescue\s+)?inhaler", re.IGNORECASE)
_SUCH_AS = re.compile(r"such as (.*?)(?:, as |\.\s*$|\.$|$)", re.IGNORECASE | re.DOTALL)
_FREQ_WORDS = ("daily", "weekly", "every", "hours", "times", "bedtime")
_CHANGE_WORDS = ("change", "changed", "increased", "decreased", "switched", "instead")

_WRONG_ANSWERS = (
    "I don't think I need to do anything special about that.",
    "I'm allergic to peanuts.",
    "I only remember headache, weakness.",
    "I believe I can stop everything once I feel better.",
    "I think it was once a week, whenever I remember.",
    "I figured I could go back to everything as usual right away.",
)

_IRRELEVANT_ANSWERS = (
    "My grandson is visiting this weekend.",
    "The hospital food was surprisingly good.",
    "I've been meaning to fix the fence in my yard.",
    "The weather has been lovely lately.",
)

_HINT_TOPICS = {
    "test": "the tests you had and what they were for",
    "medication": "your medications — how much and how often",
    "complications_progress": "the warning signs that mean you should call for help",
    "follow_up": "your upcoming appointments",
}

_BASELINE_QUESTIONS = (
    "Can you tell me how you will take your medications at home?",
    "What warning signs would make you call the doctor?",
    "When is your follow-up visit?",
    "What should you be doing for activity and diet this week?",
    "Is there anything in the instructions that is unclear to you?",
)


def _content_words(text: str) -> set[str]:
    tokens = re.findall(r"[a-z0-9][a-z0-9'-]*", text.lower())
    return {t for t in tokens if len(t) >= 3 and t not in _STOPWORDS}


def _section(prompt: str, start: str, end: str) -> str:
    try:
        after = prompt.split(start, 1)[1]
        return after.split(end, 1)[0].strip()
    except IndexError:
        return ""


def _line_value(prompt: str, label: str) -> str:
    for line in prompt.splitlines():
        if line.startswith(label):
            return line[len(label):].strip()
    return ""


def _document(prompt: str) -> str:
    return _section(prompt, "=== DISCHARGE INSTRUCTION ===", "=== END INSTRUCTION ===")


def _sentences(document: str) -> list[str]:
    flat = normalize_ws(document)
    return [s.strip() for s in _SENTENCE_SPLIT.split(flat) if s.strip()]


def _categorize(sentence: str) -> str | None:
    best: str | None = None
    best_score = 0
    for category in _CATEGORY_ORDER:
        score = 0
        for match in _LEXICONS[category].findall(sentence):
            score += 2 if " " in match else 1
        if score > best_score:
            best, best_score = category, score
    return best


def _keypoint_sentences(document: str, cap: int) -> list[tuple[str, str]]:
    """(category, sentence) pairs, at most two per category, ``cap`` overall."""
    picked: list[tuple[str, str]] = []
    per_category: dict[str, int] = {}
    for sentence in _sentences(document):
        category = _categorize(sentence)
        if category is None:
            continue
        if per_category.get(category, 0) >= _PER_CATEGORY_CAP:
            continue
        per_category[category] = per_category.get(category, 0) + 1
        picked.append((category, sentence))
        if len(picked) >= cap:
            break
    return picked


class StubProvider:
    """Offline provider implementing every request tag the engine uses."""

    def complete(self, request: ChatRequest) -> tuple[str, FinishReason, int]:
        prompt = request.messages[0].content
        handler = getattr(self, f"_handle_{request.request_tag}", None)
        if handler is None:
            raise ValueError(f"stub provider has no handler for tag {request.request_tag!r}")
        reply = handler(prompt, request)
        return reply, FinishReason.COMPLETE, 0

    # -- chains ------------------------------------------------------------

    def _handle_keypoint_chain(self, prompt: str, request: ChatRequest) -> str:
        document = _document(prompt)
        cap_match = re.search(r"Extract at most (\d+) key points", prompt)
        cap = int(cap_match.group(1)) if cap_match else 12
        picked = _keypoint_sentences(document, cap)
        if not picked:
            return "no-keypoints: nothing in the instruction fits the four categories"
        blocks = [
            f"category: {category}\ntext: {sentence}\nevidence: {sentence}"
            for category, sentence in picked
        ]
        return "\n\n".join(blocks)

    def _question_for(self, category: str, evidence: str) -> str:
        if category == "test":
            match = _LEXICONS["test"].search(evidence)
            subject = evidence[match.start() : match.end()] if match else "test"
            return f"What is the {subject} for?"
        if category == "medication":
            lowered = evidence.lower()
            has_change = any(w in lowered for w in _CHANGE_WORDS)
            dose = _DOSE.search(evidence)
            inhaler = _INHALER.search(evidence)
            if "allerg" in lowered and not has_change and not dose and not inhaler:
                # A bare allergy mention: the only askable question is the one
                # the instruction cannot grade.
                return "Can you tell me what you're allergic to?"
            if has_change:
                return "Which medications have had a change in how you take them?"
            if dose:
                words = [w for w in dose.group(1).lower().split() if w not in _DRUG_NOISE]
                drug = " ".join(words) or "medicine"
            elif inhaler:
                drug = inhaler.group(1).lower()
            else:
                drug = "medicine"
            return f"What is the frequency of taking this {drug}?"
        if category == "complications_progress":
            if evidence.count(",") >= 4:
                listed = _SUCH_AS.search(evidence)
                if listed:
                    items = [i.strip() for i in re.split(r",| or ", listed.group(1)) if i.strip()]
                    if len(items) >= 2:
                        return (
                            f"Your instructions list several warning signs, such as "
                            f"{items[0]} and {items[1]}. What are some of the others "
                            f"you should watch for?"
                        )
            return "What signs should you be alert to regarding your condition?"
        return "When is your next follow-up appointment, and with which clinic?"

    def _handle_question_chain(self, prompt: str, request: ChatRequest) -> str:
        section = _section(prompt, "Key points:\n", "\n\nRules:")
        blocks: list[str] = []
        seen: set[str] = set()
        for line in section.splitlines():
            line = line.strip().lstrip("- ")
            if not line:
                continue
            fields: dict[str, str] = {}
            for part in line.split(" | "):
                key, _, value = part.partition(":")
                fields[key.strip()] = value.strip()
            question = self._question_for(fields.get("category", ""), fields.get("evidence", ""))
            if question in seen:
                # Two keypoints collapsing onto one wording would make the
                # tutor repeat itself mid-session; keep the first.
                continue
            seen.add(question)
            blocks.append(f"keypoint: {fields.get('id', '')}\nquestion: {question}")
        if not blocks:
            return "no-questions: no key points were provided"
        return "\n\n".join(blocks)

    def _handle_verification_chain(self, prompt: str, request: ChatRequest) -> str:
        question = _line_value(prompt, "Question: ")
        lowered = question.lower()
        if "allergic to" in lowered or "allergies do you have" in lowered:
            return (
                "verdict: unverifiable\n"
                "reason: The instruction mentions one allergy but cannot bound the "
                "patient's complete allergy history."
            )
        if "family history" in lowered or "habit" in lowered:
            return (
                "verdict: unverifiable\n"
                "reason: The answer depends on personal background the instruction "
                "does not contain."
            )
        document = _document(prompt)
        q_words = _content_words(question)
        wants_frequency = "frequency" in lowered or lowered.startswith("when")
        wants_signs = "signs" in lowered or "alert" in lowered or "watch" in lowered
        wants_change = "change" in lowered
        best_sentence, best_score = "", 0.0
        for sentence in _sentences(document):
            s_lower = sentence.lower()
            score = float(len(q_words & _content_words(sentence)))
            if wants_frequency and any(w in s_lower for w in _FREQ_WORDS):
                score += 0.5
            if wants_signs and (
                "call your" in s_lower or "emergency" in s_lower or "signs" in s_lower
            ):
                score += 1.0
            if (
                wants_change
                and any(w in s_lower for w in _CHANGE_WORDS)
                and _LEXICONS["medication"].search(sentence)
            ):
                score += 1.5
            if score > best_score:
                best_sentence, best_score = sentence, score
        if best_score < 1.0:
            return (
                "verdict: unverifiable\n"
                "reason: The instruction does not contain enough information to grade "
                "an answer to this question."
            )
        return f"verdict: verifiable\nevidence: {best_sentence}"

    def _handle_hint_chain(self, prompt: str, request: ChatRequest) -> str:
        header = re.search(r"^Question \(([a-z_]+)\): (.+)$", prompt, re.MULTILINE)
        category = header.group(1) if header else "medication"
        evidence = _line_value(prompt, "The correct answer is supported by this excerpt: ")
        opener = " ".join(evidence.split()[:3])
        topic = _HINT_TOPICS.get(category, "your discharge instructions")
        return (
            f"hint: Take another look at the part of your instructions about {topic}. "
            f'That part begins "{opener}...".'
        )

    def _handle_summary_chain(self, prompt: str, request: ChatRequest) -> str:
        document = _document(prompt)
        sentences = _sentences(document)
        lines: list[str] = []
        for category, sentence in _keypoint_sentences(document, 12):
            lines.append(f"recap: {category}: {sentence}")

        missed_block = _section(prompt, "Questions the patient missed:\n", "\n\nWrite the")
        missed_questions: list[tuple[str, str]] = []
        for line in missed_block.splitlines():
            match = re.match(r"- (q\d+): (.*?) \(answer excerpt: (.*)\)$", line.strip())
            if match:
                missed_questions.append((match.group(1), match.group(3)))
        for qid, excerpt in missed_questions:
            lines.append(f"missed: {qid}: Re-read this part of your instructions: {excerpt}")

        def first_matching(*needles: str) -> str:
            for sentence in sentences:
                lowered = sentence.lower()
                if any(n in lowered for n in needles):
                    return sentence
            return "not applicable"

        lines.append(f"medical_problem: {first_matching('admitted', 'treated', 'seen for', 'recovering', 'you had', 'you delivered')}")
        lines.append(f"medical_allergies: {first_matching('allerg')}")
        lines.append(f"good_exercises: {first_matching('walk', 'exercise', 'activity is fine', 'physical therapy')}")
        lines.append(f"diet: {first_matching('eat', 'diet', 'meals', 'foods', 'drink')}")
        lines.append(f"activities_to_avoid: {first_matching('avoid', 'do not', 'only as needed')}")
        lines.append(f"next_appointment: {first_matching('appointment', 'follow-up')}")
        if missed_questions:
            ids = ", ".join(qid for qid, _ in missed_questions)
            lines.append(
                f"points_not_understood: The patient should revisit the material behind {ids}."
            )
        else:
            lines.append(
                "points_not_understood: None — the patient answered every question during the session."
            )
        return "\n".join(lines)

    # -- agent / assessment -------------------------------------------------

    def _handle_assessment(self, prompt: str, request: ChatRequest) -> str:
        question = _line_value(prompt, "Question: ")
        evidence = _line_value(prompt, "Supporting excerpt from the instruction: ")
        answer = _line_value(prompt, "Patient's answer: ")
        a_words = _content_words(answer)
        overlap_evidence = len(a_words & _content_words(evidence))
        overlap_question = len(a_words & _content_words(question))
        if overlap_evidence >= 3:
            verdict = "correct"
        elif overlap_evidence + overlap_question == 0:
            verdict = "irrelevant"
        else:
            verdict = "incorrect"
        return (
            f"verdict: {verdict}\n"
            f"rationale: The answer shares {overlap_evidence} content words with the "
            f"supporting excerpt."
        )

    def _handle_agent(self, prompt: str, request: ChatRequest) -> str:
        verdict = _line_value(prompt, "Assessment of the patient's latest answer: ").split(" — ")[0]
        remaining = _line_value(prompt, "Unasked questions remaining: ")
        header = re.search(r"^Active question \[(\S+)\] \(status: (\w+)\)", prompt, re.MULTILINE)
        qid = header.group(1) if header else "none"
        status = header.group(2) if header else "asked"
        if verdict == "correct":
            if remaining == "0":
                return (
                    "Thought: The patient answered correctly and no questions remain; "
                    "time to wrap up.\nAction: EndConversation\nAction Input: none"
                )
            return (
                "Thought: The patient answered correctly; move on to the next question."
                f"\nAction: AskNextQuestion\nAction Input: none"
            )
        if status == "asked":
            return (
                "Thought: The patient missed this question for the first time, so give "
                f"a hint.\nAction: GiveHint\nAction Input: {qid}"
            )
        return (
            "Thought: The patient missed this question again after a hint; state the "
            f"answer and move on.\nAction: RevealAndAdvance\nAction Input: {qid}"
        )

    # -- patient -------------------------------------------------------------

    @staticmethod
    def _paraphrase(evidence: str) -> str:
        text = normalize_ws(evidence)
        swaps = (
            ("Your", "My"),
            ("your", "my"),
            ("You were", "I was"),
            ("you were", "I was"),
            ("You have", "I have"),
            ("you have", "I have"),
            ("You will", "I will"),
            ("you will", "I will"),
            ("You", "I"),
            ("you", "me"),
            ("Please call", "I should call"),
            ("Please", ""),
        )
        for old, new in swaps:
            text = text.replace(old, new)
        return normalize_ws(text)

    def _handle_patient(self, prompt: str, request: ChatRequest) -> str:
        evidence = _line_value(prompt, "Instruction excerpt relevant to the question: ")
        if "Answer the question correctly" in prompt:
            if not evidence.strip():
                return "Yes, I understand what I am supposed to do."
            return f"As I understood it, {self._paraphrase(evidence)}"
        if "plausible but incorrect" in prompt:
            return seeding.pick(_WRONG_ANSWERS, "wrong", prompt)
        return seeding.pick(_IRRELEVANT_ANSWERS, "irrelevant", prompt)

    # -- judge / baseline ------------------------------------------------------

    def _handle_judge(self, prompt: str, request: ChatRequest) -> str:
        def scores(label: str) -> tuple[dict, int]:
            names = (
                ("Question", "Coverrate"),
                ("Question", "Relevance"),
                ("Question", "Fluent"),
                ("Agent", "Correctness"),
                ("Response", "Relevance"),
                ("Response", "Sufficient"),
                ("Response", "Factuality"),
                ("Summary", "Coverrate"),
            )
            out: dict[str, dict[str, str]] = {}
            total = 0
            for perspective, metric in names:
                value = 3 + int(seeding.unit_interval("judge", label, perspective, metric, prompt) * 3)
                value = min(value, 5)
                out.setdefault(perspective, {})[metric] = str(value)
                total += value
            return out, total

        # Prompt-sensitive but deterministic: the same pair judges the same
        # way forever.
        a, a_total = scores("EHRTutor")
        b, b_total = scores("GPT4")
        if a_total == b_total:
            best = "tie"
        else:
            best = "EHRTutor" if a_total > b_total else "GPT4"
        payload = {"best model": best, "EHRTutor": a, "GPT4": b}
        return "Here is my comparison.\n" + json.dumps(payload, ensure_ascii=False)

    def _handle_baseline(self, prompt: str, request: ChatRequest) -> str:
        asked = sum(1 for m in request.messages if m.role == "assistant")
        if asked < len(_BASELINE_QUESTIONS):
            return _BASELINE_QUESTIONS[asked]
        return (
            "Thanks — you did well. Remember to read your instruction sheet again "
            "tonight. Take care!"
        )
