"""HTTP session service.

A thin FastAPI layer over the agent: create a session for a document, post
patient messages, read the transcript, and fetch the closing summary.  The
service holds sessions in memory, one lock per session, and finalizes
automatically as soon as the conversation ends — the summary endpoint answers
409 until then.

The agent's private scratchpad never crosses this boundary: responses carry
transcript turns, question metadata, and the summary, nothing else.  Question
payloads also omit the supporting evidence — the client is the patient's side
of the table and must not see the answers.
"""

from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass, field

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import __version__
from .agent import Phase, SessionState, Turn, finalize, start_session, step
from .chains import Question, SessionSummary
from .config import EngineConfig
from .documents import get_bundled
from .errors import (
    EHRTutorError,
    EmptyInstruction,
    IllegalPhase,
    NoQuestions,
    NoVerifiedQuestions,
    UnknownDocument,
    UnknownSession,
)
from .gateway import GatewayMode, LLMGateway
from .pipeline import prepare_questions
from .records import summary_to_dict, turn_to_dict


class CreateSessionBody(BaseModel):
    doc_id: str | None = None
    instruction_text: str | None = None
    seed: int = 0


class MessageBody(BaseModel):
    text: str = Field(min_length=1)


@dataclass
class _SessionBox:
    doc_id: str
    state: SessionState
    questions: list[Question]
    summary: SessionSummary | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)


def _public_question(question: Question) -> dict:
    # No answer_evidence here, deliberately.
    return {
        "id": question.id,
        "category": question.category.value,
        "text": question.text,
        "verified": question.verified,
        "rejection_reason": question.rejection_reason,
    }


def _turns_payload(turns: list[Turn]) -> list[dict]:
    return [turn_to_dict(t) for t in turns]


def create_app(config: EngineConfig | None = None, gateway: LLMGateway | None = None) -> FastAPI:
    if config is None:
        config = EngineConfig()
    if gateway is None:
        from .stubprovider import StubProvider

        gateway = LLMGateway(GatewayMode.LIVE, provider=StubProvider())

    app = FastAPI(title="ehrtutor session service", version=__version__)
    sessions: dict[str, _SessionBox] = {}
    ids = itertools.count(1)
    registry_lock = threading.Lock()

    def box_for(session_id: str) -> _SessionBox:
        with registry_lock:
            box = sessions.get(session_id)
        if box is None:
            raise UnknownSession(session_id)
        return box

    @app.exception_handler(EHRTutorError)
    def engine_error(request: Request, exc: EHRTutorError) -> JSONResponse:
        if isinstance(exc, (UnknownSession, UnknownDocument)):
            status = 404
        elif isinstance(exc, IllegalPhase):
            status = 409
        elif isinstance(exc, (EmptyInstruction, NoQuestions, NoVerifiedQuestions)):
            status = 422
        else:
            status = 500
        return JSONResponse(
            status_code=status,
            content={"error": type(exc).__name__, "detail": str(exc)},
        )

    @app.get("/health")
    def health() -> dict:
        with registry_lock:
            live = len(sessions)
        return {"status": "ok", "version": __version__, "sessions": live}

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSessionBody) -> dict:
        if (body.doc_id is None) == (body.instruction_text is None):
            return JSONResponse(
                status_code=422,
                content={
                    "error": "BadRequest",
                    "detail": "provide exactly one of doc_id or instruction_text",
                },
            )
        if body.doc_id is not None:
            document = get_bundled(body.doc_id)
            doc_id, text = document.doc_id, document.text
        else:
            doc_id, text = "user-supplied", body.instruction_text or ""

        _, questions = prepare_questions(gateway, config, text)
        verified = [q for q in questions if q.verified]
        if not verified:
            raise NoVerifiedQuestions(f"document {doc_id} yielded no verified questions")
        state = start_session(text, verified, body.seed)

        with registry_lock:
            session_id = f"s{next(ids)}"
            sessions[session_id] = _SessionBox(doc_id=doc_id, state=state, questions=questions)
        return {
            "session_id": session_id,
            "doc_id": doc_id,
            "phase": state.phase.value,
            "turns": _turns_payload(state.transcript),
            "questions": [_public_question(q) for q in questions],
        }

    @app.post("/sessions/{session_id}/messages")
    def post_message(session_id: str, body: MessageBody) -> dict:
        box = box_for(session_id)
        with box.lock:
            before = len(box.state.transcript)
            state, _ = step(gateway, config, box.state, body.text)
            if state.phase is Phase.SUMMARIZING:
                box.summary = finalize(gateway, config, state)
            return {
                "session_id": session_id,
                "phase": state.phase.value,
                "turns": _turns_payload(state.transcript[before:]),
            }

    @app.get("/sessions/{session_id}/transcript")
    def transcript(session_id: str) -> dict:
        box = box_for(session_id)
        with box.lock:
            return {
                "session_id": session_id,
                "doc_id": box.doc_id,
                "phase": box.state.phase.value,
                "turns": _turns_payload(box.state.transcript),
            }

    @app.get("/sessions/{session_id}/summary")
    def summary(session_id: str) -> dict:
        box = box_for(session_id)
        with box.lock:
            if box.state.phase is not Phase.DONE or box.summary is None:
                raise IllegalPhase("summary", box.state.phase.value, Phase.DONE.value)
            return {
                "session_id": session_id,
                "summary": summary_to_dict(box.summary),
                "missed_question_ids": list(box.state.missed),
            }

    return app
