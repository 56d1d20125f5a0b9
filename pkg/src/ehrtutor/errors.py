"""Exception taxonomy shared across the engine.

Every error raised on purpose derives from :class:`EHRTutorError` so callers can
catch engine failures without swallowing programming mistakes.  Pipeline code
attaches a ``stage`` label to errors it propagates.
"""

from __future__ import annotations


class EHRTutorError(Exception):
    """Base class for all engine errors."""

    #: pipeline stage the error surfaced in, filled in by the batch runner.
    stage: str | None = None


# --------------------------------------------------------------------------
# gateway


class ProviderError(EHRTutorError):
    """The model provider failed after all retry attempts."""

    def __init__(self, message: str, attempts: int = 1):
        super().__init__(message)
        self.attempts = attempts


class ReplayMiss(EHRTutorError):
    """Replay mode saw a request with no matching cassette entry."""

    def __init__(self, request_tag: str, fingerprint: str):
        super().__init__(
            f"no cassette entry for request tagged {request_tag!r} "
            f"(fingerprint {fingerprint[:12]}...)"
        )
        self.request_tag = request_tag
        self.fingerprint = fingerprint


class ScriptExhausted(EHRTutorError):
    """Scripted mode ran out of queued responses for a request tag."""

    def __init__(self, request_tag: str):
        super().__init__(f"no scripted responses left for request tagged {request_tag!r}")
        self.request_tag = request_tag


class SchemaMismatch(EHRTutorError):
    """A persisted file declares a schema version this build does not speak."""

    def __init__(self, path: str, found: object, expected: int):
        super().__init__(f"{path}: schema_version {found!r} (this build expects {expected})")
        self.found = found
        self.expected = expected


class IoFailure(EHRTutorError):
    """A persisted artifact could not be read or decoded."""

    def __init__(self, path: str, message: str, offset: int | None = None):
        detail = f"{path}: {message}"
        if offset is not None:
            detail += f" (byte offset {offset})"
        super().__init__(detail)
        self.path = path
        self.offset = offset


class IncompleteResponse(EHRTutorError):
    """The provider returned a truncated or refused completion."""

    def __init__(self, request_tag: str, finish_reason: str):
        super().__init__(f"request tagged {request_tag!r} finished with {finish_reason!r}")
        self.request_tag = request_tag
        self.finish_reason = finish_reason


# --------------------------------------------------------------------------
# chains


class ParseFailure(EHRTutorError):
    """Model output did not match the mandated structured format."""

    def __init__(self, source: str, message: str, offset: int | None = None):
        detail = f"{source}: {message}"
        if offset is not None:
            detail += f" (byte offset {offset})"
        super().__init__(detail)
        self.source = source
        self.offset = offset


class MissingBinding(EHRTutorError):
    """A template placeholder had no value in the bindings."""

    def __init__(self, name: str, template: str):
        super().__init__(f"template {template!r} has no binding for placeholder {{{name}}}")
        self.name = name


class EmptyInstruction(EHRTutorError):
    """The discharge instruction text was empty or whitespace."""


class NoQuestions(EHRTutorError):
    """The question chain produced an empty question list."""


# --------------------------------------------------------------------------
# agent


class NoVerifiedQuestions(EHRTutorError):
    """A session cannot start without at least one verified question."""


class IllegalPhase(EHRTutorError):
    """An operation ran in a session phase where it is not allowed."""

    def __init__(self, operation: str, phase: str, expected: str):
        super().__init__(f"{operation} requires phase {expected!r}, session is in {phase!r}")
        self.phase = phase
        self.expected = expected


# --------------------------------------------------------------------------
# simulator


class InvalidWeights(EHRTutorError):
    """Behavior weights were negative or did not sum to one."""


# --------------------------------------------------------------------------
# evaluation


class MissingPerspective(EHRTutorError):
    """A quality classification was asked for with a perspective absent."""


class NoScores(EHRTutorError):
    """An average was requested over an empty score collection."""


class EmptyReports(EHRTutorError):
    """A win rate was requested over an empty report collection."""


# --------------------------------------------------------------------------
# service / batch


class UnknownSession(EHRTutorError):
    """The service was asked about a session id it never issued."""

    def __init__(self, session_id: str):
        super().__init__(f"unknown session {session_id!r}")
        self.session_id = session_id


class UnknownDocument(EHRTutorError):
    """A document id did not resolve against the corpus."""

    def __init__(self, doc_id: str):
        super().__init__(f"unknown document {doc_id!r}")
        self.doc_id = doc_id


class CorpusEmpty(EHRTutorError):
    """A batch run was started with an empty document corpus."""
