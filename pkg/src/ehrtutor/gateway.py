"""Model access layer.

All chains talk to language models through :class:`LLMGateway`, which runs in
exactly one of four modes:

    live     -> forward to the configured provider (with bounded retries)
    record   -> live, plus persist every exchange into a cassette
    replay   -> answer from a cassette only; a miss is an error
    scripted -> pop canned responses from per-tag FIFO queues (tests)

Requests are keyed by a stable fingerprint over (model_id, messages,
temperature).  Sampling caps and bookkeeping tags deliberately stay out of the
key so re-tagging a call site or bumping max_tokens never invalidates a
recorded cassette.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Mapping, Protocol

from .config import ProviderSettings
from .errors import IoFailure, ProviderError, ReplayMiss, SchemaMismatch, ScriptExhausted

CASSETTE_SCHEMA_VERSION = 1

_ROLES = frozenset({"system", "user", "assistant"})


class FinishReason(str, Enum):
    COMPLETE = "complete"
    TRUNCATED = "truncated"
    REFUSED = "refused"


class ResponseSource(str, Enum):
    LIVE = "live"
    REPLAY = "replay"
    SCRIPTED = "scripted"


class GatewayMode(str, Enum):
    LIVE = "live"
    RECORD = "record"
    REPLAY = "replay"
    SCRIPTED = "scripted"


@dataclass(frozen=True)
class Message:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in _ROLES:
            raise ValueError(f"message role must be one of {sorted(_ROLES)}, got {self.role!r}")


@dataclass(frozen=True)
class ChatRequest:
    """One chat-completion request.

    ``request_tag`` names the call site (e.g. ``verification_chain``) for
    replay diagnostics and scripted routing; it is not part of the identity of
    the request.
    """

    model_id: str
    messages: tuple[Message, ...]
    temperature: float = 0.0
    max_tokens: int = 1024
    request_tag: str = "untagged"

    def __post_init__(self) -> None:
        if not self.model_id:
            raise ValueError("model_id must be nonempty")
        if not self.messages:
            raise ValueError("messages must be nonempty")
        if self.messages[0].role not in ("system", "user"):
            raise ValueError("the first message role must be system or user")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature must be in [0, 2], got {self.temperature}")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")

    def fingerprint(self) -> str:
        """Stable identity hash over model_id, messages and temperature."""
        payload = json.dumps(
            {
                "model_id": self.model_id,
                "messages": [[m.role, m.content] for m in self.messages],
                "temperature": self.temperature,
            },
            sort_keys=True,
            ensure_ascii=False,
            separators=(",", ":"),
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "messages": [{"role": m.role, "content": m.content} for m in self.messages],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "request_tag": self.request_tag,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "ChatRequest":
        return cls(
            model_id=data["model_id"],
            messages=tuple(Message(m["role"], m["content"]) for m in data["messages"]),
            temperature=float(data["temperature"]),
            max_tokens=int(data["max_tokens"]),
            request_tag=data["request_tag"],
        )


@dataclass(frozen=True)
class ChatResponse:
    content: str
    finish_reason: FinishReason
    provider_latency_ms: int = 0
    source: ResponseSource = ResponseSource.SCRIPTED

    def __post_init__(self) -> None:
        if self.finish_reason is FinishReason.COMPLETE and not self.content:
            raise ValueError("a complete response must carry nonempty content")
        if self.provider_latency_ms < 0:
            raise ValueError("provider_latency_ms must be >= 0")


@dataclass(frozen=True)
class CassetteEntry:
    fingerprint: str
    request_tag: str
    content: str
    finish_reason: FinishReason


@dataclass
class Cassette:
    """A fingerprint-keyed store of recorded responses."""

    entries: dict[str, CassetteEntry] = field(default_factory=dict)
    created_at: str = ""
    schema_version: int = CASSETTE_SCHEMA_VERSION

    def __post_init__(self) -> None:
        if not self.created_at:
            self.created_at = datetime.now(timezone.utc).isoformat(timespec="seconds")

    def get(self, fingerprint: str) -> CassetteEntry | None:
        return self.entries.get(fingerprint)

    def add(self, entry: CassetteEntry) -> None:
        # First write wins: lookups must stay pure no matter how often a
        # request repeats during recording.
        self.entries.setdefault(entry.fingerprint, entry)

    def __len__(self) -> int:
        return len(self.entries)


def record_cassette(cassette: Cassette, path: str | Path) -> None:
    """Write a cassette as UTF-8 line-delimited JSON (header line first)."""
    lines = [
        json.dumps(
            {"schema_version": cassette.schema_version, "created_at": cassette.created_at},
            ensure_ascii=False,
        )
    ]
    for entry in cassette.entries.values():
        lines.append(
            json.dumps(
                {
                    "fingerprint": entry.fingerprint,
                    "request_tag": entry.request_tag,
                    "content": entry.content,
                    "finish_reason": entry.finish_reason.value,
                },
                ensure_ascii=False,
            )
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_cassette(path: str | Path) -> Cassette:
    """Load a cassette file, verifying its schema version."""
    try:
        raw = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise IoFailure(str(path), f"cannot read cassette: {err}")
    lines = [line for line in raw.splitlines() if line.strip()]
    if not lines:
        raise IoFailure(str(path), "cassette file is empty (missing header line)")

    offset = 0
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as err:
        raise IoFailure(str(path), f"bad cassette header: {err.msg}", offset=err.pos)
    if not isinstance(header, dict) or "schema_version" not in header:
        raise IoFailure(str(path), "cassette header lacks schema_version")
    if header["schema_version"] != CASSETTE_SCHEMA_VERSION:
        raise SchemaMismatch(str(path), header["schema_version"], CASSETTE_SCHEMA_VERSION)

    cassette = Cassette(created_at=header.get("created_at", ""))
    offset = len(lines[0]) + 1
    for line in lines[1:]:
        try:
            data = json.loads(line)
        except json.JSONDecodeError as err:
            raise IoFailure(str(path), f"bad cassette entry: {err.msg}", offset=offset + err.pos)
        try:
            cassette.add(
                CassetteEntry(
                    fingerprint=data["fingerprint"],
                    request_tag=data["request_tag"],
                    content=data["content"],
                    finish_reason=FinishReason(data["finish_reason"]),
                )
            )
        except (KeyError, ValueError) as err:
            raise IoFailure(str(path), f"malformed cassette entry: {err}", offset=offset)
        offset += len(line) + 1
    return cassette


class Provider(Protocol):
    """Anything that can answer a single chat request (one attempt)."""

    def complete(self, request: ChatRequest) -> tuple[str, FinishReason, int]:
        """Return (content, finish_reason, latency_ms); raise ProviderError on failure."""
        ...  # pragma: no cover


class HttpProvider:
    """OpenAI-compatible chat-completions client.

    The API key is read from the environment variable named in the settings at
    call time, so a long-lived process picks up rotated credentials.
    """

    _FINISH_MAP = {
        "stop": FinishReason.COMPLETE,
        "length": FinishReason.TRUNCATED,
        "content_filter": FinishReason.REFUSED,
    }

    def __init__(self, settings: ProviderSettings):
        self.settings = settings

    def complete(self, request: ChatRequest) -> tuple[str, FinishReason, int]:
        import os

        import requests

        key = os.environ.get(self.settings.api_key_env, "")
        if not key:
            raise ProviderError(
                f"environment variable {self.settings.api_key_env} is not set"
            )
        url = self.settings.base_url.rstrip("/") + "/chat/completions"
        body = {
            "model": request.model_id,
            "messages": [{"role": m.role, "content": m.content} for m in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        started = time.monotonic()
        try:
            resp = requests.post(
                url,
                json=body,
                headers={"Authorization": f"Bearer {key}"},
                timeout=self.settings.timeout_s,
            )
        except requests.RequestException as err:
            raise ProviderError(f"transport failure: {err}")
        latency_ms = int((time.monotonic() - started) * 1000)
        if resp.status_code != 200:
            raise ProviderError(f"provider returned HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            choice = resp.json()["choices"][0]
            content = choice["message"]["content"] or ""
            finish = self._FINISH_MAP.get(choice.get("finish_reason", "stop"), FinishReason.COMPLETE)
        except (KeyError, IndexError, ValueError) as err:
            raise ProviderError(f"malformed provider payload: {err}")
        return content, finish, latency_ms


class LLMGateway:
    """Mode-switched front door for all model calls.

    Thread-safe: concurrent ``complete_chat`` calls are fine in every mode;
    cassette writes and scripted queue pops are serialized internally.
    """

    def __init__(
        self,
        mode: GatewayMode | str,
        *,
        provider: Provider | None = None,
        cassette: Cassette | None = None,
        retries: int = 2,
        backoff_s: float = 0.5,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.mode = GatewayMode(mode)
        self.provider = provider
        self.cassette = cassette
        self.retries = retries
        self.backoff_s = backoff_s
        self._sleep = sleep
        self._scripts: dict[str, deque[ChatResponse]] = {}
        self._lock = threading.Lock()

        if self.mode in (GatewayMode.LIVE, GatewayMode.RECORD) and provider is None:
            raise ValueError(f"{self.mode.value} mode requires a provider")
        if self.mode is GatewayMode.REPLAY and cassette is None:
            raise ValueError("replay mode requires a cassette")
        if self.mode is GatewayMode.RECORD and cassette is None:
            self.cassette = Cassette()

    # -- scripted mode ----------------------------------------------------

    def enqueue(self, request_tag: str, *responses: str | ChatResponse) -> None:
        """Queue canned responses for a request tag (scripted mode only)."""
        if self.mode is not GatewayMode.SCRIPTED:
            raise ValueError("enqueue is only meaningful in scripted mode")
        queue = self._scripts.setdefault(request_tag, deque())
        for item in responses:
            if isinstance(item, str):
                item = ChatResponse(item, FinishReason.COMPLETE, 0, ResponseSource.SCRIPTED)
            queue.append(item)

    def enqueue_script(self, script: Mapping[str, Iterable[str | ChatResponse]]) -> None:
        for tag, responses in script.items():
            self.enqueue(tag, *responses)

    # -- main entry point --------------------------------------------------

    def complete_chat(self, request: ChatRequest) -> ChatResponse:
        if self.mode is GatewayMode.SCRIPTED:
            return self._scripted(request)
        if self.mode is GatewayMode.REPLAY:
            return self._replay(request)
        response = self._call_provider(request)
        if self.mode is GatewayMode.RECORD:
            with self._lock:
                assert self.cassette is not None
                self.cassette.add(
                    CassetteEntry(
                        fingerprint=request.fingerprint(),
                        request_tag=request.request_tag,
                        content=response.content,
                        finish_reason=response.finish_reason,
                    )
                )
        return response

    def save_cassette(self, path: str | Path) -> None:
        if self.cassette is None:
            raise ValueError("gateway holds no cassette to save")
        with self._lock:
            record_cassette(self.cassette, path)

    # -- mode internals ----------------------------------------------------

    def _scripted(self, request: ChatRequest) -> ChatResponse:
        with self._lock:
            queue = self._scripts.get(request.request_tag)
            if not queue:
                raise ScriptExhausted(request.request_tag)
            return queue.popleft()

    def _replay(self, request: ChatRequest) -> ChatResponse:
        assert self.cassette is not None
        entry = self.cassette.get(request.fingerprint())
        if entry is None:
            raise ReplayMiss(request.request_tag, request.fingerprint())
        return ChatResponse(
            content=entry.content,
            finish_reason=entry.finish_reason,
            provider_latency_ms=0,
            source=ResponseSource.REPLAY,
        )

    def _call_provider(self, request: ChatRequest) -> ChatResponse:
        assert self.provider is not None
        attempts = self.retries + 1
        last: ProviderError | None = None
        for attempt in range(attempts):
            try:
                content, finish, latency_ms = self.provider.complete(request)
                return ChatResponse(
                    content=content,
                    finish_reason=finish,
                    provider_latency_ms=latency_ms,
                    source=ResponseSource.LIVE,
                )
            except ProviderError as err:
                last = err
                if attempt + 1 < attempts:
                    self._sleep(self.backoff_s * (2**attempt))
        raise ProviderError(f"provider failed after {attempts} attempts: {last}", attempts=attempts)
