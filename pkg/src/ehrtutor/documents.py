"""Discharge instruction documents and the bundled sample corpus.

Ten synthetic instructions ship with the package under ``ehrtutor/data``; they
jointly cover all four question categories plus the two classic trouble spots
(an allergy mention that invites an unverifiable question, and a warning-sign
list too long to recall in one go).  All content is invented — no real patient
data anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path

from .errors import UnknownDocument


class DocumentSource(str, Enum):
    BUNDLED_SAMPLE = "bundled_sample"
    USER_SUPPLIED = "user_supplied"


@dataclass(frozen=True)
class DischargeInstruction:
    doc_id: str
    text: str
    source: DocumentSource = DocumentSource.USER_SUPPLIED
    language: str = "en"

    def __post_init__(self) -> None:
        if not self.doc_id.strip():
            raise ValueError("doc_id must be nonempty")
        if self.language != "en":
            raise ValueError(f"only language 'en' is supported, got {self.language!r}")


def load_bundled_corpus() -> list[DischargeInstruction]:
    """All bundled sample instructions, ordered by doc id."""
    root = resources.files("ehrtutor") / "data"
    docs: list[DischargeInstruction] = []
    for entry in sorted(root.iterdir(), key=lambda e: e.name):
        if entry.name.startswith("di-") and entry.name.endswith(".txt"):
            docs.append(
                DischargeInstruction(
                    doc_id=entry.name[: -len(".txt")],
                    text=entry.read_text(encoding="utf-8"),
                    source=DocumentSource.BUNDLED_SAMPLE,
                )
            )
    return docs


def get_bundled(doc_id: str) -> DischargeInstruction:
    for doc in load_bundled_corpus():
        if doc.doc_id == doc_id:
            return doc
    raise UnknownDocument(doc_id)


def load_document(ref: str) -> DischargeInstruction:
    """Resolve a CLI document reference: bundled doc id or path to a text file."""
    path = Path(ref)
    if path.suffix == ".txt" and path.exists():
        return DischargeInstruction(doc_id=path.stem, text=path.read_text(encoding="utf-8"))
    return get_bundled(ref)
