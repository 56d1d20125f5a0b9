"""Prompt template rendering.

Templates live as plain-text assets under ``ehrtutor/templates``, one file per
chain.  Placeholders use ``{name}``; literal braces are written ``{{`` and
``}}`` (the judge template's output schema depends on this).  Substituted
values are inserted verbatim in a single pass — braces inside a bound value
are never re-interpreted.
"""

from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources
from typing import Mapping

from .errors import MissingBinding

TEMPLATE_FILES: dict[str, str] = {
    "keypoint_chain": "keypoint_chain.txt",
    "question_chain": "question_chain.txt",
    "verification_chain": "verification_chain.txt",
    "hint_chain": "hint_chain.txt",
    "summary_chain": "summary_chain.txt",
    "assessment": "assessment.txt",
    "agent": "agent.txt",
    "patient": "patient.txt",
    "judge": "judge.txt",
    "baseline": "baseline.txt",
}

_TOKEN = re.compile(r"\{\{|\}\}|\{([A-Za-z_][A-Za-z0-9_]*)\}")


@lru_cache(maxsize=None)
def template_text(chain: str) -> str:
    """Raw template text for a chain id."""
    try:
        filename = TEMPLATE_FILES[chain]
    except KeyError:
        raise KeyError(f"no template registered for chain {chain!r}") from None
    return (resources.files("ehrtutor") / "templates" / filename).read_text(encoding="utf-8")


def render(template: str, bindings: Mapping[str, str], *, source: str = "<inline>") -> str:
    """Substitute ``{name}`` placeholders; ``{{``/``}}`` become literal braces."""
    out: list[str] = []
    last = 0
    for match in _TOKEN.finditer(template):
        out.append(template[last : match.start()])
        token = match.group(0)
        if token == "{{":
            out.append("{")
        elif token == "}}":
            out.append("}")
        else:
            name = match.group(1)
            if name not in bindings:
                raise MissingBinding(name, source)
            out.append(str(bindings[name]))
        last = match.end()
    out.append(template[last:])
    return "".join(out)


def render_template(chain: str, bindings: Mapping[str, str]) -> str:
    """Render the registered template for ``chain`` with ``bindings``."""
    return render(template_text(chain), bindings, source=chain)
