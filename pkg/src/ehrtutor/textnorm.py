"""Whitespace-insensitive substring matching.

Evidence grounding is enforced with these helpers: an excerpt counts as
"literally present" in a document when, after collapsing whitespace runs to
single spaces, it occurs as a substring.  ``find_normalized`` additionally maps
the match back to character offsets in the original document.
"""

from __future__ import annotations


def normalize_ws(text: str) -> str:
    """Collapse whitespace runs to single spaces and strip the ends."""
    return " ".join(text.split())


def contains_normalized(haystack: str, needle: str) -> bool:
    needle_n = normalize_ws(needle)
    if not needle_n:
        return False
    return needle_n in normalize_ws(haystack)


def find_normalized(haystack: str, needle: str) -> tuple[int, int] | None:
    """Locate ``needle`` in ``haystack`` ignoring whitespace differences.

    Returns ``(start, end)`` character offsets into the *original* haystack
    covering the matched region, or ``None`` when the normalized needle does
    not occur.  Empty needles never match.
    """
    needle_n = normalize_ws(needle)
    if not needle_n:
        return None

    # Build the normalized haystack together with a map from each normalized
    # character position back to its source position.
    chars: list[str] = []
    positions: list[int] = []
    pending_space = False
    for i, ch in enumerate(haystack):
        if ch.isspace():
            pending_space = bool(chars)
            continue
        if pending_space:
            chars.append(" ")
            positions.append(positions[-1] + 1 if positions else i)
            pending_space = False
        chars.append(ch)
        positions.append(i)

    hay_n = "".join(chars)
    at = hay_n.find(needle_n)
    if at < 0:
        return None
    start = positions[at]
    end = positions[at + len(needle_n) - 1] + 1
    return start, end
