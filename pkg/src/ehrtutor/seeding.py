"""Pinned deterministic randomness.

Everything stochastic in the engine draws through these helpers instead of the
platform RNG, so a (seed, index) pair maps to the same outcome on every
machine and Python build.  The generator is SHA-256 over the stringified key
parts; the first eight bytes of the digest become a uniform draw.
"""

from __future__ import annotations

import hashlib
from typing import Sequence, TypeVar

T = TypeVar("T")

_SCALE = float(2**64)


def _digest(parts: tuple[object, ...]) -> bytes:
    key = ":".join(str(p) for p in parts)
    return hashlib.sha256(key.encode("utf-8")).digest()


def unit_interval(*parts: object) -> float:
    """Deterministic uniform draw in [0, 1) keyed by ``parts``."""
    return int.from_bytes(_digest(parts)[:8], "big") / _SCALE


def pick(options: Sequence[T], *parts: object) -> T:
    """Deterministic choice from ``options`` keyed by ``parts``."""
    if not options:
        raise ValueError("cannot pick from an empty sequence")
    index = int.from_bytes(_digest(parts)[:8], "big") % len(options)
    return options[index]


def weighted_index(weights: Sequence[float], *parts: object) -> int:
    """Deterministic index draw with the given cumulative weights.

    Weights are assumed nonnegative; the caller validates that they sum to one.
    """
    u = unit_interval(*parts)
    acc = 0.0
    for i, w in enumerate(weights):
        acc += w
        if u < acc:
            return i
    return len(weights) - 1
