"""Four-way content label taxonomy.

Ordinal codes are load-bearing: they fix class order in confusion matrices,
logit vectors, and serialized manifests, so they must never be reordered.
"""

from __future__ import annotations

import enum


class LabelClass(enum.IntEnum):
    SAFE = 0
    ADULT_CONTENT = 1
    HARMFUL_CONTENT = 2
    SUICIDE = 3

    @property
    def canonical(self) -> str:
        return _TO_STR[self]

    @classmethod
    def from_string(cls, s: str) -> "LabelClass":
        try:
            return _FROM_STR[s]
        except KeyError:
            raise ValueError(f"unknown label string: {s!r}") from None


_TO_STR = {
    LabelClass.SAFE: "safe",
    LabelClass.ADULT_CONTENT: "adult_content",
    LabelClass.HARMFUL_CONTENT: "harmful_content",
    LabelClass.SUICIDE: "suicide",
}

_FROM_STR = {v: k for k, v in _TO_STR.items()}

NUM_CLASSES = 4

# Classes that trigger an automated BLOCK when predicted with confidence.
HARMFUL_LABELS = frozenset(
    {LabelClass.ADULT_CONTENT, LabelClass.HARMFUL_CONTENT, LabelClass.SUICIDE}
)
