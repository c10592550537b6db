"""Text analysis: lowercase, split, stop, stem."""

from __future__ import annotations

import re
from dataclasses import dataclass

from .porter import stem

# Lucene's classic English stop set.
STOPWORDS = frozenset(
    """a an and are as at be but by for if in into is it no not of on or such
    that the their then there these they this to was will with""".split()
)

_SPLIT = re.compile(r"[^\W_]+")


@dataclass(frozen=True)
class IndexParams:
    k1: float = 0.9
    b: float = 0.4
    stemming: bool = True
    stopwords: bool = True

    def __post_init__(self):
        if self.k1 < 0:
            raise ValueError(f"k1 must be >= 0, got {self.k1}")
        if not 0.0 <= self.b <= 1.0:
            raise ValueError(f"b must be in [0, 1], got {self.b}")


def tokenize(text: str, params: IndexParams = IndexParams()) -> list[str]:
    tokens = _SPLIT.findall(text.lower())
    if params.stopwords:
        tokens = [t for t in tokens if t not in STOPWORDS]
    if params.stemming:
        tokens = [stem(t) for t in tokens]
    return tokens
