"""Token n-gram decontamination of synthesized code against test sets.

A candidate is contaminated when any length-n token window also occurs in
the indexed evaluation corpus (default n = 10). Windows are stored as
64-bit hashes for compactness; a hash hit is confirmed against the stored
window string before a document is discarded, so collisions can only cause
extra verification work, never a wrong verdict.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field

DEFAULT_NGRAM = 10

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on every non-alphanumeric character."""
    return _TOKEN_RE.findall(text.lower())


def _window_hash(window: str) -> int:
    return int.from_bytes(hashlib.blake2b(window.encode("utf-8"), digest_size=8).digest(), "big")


def _windows(tokens: list[str], n: int):
    for i in range(len(tokens) - n + 1):
        yield " ".join(tokens[i : i + n])


@dataclass
class NGramIndex:
    n: int = DEFAULT_NGRAM
    grams: set[int] = field(default_factory=set)
    source_count: int = 0
    # hash -> window strings, for confirming hash hits
    _verify: dict[int, set[str]] = field(default_factory=dict, repr=False)

    def add_document(self, text: str) -> None:
        tokens = tokenize(text)
        for window in _windows(tokens, self.n):
            h = _window_hash(window)
            self.grams.add(h)
            self._verify.setdefault(h, set()).add(window)
        self.source_count += 1

    def contains(self, window: str) -> bool:
        h = _window_hash(window)
        return h in self.grams and window in self._verify.get(h, ())


def build_index(test_corpus: list[str], n: int = DEFAULT_NGRAM) -> NGramIndex:
    """Index every length-n token window of every document."""
    if n < 1:
        raise ValueError("n must be >= 1")
    index = NGramIndex(n=n)
    for doc in test_corpus:
        index.add_document(doc)
    return index


def is_contaminated(candidate: str, index: NGramIndex) -> bool:
    tokens = tokenize(candidate)
    return any(index.contains(window) for window in _windows(tokens, index.n))
