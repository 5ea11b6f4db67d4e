"""Tweet-style tokenization that preserves exact character offsets.

The rule set is a documented approximation of tweet-style word splitting:

* split on Unicode whitespace;
* detach leading and trailing punctuation from each chunk, grouping runs of
  the same punctuation character into a single token (so ``??`` and ``...``
  come out whole);
* keep internal apostrophes, hyphens and any other non-edge punctuation
  inside the token (``isn't``, ``anti-immigration``);
* every non-whitespace character belongs to exactly one token.

Offsets are half-open ``[start, end)`` character positions into the original
text; lowercasing never moves them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator


@dataclass(frozen=True)
class Token:
    """One token: verbatim surface, lowercased form, and its char range."""

    surface: str
    lower: str
    start: int
    end: int


@dataclass(frozen=True)
class TokenSeq:
    """Ordered, non-overlapping tokens plus the source text length."""

    tokens: tuple[Token, ...]
    source_len: int

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self) -> Iterator[Token]:
        return iter(self.tokens)

    def __getitem__(self, index: int) -> Token:
        return self.tokens[index]


def _wordish(ch: str) -> bool:
    return ch.isalnum() or ch == "_"


def _token(text: str, start: int, end: int) -> Token:
    surface = text[start:end]
    return Token(surface=surface, lower=surface.lower(), start=start, end=end)


def _split_chunk(text: str, start: int, end: int, out: list[Token]) -> None:
    # Leading punctuation, one token per run of identical characters.
    i = start
    while i < end and not _wordish(text[i]):
        j = i + 1
        while j < end and text[j] == text[i]:
            j += 1
        out.append(_token(text, i, j))
        i = j
    # Trailing punctuation region; the core in between stays one token.
    k = end
    while k > i and not _wordish(text[k - 1]):
        k -= 1
    if i < k:
        out.append(_token(text, i, k))
    while k < end:
        j = k + 1
        while j < end and text[j] == text[k]:
            j += 1
        out.append(_token(text, k, j))
        k = j


def tokenize(text: str) -> TokenSeq:
    """Segment ``text`` into offset-faithful tokens (empty text allowed)."""
    tokens: list[Token] = []
    n = len(text)
    i = 0
    while i < n:
        if text[i].isspace():
            i += 1
            continue
        j = i
        while j < n and not text[j].isspace():
            j += 1
        _split_chunk(text, i, j, tokens)
        i = j
    return TokenSeq(tokens=tuple(tokens), source_len=n)
