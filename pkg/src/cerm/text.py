"""Tokenization and entity span matching shared by every module."""

from __future__ import annotations

import re
from typing import Iterable, Sequence

CTX = "[CTX]"

_TOKEN_RE = re.compile(r"\[CTX\]|\w+|[^\w\s]", re.UNICODE)


def words(text: str) -> list[str]:
    """Case-folded word/punctuation tokens; ``[CTX]`` survives as one token."""
    return [t if t == CTX else t.casefold() for t in _TOKEN_RE.findall(text)]


def find_spans(tokens: Sequence[str], phrase: Sequence[str]) -> list[tuple[int, int]]:
    """Non-overlapping left-to-right occurrences of ``phrase`` as (start, end)."""
    n = len(phrase)
    if n == 0:
        return []
    spans = []
    i = 0
    while i + n <= len(tokens):
        if list(tokens[i : i + n]) == list(phrase):
            spans.append((i, i + n))
            i += n
        else:
            i += 1
    return spans


def entity_spans(tokens: Sequence[str], entities: Iterable[str]) -> list[tuple[int, int, str]]:
    """Occurrences of any of ``entities`` in ``tokens``, longest match first.

    A position claimed by a longer entity is not reused by a shorter one.
    Result is sorted by start position.
    """
    phrases = sorted({e: words(e) for e in entities}.items(), key=lambda kv: -len(kv[1]))
    taken = [False] * len(tokens)
    found = []
    for ent, phrase in phrases:
        for s, e in find_spans(tokens, phrase):
            if any(taken[s:e]):
                continue
            for k in range(s, e):
                taken[k] = True
            found.append((s, e, ent))
    found.sort()
    return found
