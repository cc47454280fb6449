"""Easy Data Augmentation with entity protection.

One operation is drawn per call and applied at ``n = max(1, round(rate * len))``
positions.  Tokens that belong to either entity, and ``[CTX]`` markers, are
never deleted, replaced, moved or split by an insertion.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Protocol, Sequence

import numpy as np

from .data import Example
from .text import CTX, entity_spans, words

OPERATIONS = ("synonym_replace", "random_insert", "random_swap", "random_delete")


class SynonymSource(Protocol):
    def synonyms(self, token: str) -> list[str]: ...


class LexiconSynonyms:
    def __init__(self, table: Mapping[str, Sequence[str]]):
        self.table = {k: list(v) for k, v in table.items()}

    def synonyms(self, token: str) -> list[str]:
        return list(self.table.get(token, ()))

    @classmethod
    def load(cls, path) -> "LexiconSynonyms":
        table = {}
        with open(path, encoding="utf-8") as fh:
            for n, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                word, sep, rest = line.rstrip("\n").partition("\t")
                if not sep:
                    raise ValueError(f"{path}:{n}: expected '<word>\\t<syn1>,<syn2>,...'")
                table[word.strip()] = [s.strip() for s in rest.split(",") if s.strip()]
        return cls(table)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for word, syns in self.table.items():
                fh.write(f"{word}\t{','.join(syns)}\n")


class EmbeddingSynonyms:
    """Nearest neighbours in a static embedding table."""

    def __init__(self, table, k: int = 5):
        self.table = table
        self.k = k
        self._cache: dict[str, list[str]] = {}

    def synonyms(self, token: str) -> list[str]:
        if token not in self._cache:
            self._cache[token] = self.table.nearest(token, self.k) if token in self.table else []
        return self._cache[token]


class NoSynonyms:
    def synonyms(self, token: str) -> list[str]:
        return []


@dataclass
class EdaConfig:
    rate: float = 0.2
    operations: tuple[str, ...] = OPERATIONS
    seed: int = 0

    def validate(self) -> None:
        if not 0.0 <= self.rate <= 1.0:
            raise ValueError(f"eda.rate must be in [0, 1], got {self.rate}")
        unknown = set(self.operations) - set(OPERATIONS)
        if unknown:
            raise ValueError(f"eda.operations: unknown {sorted(unknown)}")
        if self.rate > 0 and not self.operations:
            raise ValueError("eda.operations: at least one operation is needed when rate > 0")


def protected_mask(tokens: Sequence[str], e1: str, e2: str) -> list[bool]:
    mask = [t == CTX for t in tokens]
    for s, e, _ in entity_spans(tokens, [e1, e2]):
        for i in range(s, e):
            mask[i] = True
    return mask


def eda(
    tokens: Sequence[str],
    e1: str,
    e2: str,
    config: EdaConfig,
    synonyms: Optional[SynonymSource] = None,
    rng: Optional[np.random.Generator] = None,
) -> list[str]:
    """Return a perturbed copy of ``tokens``."""
    config.validate()
    tokens = list(tokens)
    if not tokens:
        raise ValueError("eda: empty sentence")
    if config.rate == 0.0:
        return tokens
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    synonyms = synonyms or NoSynonyms()
    op = config.operations[int(rng.integers(len(config.operations)))]
    mask = protected_mask(tokens, e1, e2)
    free = [i for i, m in enumerate(mask) if not m]
    if not free:
        return tokens
    n = max(1, int(np.floor(config.rate * len(tokens) + 0.5)))
    return _APPLY[op](tokens, mask, free, n, synonyms, rng)


def _replace(tokens, mask, free, n, synonyms, rng):
    out = list(tokens)
    replaced = 0
    for i in rng.permutation(free):
        if replaced >= n:
            break
        cands = [c for c in synonyms.synonyms(out[i]) if c != out[i]]
        if cands:
            out[i] = cands[int(rng.integers(len(cands)))]
            replaced += 1
    return out


def _insert(tokens, mask, free, n, synonyms, rng):
    out = list(tokens)
    m = list(mask)
    for _ in range(n):
        free_now = [i for i, p in enumerate(m) if not p]
        with_syn = [i for i in free_now if synonyms.synonyms(out[i])]
        if with_syn:
            src = with_syn[int(rng.integers(len(with_syn)))]
            cands = synonyms.synonyms(out[src])
            word = cands[int(rng.integers(len(cands)))]
        else:
            word = out[free_now[int(rng.integers(len(free_now)))]]
        # a gap is legal unless it falls strictly inside a protected run
        gaps = [g for g in range(len(out) + 1) if g in (0, len(out)) or not (m[g - 1] and m[g])]
        g = gaps[int(rng.integers(len(gaps)))]
        out.insert(g, word)
        m.insert(g, False)
    return out


def _swap(tokens, mask, free, n, synonyms, rng):
    out = list(tokens)
    if len(free) < 2:
        return out
    for _ in range(n):
        a, b = rng.choice(len(free), size=2, replace=False)
        i, j = free[int(a)], free[int(b)]
        out[i], out[j] = out[j], out[i]
    return out


def _delete(tokens, mask, free, n, synonyms, rng):
    n = min(n, len(free))
    drop = set(int(i) for i in rng.choice(free, size=n, replace=False))
    return [t for i, t in enumerate(tokens) if i not in drop]


_APPLY = {
    "synonym_replace": _replace,
    "random_insert": _insert,
    "random_swap": _swap,
    "random_delete": _delete,
}


@dataclass
class Augmenter:
    """Perturbs whole examples; the entity pair is left intact."""

    config: EdaConfig = field(default_factory=EdaConfig)
    synonyms: SynonymSource = field(default_factory=NoSynonyms)

    def __call__(self, example: Example, rng: np.random.Generator) -> Example:
        toks = eda(words(example.sentence), example.e1, example.e2, self.config, self.synonyms, rng)
        return replace(example, id=f"{example.id}~aug", sentence=" ".join(toks), label=None)
