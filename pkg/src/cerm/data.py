"""ERSA examples: pair extraction, label resolution, splits, statistics, IO."""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Optional, Sequence

import numpy as np

from .text import entity_spans, find_spans, words

LABELS = ("negative", "neutral", "positive")
CATEGORIES = ("Chemical", "Consumable", "Disease", "Nutrient", "Gene")


class DataError(ValueError):
    pass


def occurs(entity: str, sentence: str) -> bool:
    return bool(find_spans(words(sentence), words(entity)))


@dataclass
class Example:
    id: str
    e1: str
    e2: str
    sentence: str
    label: Optional[str] = None
    categories: Optional[tuple[str, str]] = None

    def __post_init__(self):
        if not self.e1 or not self.e2:
            raise DataError(f"example {self.id}: empty entity")
        if self.e1.casefold() == self.e2.casefold():
            raise DataError(f"example {self.id}: e1 and e2 must differ ({self.e1!r})")
        if self.label is not None and self.label not in LABELS:
            raise DataError(f"example {self.id}: label {self.label!r} not in {LABELS}")
        if self.categories is not None:
            self.categories = tuple(self.categories)
            if len(self.categories) != 2:
                raise DataError(f"example {self.id}: categories must be a pair")
        for ent in (self.e1, self.e2):
            if not occurs(ent, self.sentence):
                raise DataError(f"example {self.id}: entity {ent!r} does not occur in sentence")

    @property
    def labeled(self) -> bool:
        return self.label is not None

    @property
    def label_index(self) -> int:
        if self.label is None:
            raise DataError(f"example {self.id} is unlabeled")
        return LABELS.index(self.label)

    def to_dict(self) -> dict:
        d = {"id": self.id, "e1": self.e1, "e2": self.e2, "sentence": self.sentence}
        if self.label is not None:
            d["label"] = self.label
        if self.categories is not None:
            d["categories"] = list(self.categories)
        return d


def load_examples(path) -> list[Example]:
    """Read line-delimited JSON records; any malformed line fails with its number."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{n}: invalid JSON ({exc.msg})") from None
            missing = [k for k in ("id", "e1", "e2", "sentence") if k not in rec]
            if missing:
                raise DataError(f"{path}:{n}: missing field(s) {', '.join(missing)}")
            try:
                out.append(
                    Example(
                        str(rec["id"]), rec["e1"], rec["e2"], rec["sentence"], rec.get("label"), rec.get("categories")
                    )
                )
            except DataError as exc:
                raise DataError(f"{path}:{n}: {exc}") from None
    return out


def save_examples(examples: Iterable[Example], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps(ex.to_dict(), ensure_ascii=False) + "\n")


class EntityLexicon(dict):
    """Case-folded surface form → category."""

    def add(self, surface: str, category: str) -> None:
        key = " ".join(words(surface))
        if not key:
            raise DataError(f"empty surface form {surface!r}")
        if key in self:
            raise DataError(f"duplicate surface form {surface!r}")
        self[key] = category

    @classmethod
    def load(cls, path) -> "EntityLexicon":
        lex = cls()
        with open(path, encoding="utf-8") as fh:
            for n, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                surface, sep, category = line.rstrip("\n").partition("\t")
                if not sep:
                    raise DataError(f"{path}:{n}: expected '<surface>\\t<category>'")
                try:
                    lex.add(surface, category.strip())
                except DataError as exc:
                    raise DataError(f"{path}:{n}: {exc}") from None
        return lex


def extract_pairs(sentences: Sequence[str], lexicon: EntityLexicon, id_prefix: str = "s") -> list[Example]:
    """One unlabeled example per distinct entity pair co-occurring in a sentence."""
    if not lexicon:
        raise DataError("extract_pairs: lexicon is empty")
    out = []
    for i, sent in enumerate(sentences):
        found = []
        for _, _, ent in entity_spans(words(sent), lexicon):
            if ent not in found:
                found.append(ent)
        for a, b in combinations(found, 2):
            out.append(Example(f"{id_prefix}{i}-{a}-{b}", a, b, sent, None, (lexicon[a], lexicon[b])))
    return out


class _Dropped:
    def __repr__(self) -> str:
        return "Dropped"


Dropped = _Dropped()


def resolve_labels(annotations: Sequence[str]):
    """Majority of three annotations, or ``Dropped`` on a three-way split."""
    if len(annotations) != 3:
        raise DataError(f"expected exactly 3 annotations, got {len(annotations)}")
    for a in annotations:
        if a not in LABELS:
            raise DataError(f"annotation {a!r} not in {LABELS}")
    label, count = Counter(annotations).most_common(1)[0]
    return label if count >= 2 else Dropped


def split(examples: Sequence[Example], ratio: float = 0.7, seed: int = 0) -> tuple[list[Example], list[Example]]:
    if not 0.0 < ratio < 1.0:
        raise DataError(f"split ratio must be in (0, 1), got {ratio}")
    if not examples:
        raise DataError("cannot split an empty dataset")
    order = np.random.default_rng(seed).permutation(len(examples))
    cut = int(math.floor(ratio * len(examples) + 0.5))
    return [examples[i] for i in order[:cut]], [examples[i] for i in order[cut:]]


@dataclass
class DatasetStats:
    labeled: int
    per_label: dict[str, int]
    unlabeled: int
    words_avg: float
    words_min: int
    words_max: int
    unique_entities: int
    per_category: dict[str, int] = field(default_factory=dict)

    def table(self) -> str:
        rows = [("Labelled data count", self.labeled)]
        rows += [(f"  - {lab.capitalize()}", self.per_label[lab]) for lab in ("positive", "negative", "neutral")]
        rows += [
            ("Unlabeled data count", self.unlabeled),
            ("Word count", ""),
            ("  - Average", f"{self.words_avg:.2f}"),
            ("  - Min", self.words_min),
            ("  - Max", self.words_max),
            ("# of unique entities", self.unique_entities),
        ]
        rows += [(f"  - {c}", n) for c, n in self.per_category.items()]
        width = max(len(r[0]) for r in rows)
        return "\n".join(f"{name:<{width}}  {value}".rstrip() for name, value in rows)


def stats(examples: Sequence[Example]) -> DatasetStats:
    per_label = {lab: 0 for lab in LABELS}
    unlabeled = 0
    lengths = []
    entities: set[str] = set()
    by_category: dict[str, set[str]] = {}
    for ex in examples:
        if ex.label is None:
            unlabeled += 1
        else:
            per_label[ex.label] += 1
        lengths.append(len(ex.sentence.split()))
        for i, ent in enumerate((ex.e1, ex.e2)):
            key = ent.casefold()
            entities.add(key)
            if ex.categories is not None:
                by_category.setdefault(ex.categories[i], set()).add(key)
    return DatasetStats(
        labeled=sum(per_label.values()),
        per_label=per_label,
        unlabeled=unlabeled,
        words_avg=float(np.mean(lengths)) if lengths else 0.0,
        words_min=min(lengths, default=0),
        words_max=max(lengths, default=0),
        unique_entities=len(entities),
        per_category={c: len(by_category[c]) for c in sorted(by_category)},
    )


def absa_encode(target: str, aspect: str, sentence: str, label: Optional[str] = None, id: str = "absa") -> Example:
    """Recast an aspect-level example as an entity pair by appending the aspect."""
    if not aspect.strip():
        raise DataError("absa_encode: empty aspect")
    if not occurs(target, sentence):
        raise DataError(f"absa_encode: target {target!r} does not occur in sentence")
    return Example(id, target, aspect, f"{sentence} {aspect}", label)
