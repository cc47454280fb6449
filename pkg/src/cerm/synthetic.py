"""Synthetic fixtures: a two-cluster token corpus and a templated ERSA benchmark.

Benchmark sentences read ``<prefix> e1 <cue> e2 <suffix>``; the cue word
decides the label.  Cue words within a class are listed as synonyms of each
other, so augmentation can connect cues seen with labels to unseen ones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .augment import LexiconSynonyms
from .data import LABELS, EntityLexicon, Example

CUES = {
    "negative": ["worsens", "aggravates", "triggers", "induces", "exacerbates", "causes",
                 "provokes", "intensifies", "promotes", "accelerates", "amplifies", "precipitates"],
    "neutral": ["accompanies", "coincides", "appears", "cooccurs", "parallels", "resembles",
                "precedes", "follows", "mirrors", "neighbors", "matches", "echoes"],
    "positive": ["alleviates", "relieves", "improves", "prevents", "soothes", "eases",
                 "heals", "counteracts", "mitigates", "remedies", "attenuates", "reverses"],
}
FILLER = ["in", "patients", "adults", "mice", "cohort", "trial", "study", "samples", "children", "the",
          "of", "with", "reported", "observed", "clinical", "recent", "data", "among", "older", "treated"]
_SYLLABLES = ["ka", "lo", "mi", "ne", "ra", "su", "to", "vi", "ze", "bo", "da", "fu", "gi", "pe", "xa"]


def two_cluster_corpus(n_sentences: int = 600, length: int = 8, seed: int = 0) -> list[list[str]]:
    """Sentences alternate between tokens {a1,a2,a3} and {b1,b2,b3}; clusters never mix."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n_sentences):
        cluster = "ab"[i % 2]
        out.append([f"{cluster}{k}" for k in rng.integers(1, 4, size=length)])
    return out


def _entity_names(n: int, rng: np.random.Generator, prefix: str) -> list[str]:
    names: list[str] = []
    while len(names) < n:
        word = "".join(rng.choice(_SYLLABLES, size=3)) + prefix
        if word not in names:
            names.append(word)
    return names


@dataclass
class Benchmark:
    labeled: list[Example]
    unlabeled: list[Example]
    test: list[Example]
    synonyms: LexiconSynonyms
    lexicon: EntityLexicon


def make_benchmark(
    n_labeled: int = 30,
    n_unlabeled: int = 1000,
    n_test: int = 300,
    n_entities: int = 6,
    noise: float = 0.0,
    cues_per_class: int = 6,
    seed: int = 0,
) -> Benchmark:
    rng = np.random.default_rng(seed)
    cue_words = {lab: CUES[lab][:cues_per_class] for lab in LABELS}
    foods = _entity_names(n_entities // 2, rng, "in")
    diseases = _entity_names(n_entities - n_entities // 2, rng, "osis")
    lexicon = EntityLexicon()
    for f in foods:
        lexicon.add(f, "Consumable")
    for d in diseases:
        lexicon.add(d, "Disease")

    def sample(idx: str, label_idx: int, keep_label: bool) -> Example:
        label = LABELS[label_idx]
        cue = cue_words[label][int(rng.integers(len(cue_words[label])))]
        e1 = foods[int(rng.integers(len(foods)))]
        e2 = diseases[int(rng.integers(len(diseases)))]
        prefix = list(rng.choice(FILLER, size=int(rng.integers(0, 3))))
        suffix = list(rng.choice(FILLER, size=int(rng.integers(2, 6))))
        sentence = " ".join(prefix + [e1, cue, e2] + suffix)
        if noise and rng.random() < noise:
            label = LABELS[int(rng.integers(len(LABELS)))]
        return Example(idx, e1, e2, sentence, label if keep_label else None, ("Consumable", "Disease"))

    labeled = [sample(f"l{i}", i % 3, True) for i in range(n_labeled)]
    unlabeled = [sample(f"u{i}", int(rng.integers(3)), False) for i in range(n_unlabeled)]
    test = [sample(f"t{i}", i % 3, True) for i in range(n_test)]
    table = {}
    for cues in cue_words.values():
        for c in cues:
            table[c] = [o for o in cues if o != c]
    for w in FILLER:
        table[w] = [o for o in FILLER if o != w][:5]
    return Benchmark(labeled, unlabeled, test, LexiconSynonyms(table), lexicon)
