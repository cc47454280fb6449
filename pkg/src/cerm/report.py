"""Train several methods on one split and tabulate per-class F1, macro F1 and accuracy."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .baselines import frozen_features, train_baseline
from .config import TrainConfig, apply_overrides
from .data import LABELS, Example
from .embeddings import EmbeddingTable, train_skipgram
from .metrics import Metrics, compute_metrics
from .trainer import corpus_sentences, evaluate, train

COLUMNS = ("F1-Score (Negative)", "F1-Score (Neutral)", "F1-Score (Positive)", "Macro F1", "Accuracy")


@dataclass
class MethodSpec:
    name: str
    kind: str = "cerm"  # cerm | lr | mlp
    overrides: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> "MethodSpec":
        if "name" not in d:
            raise ValueError("method entry needs a 'name'")
        kind = d.get("kind", "cerm")
        if kind not in ("cerm", "lr", "mlp"):
            raise ValueError(f"method {d['name']!r}: unknown kind {kind!r}")
        return cls(d["name"], kind, dict(d.get("overrides", {})))


DEFAULT_METHODS = [
    MethodSpec("Logistic Regression", "lr", {"c": 0.1, "max_iter": 1000}),
    MethodSpec("MLP", "mlp", {}),
    MethodSpec("CERM (CE only)", "cerm", {"weights.consistency": 0.0, "weights.cosine": 0.0}),
    MethodSpec("CERM", "cerm", {}),
]


@dataclass
class Report:
    rows: list[tuple[str, dict[str, float]]]
    runs: list[dict]

    def table(self) -> str:
        name_w = max([len("Method")] + [len(r[0]) for r in self.rows])
        col_w = [max(len(c), 6) for c in COLUMNS]
        head = f"{'Method':<{name_w}} | " + " | ".join(f"{c:>{w}}" for c, w in zip(COLUMNS, col_w))
        lines = [head, "-" * len(head)]
        for name, vals in self.rows:
            cells = [f"{vals[c]:>{w}.4f}" for c, w in zip(COLUMNS, col_w)]
            lines.append(f"{name:<{name_w}} | " + " | ".join(cells))
        return "\n".join(lines)

    def save(self, table_path, records_path) -> None:
        with open(table_path, "w", encoding="utf-8") as fh:
            fh.write(self.table() + "\n")
        with open(records_path, "w", encoding="utf-8") as fh:
            for r in self.runs:
                fh.write(json.dumps(r, sort_keys=True) + "\n")


def metric_columns(m: Metrics) -> dict[str, float]:
    return dict(zip(COLUMNS, (m.f1["negative"], m.f1["neutral"], m.f1["positive"], m.macro_f1, m.accuracy)))


def compare(
    methods: Sequence[MethodSpec],
    train_set: Sequence[Example],
    test_set: Sequence[Example],
    unlabeled: Sequence[Example] = (),
    base: Optional[TrainConfig] = None,
    seeds: Sequence[int] = (0,),
    embeddings: Optional[EmbeddingTable] = None,
    synonyms=None,
) -> Report:
    """Run every method for every seed on the same split; table rows are seed means."""
    if not methods:
        raise ValueError("compare: no methods given")
    base = base or TrainConfig()
    runs = []
    rows = []
    cache: dict[int, EmbeddingTable] = {}
    for spec in methods:
        per_seed = []
        for seed in seeds:
            cfg = copy.deepcopy(base)
            cfg.seed = seed
            cfg.skipgram.seed = seed
            emb = embeddings
            if emb is None:
                if seed not in cache:
                    pool = list(unlabeled)[: cfg.unlabeled_pool]
                    cache[seed] = train_skipgram(corpus_sentences(list(train_set) + pool), cfg.skipgram)
                emb = cache[seed]
            if spec.kind == "cerm":
                apply_overrides(cfg, spec.overrides)
                model, _ = train(train_set, unlabeled, cfg, embeddings=emb, synonyms=synonyms)
                m = evaluate(model, test_set)
            else:
                x_train = frozen_features(train_set, emb)
                x_test = frozen_features(test_set, emb)
                options = dict(spec.overrides)
                if spec.kind == "mlp":
                    options.setdefault("seed", seed)
                clf = train_baseline(x_train, [ex.label_index for ex in train_set], spec.kind, **options)
                preds = [LABELS[int(i)] for i in clf.predict(x_test)]
                m = compute_metrics(preds, [ex.label for ex in test_set])
            per_seed.append(m)
            runs.append({"method": spec.name, "kind": spec.kind, "seed": seed, **m.record()})
        cols = {c: float(np.mean([metric_columns(m)[c] for m in per_seed])) for c in COLUMNS}
        rows.append((spec.name, cols))
    return Report(rows, runs)
