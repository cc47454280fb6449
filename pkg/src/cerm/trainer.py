"""Semi-supervised training loop, evaluation and run history."""

from __future__ import annotations

import json
import logging
import math
import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .augment import Augmenter, EmbeddingSynonyms, LexiconSynonyms, NoSynonyms
from .config import TrainConfig
from .data import Example
from .embeddings import EmbeddingTable, train_skipgram
from .encoder import build_encoder, mark_ctx
from .losses import NegativeSampler, draw_unlabeled, joint_loss
from .metrics import Metrics, compute_metrics
from .model import CermModel
from .optim import Adam, GradientAccumulator
from .text import words

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


def code_version() -> str:
    try:
        desc = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=Path(__file__).parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
        if desc.returncode == 0 and desc.stdout.strip():
            return f"{__version__}+{desc.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


@dataclass
class RunHistory:
    config: dict
    seed: int
    version: str
    steps: list[dict] = field(default_factory=list)
    epochs: list[dict] = field(default_factory=list)
    notes: dict = field(default_factory=dict)

    def records(self) -> list[dict]:
        head = {"type": "run", "seed": self.seed, "version": self.version, "config": self.config, "notes": self.notes}
        return [head] + [{"type": "step", **s} for s in self.steps] + [{"type": "epoch", **e} for e in self.epochs]

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for rec in self.records():
                fh.write(json.dumps(rec, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "RunHistory":
        with open(path, encoding="utf-8") as fh:
            recs = [json.loads(line) for line in fh if line.strip()]
        head = recs[0]
        hist = cls(head["config"], head["seed"], head["version"], notes=head.get("notes", {}))
        for r in recs[1:]:
            kind = r.pop("type")
            (hist.steps if kind == "step" else hist.epochs).append(r)
        return hist


def evaluate(model: CermModel, examples: Sequence[Example]) -> Metrics:
    if not examples:
        raise ValueError("evaluate: empty test set")
    return compute_metrics(model.predict(examples), [ex.label for ex in examples])


def corpus_sentences(examples: Sequence[Example]) -> list[list[str]]:
    return [words(ex.sentence) for ex in examples]


def _cycle(items: list, rng: np.random.Generator):
    while True:
        for i in rng.permutation(len(items)):
            yield items[i]


def train(
    labeled: Sequence[Example],
    unlabeled: Sequence[Example],
    config: TrainConfig,
    embeddings: Optional[EmbeddingTable] = None,
    synonyms=None,
    test: Optional[Sequence[Example]] = None,
    sentence_vectors: Optional[str] = None,
) -> tuple[CermModel, RunHistory]:
    """Train CERM on labeled examples plus an unlabeled pool.

    Every optimizer step consumes ``accumulation_steps`` labeled micro-batches,
    each paired with an equally sized unlabeled batch.
    """
    config.validate()
    labeled = list(labeled)
    if not labeled:
        raise ValueError("train: no labeled examples")
    if any(ex.label is None for ex in labeled):
        raise ValueError("train: labeled set contains unlabeled examples")
    seeds = np.random.SeedSequence(config.seed).spawn(8)
    split_rng, pool_rng, init_rng, order_rng, unl_rng, aug_rng, enc_rng, _ = (np.random.default_rng(s) for s in seeds)

    validation: list[Example] = []
    if config.validation_fraction > 0 and len(labeled) >= 10:
        perm = split_rng.permutation(len(labeled))
        n_val = max(1, int(math.floor(config.validation_fraction * len(labeled) + 0.5)))
        validation = [labeled[i] for i in perm[:n_val]]
        labeled = [labeled[i] for i in perm[n_val:]]

    unlabeled = list(unlabeled)
    pool_size = min(config.unlabeled_pool, len(unlabeled))
    if pool_size < config.unlabeled_pool and unlabeled:
        log.info("unlabeled pool clamped to %d available examples", pool_size)
    pool = [unlabeled[i] for i in sorted(pool_rng.choice(len(unlabeled), size=pool_size, replace=False))] if pool_size else []

    if embeddings is None:
        embeddings = train_skipgram(corpus_sentences(labeled + pool), config.skipgram)

    if synonyms is None:
        synonyms = {"embedding": lambda: EmbeddingSynonyms(embeddings), "none": NoSynonyms}.get(
            config.synonym_source, NoSynonyms
        )()
    texts = [mark_ctx(ex.sentence, ex.e1, ex.e2).text for ex in labeled + pool]
    if isinstance(synonyms, LexiconSynonyms):
        texts.append(" ".join(w for k, v in synonyms.table.items() for w in [k, *v]))
    encoder = build_encoder(config.encoder, texts, enc_rng, sentence_vectors)
    model = CermModel(embeddings, encoder, config.hidden, config.hidden, rng=init_rng)

    augmenter = Augmenter(config.eda, synonyms)
    sampler = None
    if pool and config.weights.cosine:
        sampler = NegativeSampler([e for ex in labeled + pool for e in (ex.e1, ex.e2)], seed=config.seed)

    history = RunHistory(config.to_dict(), config.seed, code_version())
    history.notes = {"labeled": len(labeled), "validation": len(validation), "unlabeled_pool": len(pool)}
    params = model.trainable_parameters()
    optim = Adam(params, lr=config.lr)
    unl_iter = _cycle(pool, unl_rng) if pool else None
    micro = config.batch_size
    step = 0
    best: Optional[tuple[float, dict]] = None

    for epoch in range(1, config.epochs + 1):
        order = order_rng.permutation(len(labeled))
        batches = [[labeled[i] for i in order[s : s + micro]] for s in range(0, len(order), micro)]
        for g in range(0, len(batches), config.accumulation_steps):
            acc = GradientAccumulator()
            parts = []
            for batch in batches[g : g + config.accumulation_steps]:
                draws = None
                if unl_iter is not None:
                    unl = [next(unl_iter) for _ in range(len(batch))]
                    draws = draw_unlabeled(unl, augmenter, sampler, aug_rng, config.augmentations, config.negative_replace)
                for p in params.values():
                    p.grad = None
                loss = joint_loss(
                    model, batch, draws, config.weights, config.margin, config.negative_replace,
                    config.stop_gradient, training=True,
                )
                if not all(np.isfinite([loss.ce, loss.consistency, loss.cosine, loss.total])):
                    raise TrainingError(f"non-finite loss at step {step + 1} (epoch {epoch}): {loss.record()}")
                loss.graph.backward()
                acc.add({n: p.grad for n, p in params.items()}, len(batch))
                parts.append(loss.record())
            optim.step(acc.result())
            step += 1
            rec = {k: float(np.mean([p[k] for p in parts])) for k in parts[0]}
            history.steps.append({"step": step, "epoch": epoch, **rec})
        entry: dict = {"epoch": epoch, "mean_total": float(np.mean([s["total"] for s in history.steps if s["epoch"] == epoch]))}
        if validation:
            entry["validation"] = evaluate(model, validation).record()
        if config.select_on_test and test:
            m = evaluate(model, test)
            entry["test"] = m.record()
            if best is None or m.macro_f1 > best[0]:
                best = (m.macro_f1, {n: t.data.copy() for n, t in model.parameters().items()})
        history.epochs.append(entry)
        log.info("epoch %d: %s", epoch, {k: v for k, v in entry.items() if k != "epoch"})

    if best is not None:
        for n, t in model.parameters().items():
            t.data = best[1][n]
        history.notes["selected_macro_f1_on_test"] = best[0]
    return model, history
