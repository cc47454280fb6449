"""Supervised baselines over frozen features: logistic regression and a one-hidden-layer MLP."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from sklearn.linear_model import LogisticRegression

from . import tensor as T
from .data import Example
from .encoder import PrecomputedEncoder
from .losses import ce_loss
from .optim import Adam
from .text import CTX, words


def frozen_features(examples: Sequence[Example], embeddings, encoder=None) -> np.ndarray:
    """z(e1) ⊕ z(e2) ⊕ sentence vector.

    The sentence vector comes from a precomputed encoder when one is given,
    otherwise it is the mean static embedding of the sentence tokens.
    """
    from .encoder import mark_ctx

    rows = []
    for ex in examples:
        z1 = embeddings.embed_entity(" ".join(words(ex.e1)))
        z2 = embeddings.embed_entity(" ".join(words(ex.e2)))
        if isinstance(encoder, PrecomputedEncoder):
            sent = encoder.encode(mark_ctx(ex.sentence, ex.e1, ex.e2, ex.id))
        else:
            toks = [t for t in words(ex.sentence) if t != CTX]
            sent = np.mean([embeddings.embed_word(t) for t in toks], axis=0)
        rows.append(np.concatenate([z1, z2, sent]))
    return np.stack(rows)


def _check(features: np.ndarray, labels: Sequence[int]) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    if len(features) != len(labels):
        raise ValueError(f"{len(features)} feature rows for {len(labels)} labels")
    return features


class LogisticBaseline:
    def __init__(self, c: float = 0.1, max_iter: int = 1000):
        self.c = c
        self.max_iter = max_iter
        self.model = LogisticRegression(C=c, max_iter=max_iter)

    def fit(self, features, labels: Sequence[int]) -> "LogisticBaseline":
        self.model.fit(_check(features, labels), np.asarray(labels))
        return self

    def predict(self, features) -> np.ndarray:
        return self.model.predict(np.asarray(features, dtype=np.float64))

    @property
    def weight_norm(self) -> float:
        return float(np.linalg.norm(self.model.coef_))


@dataclass
class MLPConfig:
    hidden: int = 200
    dropout: float = 0.5
    lr: float = 5e-5
    batch_size: int = 32
    epochs: int = 50
    n_classes: int = 3
    seed: int = 0


class MLPBaseline:
    def __init__(self, config: Optional[MLPConfig] = None):
        self.config = config or MLPConfig()
        self.params: dict[str, T.Tensor] = {}

    def _forward(self, x: np.ndarray, training: bool, rng: Optional[np.random.Generator] = None) -> T.Tensor:
        p = self.params
        h = T.relu(T.linear(T.Tensor(x), p["w1"], p["b1"]))
        h = T.dropout(h, self.config.dropout, rng, training)
        return T.softmax(T.linear(h, p["w2"], p["b2"]), axis=-1)

    def fit(self, features, labels: Sequence[int]) -> "MLPBaseline":
        x = _check(features, labels)
        y = np.asarray(labels, dtype=np.int64)
        cfg = self.config
        rng = np.random.default_rng(cfg.seed)
        self.params = {
            "w1": T.parameter(T.glorot_uniform(x.shape[1], cfg.hidden, rng)),
            "b1": T.parameter(np.zeros(cfg.hidden)),
            "w2": T.parameter(T.glorot_uniform(cfg.hidden, cfg.n_classes, rng)),
            "b2": T.parameter(np.zeros(cfg.n_classes)),
        }
        opt = Adam(self.params, lr=cfg.lr)
        for _ in range(cfg.epochs):
            order = rng.permutation(len(x))
            for s in range(0, len(x), cfg.batch_size):
                idx = order[s : s + cfg.batch_size]
                opt.zero_grad()
                ce_loss(self._forward(x[idx], True, rng), y[idx]).backward()
                opt.step()
        return self

    def predict_proba(self, features) -> np.ndarray:
        return self._forward(np.asarray(features, dtype=np.float64), training=False).data

    def predict(self, features) -> np.ndarray:
        return np.argmax(self.predict_proba(features), axis=-1)


def train_baseline(features, labels: Sequence[int], kind: str, **options):
    if kind == "lr":
        return LogisticBaseline(**options).fit(features, labels)
    if kind == "mlp":
        return MLPBaseline(MLPConfig(**options)).fit(features, labels)
    raise ValueError(f"unknown baseline kind {kind!r}")
