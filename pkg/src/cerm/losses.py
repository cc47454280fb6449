"""Supervised, consistency and cosine-embedding objectives and their sum."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import tensor as T
from .data import Example
from .tensor import Tensor

LOG_FLOOR = 1e-12


def ce_loss(probs: Tensor, labels: Sequence[int]) -> Tensor:
    """Mean negative log-likelihood of the true class."""
    n = len(labels)
    if n == 0:
        raise ValueError("ce_loss: empty batch")
    if probs.shape[0] != n:
        raise ValueError(f"ce_loss: {probs.shape[0]} rows for {n} labels")
    onehot = np.zeros(probs.shape)
    onehot[np.arange(n), np.asarray(labels, dtype=np.int64)] = 1.0
    return -(T.log(T.clamp_min(probs, LOG_FLOOR)) * onehot).sum() * (1.0 / n)


def kl_rows(p, q: Tensor) -> Tensor:
    """Row-wise KL(p || q).  ``p`` may be an array (constant target) or a Tensor."""
    p_t = p if isinstance(p, Tensor) else Tensor(p)
    log_p = T.log(T.clamp_min(p_t, LOG_FLOOR))
    log_q = T.log(T.clamp_min(q, LOG_FLOOR))
    return (p_t * (log_p - log_q)).sum(axis=-1)


def cosine_phi(h_pos: Tensor, h_neg: Tensor, h_sent: Tensor, margin: float = 0.0) -> Tensor:
    """1 - cos(pos, sent) + max(0, cos(neg, sent) - margin), row-wise."""
    pos = T.cosine_similarity(h_pos, h_sent)
    neg = T.cosine_similarity(h_neg, h_sent)
    return (1.0 - pos) + T.relu(neg - margin)


class NegativeSampler:
    """Uniform draws from the entity vocabulary, excluding the current pair."""

    def __init__(self, entities, seed: int = 0):
        self.entities = sorted({e.casefold() for e in entities})
        if len(self.entities) <= 2:
            raise ValueError(f"negative sampling needs more than 2 distinct entities, got {len(self.entities)}")
        self.rng = np.random.default_rng(seed)

    def sample(self, e1: str, e2: str) -> str:
        banned = {e1.casefold(), e2.casefold()}
        pool = [e for e in self.entities if e not in banned]
        return pool[int(self.rng.integers(len(pool)))]


@dataclass
class UnlabeledDraws:
    """Random quantities for one unlabeled batch, fixed before any forward pass."""

    examples: list[Example]
    augmented: list[list[Example]]  # K lists, each aligned with ``examples``
    negatives: list[str]


def draw_unlabeled(
    examples: Sequence[Example],
    augmenter: Callable[[Example, np.random.Generator], Example],
    sampler: Optional[NegativeSampler],
    rng: np.random.Generator,
    k: int = 1,
    replace: str = "e2",
) -> UnlabeledDraws:
    if k < 1:
        raise ValueError("need at least one augmentation per sample")
    examples = list(examples)
    augmented = [[augmenter(ex, rng) for ex in examples] for _ in range(k)]
    negatives = [sampler.sample(ex.e1, ex.e2) for ex in examples] if sampler is not None and examples else []
    return UnlabeledDraws(examples, augmented, negatives)


def consistency_loss(model, draws: UnlabeledDraws, clean_probs=None, stop_gradient: bool = True,
                     training: bool = False) -> Tensor:
    """Mean over samples and draws of KL(p(y|x) || p(y|x_aug))."""
    if not draws.examples:
        return Tensor(0.0)
    if clean_probs is None:
        clean = model.forward(draws.examples, training=training).probs
        clean_probs = clean.data if stop_gradient else clean
    total = None
    for aug in draws.augmented:
        q = model.forward(aug, training=training).probs
        term = kl_rows(clean_probs, q).mean()
        total = term if total is None else total + term
    return total * (1.0 / len(draws.augmented))


def cosine_loss(model, draws: UnlabeledDraws, margin: float = 0.0, replace: str = "e2",
                training: bool = False, h_pair=None, h_sent=None) -> Tensor:
    exs = draws.examples
    if not exs:
        return Tensor(0.0)
    if len(draws.negatives) != len(exs):
        raise ValueError("cosine_loss: one negative entity per sample is required")
    if h_pair is None or h_sent is None:
        out = model.forward(exs, training=training)
        h_pair, h_sent = out.h_pair, out.h_sent
    if replace == "e2":
        neg_pairs = [(ex.e1, er) for ex, er in zip(exs, draws.negatives)]
    elif replace == "e1":
        neg_pairs = [(er, ex.e2) for ex, er in zip(exs, draws.negatives)]
    else:
        raise ValueError(f"negative replacement must be 'e1' or 'e2', got {replace!r}")
    h_neg = model.forward_pair(neg_pairs)
    return cosine_phi(h_pair, h_neg, h_sent, margin).mean()


@dataclass
class LossWeights:
    ce: float = 1.0
    consistency: float = 1.0
    cosine: float = 1.0


@dataclass
class LossBreakdown:
    ce: float
    consistency: float
    cosine: float
    total: float
    weights: LossWeights = field(default_factory=LossWeights)
    graph: Optional[Tensor] = field(default=None, repr=False, compare=False)

    def record(self) -> dict:
        return {"ce": self.ce, "consistency": self.consistency, "cosine": self.cosine, "total": self.total}


def joint_loss(
    model,
    labeled: Sequence[Example],
    draws: Optional[UnlabeledDraws],
    weights: Optional[LossWeights] = None,
    margin: float = 0.0,
    replace: str = "e2",
    stop_gradient: bool = True,
    clean_probs=None,
    training: bool = False,
) -> LossBreakdown:
    """Weighted sum of the three objectives; ``graph`` is the differentiable total."""
    weights = weights or LossWeights()
    labeled = list(labeled)
    has_unlabeled = draws is not None and bool(draws.examples)
    if not labeled and not has_unlabeled:
        raise ValueError("joint_loss: both batches are empty")
    use_con = has_unlabeled and bool(weights.consistency)
    use_cos = has_unlabeled and bool(weights.cosine)
    # one encoder pass over every sentence; padding is masked so rows do not interact
    batch = list(labeled)
    if use_con or use_cos:
        batch += draws.examples
    if use_con:
        for aug in draws.augmented:
            batch += aug
    out = model.forward(batch, training=training) if batch else None
    n_lab, n_unl = len(labeled), len(draws.examples) if has_unlabeled else 0
    ce = ce_loss(out.probs[:n_lab], [ex.label_index for ex in labeled]) if labeled else Tensor(0.0)
    con = Tensor(0.0)
    cos = Tensor(0.0)
    if use_con:
        if clean_probs is None:
            clean = out.probs[n_lab : n_lab + n_unl]
            clean_probs = clean.data if stop_gradient else clean
        for j in range(1, len(draws.augmented) + 1):
            start = n_lab + j * n_unl
            term = kl_rows(clean_probs, out.probs[start : start + n_unl]).mean()
            con = term if j == 1 else con + term
        con = con * (1.0 / len(draws.augmented))
    if use_cos:
        rows = slice(n_lab, n_lab + n_unl)
        cos = cosine_loss(model, draws, margin, replace, training, out.h_pair[rows], out.h_sent[rows])
    total = ce * weights.ce + con * weights.consistency + cos * weights.cosine
    return LossBreakdown(ce.item(), con.item(), cos.item(), total.item(), weights, total)
