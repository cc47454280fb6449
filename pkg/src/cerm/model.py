"""CERM: entity-pair layer D1, sentence layer D2, classifier C over [D1 ; D2]."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from . import tensor as T
from .checkpoint import load_tensors, save_tensors
from .data import LABELS, Example
from .embeddings import EmbeddingTable, SkipGramConfig, SubwordVocab
from .encoder import MarkedSentence, PrecomputedEncoder, TinyTransformer, mark_ctx
from .tensor import Tensor
from .text import words


@dataclass
class ForwardOutput:
    h_pair: Tensor
    h_sent: Tensor
    logits: Tensor
    probs: Tensor


def _entity_key(entity: str) -> str:
    return " ".join(words(entity))


@lru_cache(maxsize=1 << 16)
def _marked(sentence: str, e1: str, e2: str, sentence_id: Optional[str]) -> MarkedSentence:
    # shared instances; callers must not mutate them
    return mark_ctx(sentence, e1, e2, sentence_id)


class CermModel:
    def __init__(
        self,
        embeddings: EmbeddingTable,
        encoder,
        pair_hidden: int = 100,
        sent_hidden: int = 100,
        pair_layers: int = 1,
        sent_layers: int = 1,
        rng: Optional[np.random.Generator] = None,
    ):
        if pair_hidden != sent_hidden:
            raise ValueError(f"D1 and D2 must have the same output size, got {pair_hidden} and {sent_hidden}")
        if pair_layers < 1 or sent_layers < 1:
            raise ValueError("D1/D2 need at least one layer")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.embeddings = embeddings
        self.encoder = encoder
        self.hidden = pair_hidden
        self.pair_layers = pair_layers
        self.sent_layers = sent_layers
        h = pair_hidden
        head: dict[str, Tensor] = {}
        fan = 2 * embeddings.dim
        for i in range(pair_layers):
            head[f"d1.{i}.w"] = T.parameter(T.glorot_uniform(fan, h, rng))
            head[f"d1.{i}.b"] = T.parameter(np.zeros(h))
            fan = h
        fan = encoder.dim
        for i in range(sent_layers):
            head[f"d2.{i}.w"] = T.parameter(T.glorot_uniform(fan, h, rng))
            head[f"d2.{i}.b"] = T.parameter(np.zeros(h))
            fan = h
        head["c.w"] = T.parameter(T.glorot_uniform(2 * h, len(LABELS), rng))
        head["c.b"] = T.parameter(np.zeros(len(LABELS)))
        for name, t in head.items():
            t.name = name
        self.head = head
        self._entity_cache: dict[str, np.ndarray] = {}

    def parameters(self) -> dict[str, Tensor]:
        params = dict(self.head)
        for name, t in self.encoder.parameters().items():
            params[f"encoder.{name}"] = t
        return params

    def trainable_parameters(self) -> dict[str, Tensor]:
        return {n: t for n, t in self.parameters().items() if t.requires_grad}

    # pieces

    def entity_vector(self, entity: str) -> np.ndarray:
        key = _entity_key(entity)
        vec = self._entity_cache.get(key)
        if vec is None:
            vec = self.embeddings.embed_entity(key)
            self._entity_cache[key] = vec
        return vec

    def forward_pair(self, pairs: Sequence[tuple[str, str]]) -> Tensor:
        for e1, e2 in pairs:
            if e1.casefold() == e2.casefold():
                raise ValueError(f"entity pair must be distinct, got {e1!r} twice")
        z = np.stack([np.concatenate([self.entity_vector(a), self.entity_vector(b)]) for a, b in pairs])
        x = Tensor(z)
        for i in range(self.pair_layers):
            x = T.relu(T.linear(x, self.head[f"d1.{i}.w"], self.head[f"d1.{i}.b"]))
        return x

    def forward_sentence(self, marked: Sequence[MarkedSentence], training: bool = False) -> Tensor:
        x = self.encoder.encode_batch(marked, training=training)
        for i in range(self.sent_layers):
            x = T.relu(T.linear(x, self.head[f"d2.{i}.w"], self.head[f"d2.{i}.b"]))
        return x

    def classify(self, h_pair: Tensor, h_sent: Tensor) -> tuple[Tensor, Tensor]:
        logits = T.linear(T.concat([h_pair, h_sent], axis=-1), self.head["c.w"], self.head["c.b"])
        return logits, T.softmax(logits, axis=-1)

    def forward(self, examples: Sequence[Example], training: bool = False) -> ForwardOutput:
        if not examples:
            raise ValueError("forward: empty batch")
        h_pair = self.forward_pair([(ex.e1, ex.e2) for ex in examples])
        marked = [_marked(ex.sentence, ex.e1, ex.e2, ex.id) for ex in examples]
        h_sent = self.forward_sentence(marked, training)
        logits, probs = self.classify(h_pair, h_sent)
        return ForwardOutput(h_pair, h_sent, logits, probs)

    # single-example conveniences

    def forward_one(self, e1: str, e2: str, sentence: str, sentence_id: Optional[str] = None) -> ForwardOutput:
        if e1.casefold() == e2.casefold():
            raise ValueError(f"entity pair must be distinct, got {e1!r} twice")
        marked = mark_ctx(sentence, e1, e2, sentence_id)
        h_pair = self.forward_pair([(e1, e2)])
        h_sent = self.forward_sentence([marked])
        logits, probs = self.classify(h_pair, h_sent)
        return ForwardOutput(h_pair, h_sent, logits, probs)

    def forward_pair_only(self, e1: str, e2: str) -> np.ndarray:
        return self.forward_pair([(e1, e2)]).data[0]

    def forward_sentence_only(self, sentence: str, e1: str, e2: str, sentence_id: Optional[str] = None) -> np.ndarray:
        return self.forward_sentence([mark_ctx(sentence, e1, e2, sentence_id)]).data[0]

    def predict_proba(self, examples: Sequence[Example], batch_size: int = 256) -> np.ndarray:
        out = []
        for i in range(0, len(examples), batch_size):
            out.append(self.forward(examples[i : i + batch_size]).probs.data)
        return np.concatenate(out) if out else np.zeros((0, len(LABELS)))

    def predict(self, examples: Sequence[Example]) -> list[str]:
        return [LABELS[i] for i in argmax_labels(self.predict_proba(examples))]

    def predict_one(self, e1: str, e2: str, sentence: str) -> str:
        return LABELS[int(argmax_labels(self.forward_one(e1, e2, sentence).probs.data)[0])]

    # persistence

    def save(self, path, extra: Optional[dict] = None) -> None:
        tensors = {f"head.{k}": v.data for k, v in self.head.items()}
        meta: dict = {
            "classes": list(LABELS),
            "hidden": self.hidden,
            "pair_layers": self.pair_layers,
            "sent_layers": self.sent_layers,
        }
        if isinstance(self.encoder, TinyTransformer):
            enc_tensors, enc_meta = self.encoder.state()
            tensors.update({f"encoder.{k}": v for k, v in enc_tensors.items()})
            meta["encoder"] = {"backend": "tiny-transformer", **enc_meta}
        else:
            ids = list(self.encoder.vectors)
            tensors["encoder.vectors"] = np.stack([self.encoder.vectors[i] for i in ids])
            meta["encoder"] = {"backend": "precomputed", "ids": ids}
        emb = self.embeddings
        tensors["static.words"] = emb.word_vectors
        bucket_ids = sorted(emb.bucket_rows)
        tensors["static.bucket_vectors"] = (
            emb.bucket_vectors[[emb.bucket_rows[b] for b in bucket_ids]] if bucket_ids else emb.bucket_vectors
        )
        meta["static"] = {
            "words": emb.vocab.words,
            "counts": emb.vocab.counts,
            "bucket_ids": bucket_ids,
            "config": vars(emb.config),
            "subwords": emb.subwords,
        }
        if extra:
            meta.update(extra)
        save_tensors(path, tensors, meta)

    @classmethod
    def load(cls, path) -> "CermModel":
        tensors, meta = load_tensors(path)
        if tuple(meta.get("classes", ())) != LABELS:
            raise ValueError(f"{path}: unexpected class order {meta.get('classes')}")
        st = meta["static"]
        cfg = SkipGramConfig(**st["config"])
        vocab = SubwordVocab(st["words"], st["counts"], cfg.n_min, cfg.n_max, cfg.buckets)
        emb = EmbeddingTable(
            vocab, tensors["static.words"], st["bucket_ids"], tensors["static.bucket_vectors"], cfg, st["subwords"]
        )
        enc_meta = meta["encoder"]
        if enc_meta["backend"] == "tiny-transformer":
            enc_tensors = {k[len("encoder.") :]: v for k, v in tensors.items() if k.startswith("encoder.")}
            encoder = TinyTransformer.from_state(enc_tensors, enc_meta)
        else:
            encoder = PrecomputedEncoder(dict(zip(enc_meta["ids"], tensors["encoder.vectors"])))
        model = cls(emb, encoder, meta["hidden"], meta["hidden"], meta["pair_layers"], meta["sent_layers"])
        for k, t in model.head.items():
            t.data = np.array(tensors[f"head.{k}"])
        return model


def argmax_labels(probs: np.ndarray) -> np.ndarray:
    """Row-wise argmax; ties go to the earliest class in (negative, neutral, positive)."""
    return np.argmax(np.asarray(probs), axis=-1)
