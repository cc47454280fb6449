"""Sentence path: [CTX] marking, tokenization and two sentence encoders.

``PrecomputedEncoder`` looks up stored vectors by sentence id.
``TinyTransformer`` is a small trainable self-attention encoder whose first
blocks can be frozen with :func:`set_trainable_suffix`.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from . import tensor as T
from .tensor import Tensor
from .text import CTX, entity_spans, words

PAD, UNK, START = "[PAD]", "[UNK]", "[START]"
SPECIALS = (PAD, UNK, CTX, START)
PAD_ID, UNK_ID, CTX_ID, START_ID = range(4)


class EntityNotFound(ValueError):
    def __init__(self, entity: str, sentence: str):
        super().__init__(f"entity {entity!r} does not occur in sentence {sentence!r}")
        self.entity = entity


@dataclass
class MarkedSentence:
    sentence: str
    tokens: list[str]
    e1_spans: list[tuple[int, int]]
    e2_spans: list[tuple[int, int]]
    sentence_id: Optional[str] = None

    @property
    def text(self) -> str:
        return " ".join(self.tokens)


def mark_ctx(sentence: str, e1: str, e2: str, sentence_id: Optional[str] = None) -> MarkedSentence:
    """Wrap every occurrence of ``e1`` and ``e2`` in ``[CTX]`` tokens.

    Existing ``[CTX]`` tokens are dropped first, so marking is idempotent.
    Spans index into the unmarked token list.
    """
    base = [t for t in words(sentence) if t != CTX]
    spans = entity_spans(base, [e1, e2])
    key1, key2 = e1, e2
    s1 = [(s, e) for s, e, ent in spans if ent == key1]
    s2 = [(s, e) for s, e, ent in spans if ent == key2]
    if not s1:
        raise EntityNotFound(e1, sentence)
    if not s2:
        raise EntityNotFound(e2, sentence)
    starts = {s: e for s, e, _ in spans}
    out: list[str] = []
    i = 0
    while i < len(base):
        end = starts.get(i)
        if end is None:
            out.append(base[i])
            i += 1
        else:
            out.append(CTX)
            out.extend(base[i:end])
            out.append(CTX)
            i = end
    return MarkedSentence(sentence, out, s1, s2, sentence_id)


class Vocabulary:
    """Token ↔ id map with reserved ids for the special tokens."""

    def __init__(self, tokens: Iterable[str] = ()):
        self.itos: list[str] = list(SPECIALS)
        self.stoi: dict[str, int] = {t: i for i, t in enumerate(self.itos)}
        for t in tokens:
            self.add(t)

    def add(self, token: str) -> int:
        idx = self.stoi.get(token)
        if idx is None:
            idx = len(self.itos)
            self.itos.append(token)
            self.stoi[token] = idx
        return idx

    @classmethod
    def build(cls, texts: Iterable[str]) -> "Vocabulary":
        seen: dict[str, None] = {}
        for text in texts:
            for t in words(text):
                seen.setdefault(t, None)
        return cls(sorted(t for t in seen if t not in SPECIALS))

    def __len__(self) -> int:
        return len(self.itos)

    def tokenize(self, text: str) -> list[int]:
        return [START_ID] + [self.stoi.get(t, UNK_ID) for t in words(text)]

    def detokenize(self, ids: Sequence[int]) -> str:
        return " ".join(self.itos[i] for i in ids if i not in (START_ID, PAD_ID))


@dataclass
class EncoderConfig:
    backend: str = "tiny-transformer"
    dim: int = 64
    layers: int = 2
    heads: int = 2
    ffn_dim: int = 128
    max_len: int = 128
    trainable_suffix: int = 2
    pooling: str = "first"

    def validate(self) -> None:
        if self.backend not in ("tiny-transformer", "precomputed"):
            raise ValueError(f"encoder.backend: unknown backend {self.backend!r}")
        if self.backend == "precomputed":
            return
        if self.dim % self.heads:
            raise ValueError(f"encoder.dim ({self.dim}) must be divisible by encoder.heads ({self.heads})")
        if not 0 <= self.trainable_suffix <= self.layers:
            raise ValueError(f"encoder.trainable_suffix must be in [0, {self.layers}], got {self.trainable_suffix}")
        if self.pooling not in ("first", "mean"):
            raise ValueError(f"encoder.pooling: unknown mode {self.pooling!r}")
        if self.max_len < 2:
            raise ValueError("encoder.max_len must be at least 2")


class PrecomputedEncoder:
    """Returns vectors stored per sentence id; nothing to train."""

    trainable = False

    def __init__(self, vectors: dict[str, np.ndarray]):
        if not vectors:
            raise ValueError("precomputed encoder needs at least one vector")
        dims = {len(v) for v in vectors.values()}
        if len(dims) != 1:
            raise ValueError(f"precomputed vectors have inconsistent dimensions {sorted(dims)}")
        self.vectors = {k: np.asarray(v, dtype=np.float64) for k, v in vectors.items()}
        self.dim = dims.pop()

    @classmethod
    def load(cls, path) -> "PrecomputedEncoder":
        vectors = {}
        with open(path, encoding="utf-8") as fh:
            for n, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                sid, sep, rest = line.rstrip("\n").partition("\t")
                if not sep:
                    raise ValueError(f"{path}:{n}: expected '<id>\\t<values>'")
                try:
                    vectors[sid] = np.array([float(x) for x in rest.split()])
                except ValueError as exc:
                    raise ValueError(f"{path}:{n}: {exc}") from None
        return cls(vectors)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for sid, v in self.vectors.items():
                fh.write(sid + "\t" + " ".join(repr(float(x)) for x in v) + "\n")

    def parameters(self) -> dict[str, Tensor]:
        return {}

    def encode_batch(self, marked: Sequence[MarkedSentence], training: bool = False) -> Tensor:
        rows = []
        for m in marked:
            if m.sentence_id is None or m.sentence_id not in self.vectors:
                raise KeyError(f"no precomputed vector for sentence id {m.sentence_id!r}")
            rows.append(self.vectors[m.sentence_id])
        return Tensor(np.stack(rows))

    def encode(self, marked: MarkedSentence) -> np.ndarray:
        return self.encode_batch([marked]).data[0]


def sinusoidal_positions(length: int, dim: int) -> np.ndarray:
    pos = np.arange(length)[:, None]
    i = np.arange(dim)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / dim)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle))


class TinyTransformer:
    """Post-norm self-attention encoder with a dense+tanh pooling head."""

    trainable = True

    def __init__(self, vocab: Vocabulary, config: EncoderConfig, rng: np.random.Generator):
        config.validate()
        self.vocab = vocab
        self.config = config
        self.dim = config.dim
        d, f = config.dim, config.ffn_dim
        p: dict[str, Tensor] = {}
        p["tok_emb"] = T.parameter(T.glorot_uniform(len(vocab), d, rng), "tok_emb")
        for b in range(config.layers):
            for w in ("q", "k", "v", "o"):
                p[f"block{b}.w{w}"] = T.parameter(T.glorot_uniform(d, d, rng))
                p[f"block{b}.b{w}"] = T.parameter(np.zeros(d))
            p[f"block{b}.ln1.g"] = T.parameter(np.ones(d))
            p[f"block{b}.ln1.b"] = T.parameter(np.zeros(d))
            p[f"block{b}.ff1.w"] = T.parameter(T.glorot_uniform(d, f, rng))
            p[f"block{b}.ff1.b"] = T.parameter(np.zeros(f))
            p[f"block{b}.ff2.w"] = T.parameter(T.glorot_uniform(f, d, rng))
            p[f"block{b}.ff2.b"] = T.parameter(np.zeros(d))
            p[f"block{b}.ln2.g"] = T.parameter(np.ones(d))
            p[f"block{b}.ln2.b"] = T.parameter(np.zeros(d))
        p["pool.w"] = T.parameter(T.glorot_uniform(d, d, rng))
        p["pool.b"] = T.parameter(np.zeros(d))
        for name, t in p.items():
            t.name = name
        self.params = p
        self._pos = sinusoidal_positions(config.max_len, d)
        set_trainable_suffix(self, config.trainable_suffix)

    def parameters(self) -> dict[str, Tensor]:
        return self.params

    def _ids(self, marked: Sequence[MarkedSentence]) -> tuple[np.ndarray, np.ndarray]:
        seqs = [self.vocab.tokenize(m.text)[: self.config.max_len] for m in marked]
        width = max(len(s) for s in seqs)
        ids = np.full((len(seqs), width), PAD_ID, dtype=np.int64)
        mask = np.zeros((len(seqs), width), dtype=bool)
        for i, s in enumerate(seqs):
            ids[i, : len(s)] = s
            mask[i, : len(s)] = True
        return ids, mask

    def _block(self, x: Tensor, b: int, pad: np.ndarray) -> Tensor:
        p = self.params
        B, L, d = x.shape
        h = self.config.heads
        dh = d // h

        def heads(t: Tensor) -> Tensor:
            return t.reshape(B, L, h, dh).transpose(0, 2, 1, 3)

        q = heads(T.linear(x, p[f"block{b}.wq"], p[f"block{b}.bq"]))
        k = heads(T.linear(x, p[f"block{b}.wk"], p[f"block{b}.bk"]))
        v = heads(T.linear(x, p[f"block{b}.wv"], p[f"block{b}.bv"]))
        scores = T.matmul(q, k.transpose(0, 1, 3, 2)) * (1.0 / np.sqrt(dh))
        scores = T.masked_fill(scores, pad[:, None, None, :], -1e9)
        attn = T.matmul(T.softmax(scores, axis=-1), v)
        attn = attn.transpose(0, 2, 1, 3).reshape(B, L, d)
        x = T.layer_norm(x + T.linear(attn, p[f"block{b}.wo"], p[f"block{b}.bo"]), p[f"block{b}.ln1.g"], p[f"block{b}.ln1.b"])
        ff = T.linear(T.relu(T.linear(x, p[f"block{b}.ff1.w"], p[f"block{b}.ff1.b"])), p[f"block{b}.ff2.w"], p[f"block{b}.ff2.b"])
        return T.layer_norm(x + ff, p[f"block{b}.ln2.g"], p[f"block{b}.ln2.b"])

    def encode_batch(self, marked: Sequence[MarkedSentence], training: bool = False) -> Tensor:
        ids, mask = self._ids(marked)
        x = T.embedding(self.params["tok_emb"], ids) + self._pos[: ids.shape[1]]
        for b in range(self.config.layers):
            x = self._block(x, b, ~mask)
        if self.config.pooling == "first":
            pooled = x[:, 0, :]
        else:
            weights = mask / mask.sum(axis=1, keepdims=True)
            pooled = (x * weights[:, :, None]).sum(axis=1)
        return T.tanh(T.linear(pooled, self.params["pool.w"], self.params["pool.b"]))

    def encode(self, marked: MarkedSentence) -> np.ndarray:
        return self.encode_batch([marked]).data[0]

    def state(self) -> tuple[dict[str, np.ndarray], dict]:
        meta = {"config": asdict(self.config), "vocab": self.vocab.itos}
        return {k: v.data for k, v in self.params.items()}, meta

    @classmethod
    def from_state(cls, tensors: dict[str, np.ndarray], meta: dict) -> "TinyTransformer":
        vocab = Vocabulary(t for t in meta["vocab"] if t not in SPECIALS)
        enc = cls(vocab, EncoderConfig(**meta["config"]), np.random.default_rng(0))
        for k, t in enc.params.items():
            t.data = np.array(tensors[k], dtype=np.float64)
        return enc


def set_trainable_suffix(encoder: TinyTransformer, k: int) -> TinyTransformer:
    """Enable gradients only for the last ``k`` blocks (and the pooling head when k ≥ 1).

    Token embeddings are trained only when every block is (k == layers).
    """
    layers = encoder.config.layers
    if not 0 <= k <= layers:
        raise ValueError(f"trainable suffix must be in [0, {layers}], got {k}")
    encoder.config.trainable_suffix = k
    first = layers - k
    for name, t in encoder.params.items():
        if name.startswith("block"):
            t.requires_grad = int(name[5 : name.index(".")]) >= first
        elif name.startswith("pool."):
            t.requires_grad = k >= 1
        else:
            t.requires_grad = k == layers and k > 0
        if not t.requires_grad:
            t.grad = None
    return encoder


def build_encoder(config: EncoderConfig, texts: Iterable[str] = (), rng: Optional[np.random.Generator] = None,
                  vectors_path=None):
    config.validate()
    if config.backend == "precomputed":
        if vectors_path is None:
            raise ValueError("precomputed backend needs a sentence-vector file")
        return PrecomputedEncoder.load(vectors_path)
    return TinyTransformer(Vocabulary.build(texts), config, rng or np.random.default_rng(0))
