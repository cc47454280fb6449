"""Subword skip-gram embeddings with negative sampling (fastText style).

Words are represented by their own vector plus the vectors of their hashed
character n-grams, so any non-empty string has an embedding.  Only buckets
touched by the training vocabulary are materialised; any other bucket gets a
deterministic vector drawn from the same initial distribution.
"""

from __future__ import annotations

import ast
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

log = logging.getLogger(__name__)

FNV_OFFSET = 2166136261
FNV_PRIME = 16777619


@dataclass
class SkipGramConfig:
    dim: int = 200
    negatives: int = 5
    window: int = 30
    lr: float = 0.1
    epochs: int = 5
    n_min: int = 1
    n_max: int = 6
    buckets: int = 2**21
    min_count: int = 1
    seed: int = 0


def ngrams(word: str, n_min: int, n_max: int) -> list[str]:
    """Character n-grams of ``<word>`` with length in [n_min, n_max]."""
    if not word:
        raise ValueError("ngrams: word must be non-empty")
    if n_min < 1 or n_min > n_max:
        raise ValueError(f"ngrams: invalid range [{n_min}, {n_max}]")
    wrapped = f"<{word}>"
    out = []
    for i in range(len(wrapped)):
        for n in range(n_min, n_max + 1):
            if i + n > len(wrapped):
                break
            out.append(wrapped[i : i + n])
    return out


def fnv1a(text: str) -> int:
    h = FNV_OFFSET
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * FNV_PRIME) & 0xFFFFFFFF
    return h


@dataclass
class SubwordVocab:
    words: list[str]
    counts: list[int]
    n_min: int = 1
    n_max: int = 6
    buckets: int = 2**21
    index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        if self.n_min > self.n_max:
            raise ValueError("n_min must not exceed n_max")
        self.index = {w: i for i, w in enumerate(self.words)}

    def bucket(self, gram: str) -> int:
        return fnv1a(gram) % self.buckets

    def subword_buckets(self, word: str) -> list[int]:
        return [self.bucket(g) for g in ngrams(word, self.n_min, self.n_max)]


class EmbeddingTable:
    """Trained word and n-gram bucket vectors (the static embedding model)."""

    def __init__(
        self,
        vocab: SubwordVocab,
        word_vectors: np.ndarray,
        bucket_ids: Sequence[int],
        bucket_vectors: np.ndarray,
        config: SkipGramConfig,
        subwords: bool = True,
    ):
        self.vocab = vocab
        self.word_vectors = np.asarray(word_vectors, dtype=np.float64)
        self.bucket_rows = {int(b): i for i, b in enumerate(bucket_ids)}
        self.bucket_vectors = np.asarray(bucket_vectors, dtype=np.float64).reshape(
            len(self.bucket_rows), self.word_vectors.shape[1]
        )
        self.config = config
        self.subwords = subwords
        self._lazy: dict[int, np.ndarray] = {}
        self._cache: dict[str, np.ndarray] = {}
        self._matrix: Optional[np.ndarray] = None

    @property
    def dim(self) -> int:
        return self.word_vectors.shape[1]

    def __contains__(self, word: str) -> bool:
        return word in self.vocab.index

    def _bucket_vector(self, b: int) -> np.ndarray:
        row = self.bucket_rows.get(b)
        if row is not None:
            return self.bucket_vectors[row]
        vec = self._lazy.get(b)
        if vec is None:
            rng = np.random.default_rng([self.config.seed, b])
            vec = rng.uniform(-1.0 / self.dim, 1.0 / self.dim, size=self.dim)
            self._lazy[b] = vec
        return vec

    def embed_word(self, word: str) -> np.ndarray:
        if not word:
            raise ValueError("embed_word: empty string")
        cached = self._cache.get(word)
        if cached is not None:
            return cached
        idx = self.vocab.index.get(word)
        if idx is not None and not self.subwords:
            vec = self.word_vectors[idx].copy()
        else:
            rows = [self._bucket_vector(b) for b in self.vocab.subword_buckets(word)]
            if idx is not None:
                rows.append(self.word_vectors[idx])
            vec = np.mean(rows, axis=0)
        self._cache[word] = vec
        return vec

    def embed_entity(self, entity: str) -> np.ndarray:
        tokens = entity.split()
        if not tokens:
            raise ValueError("embed_entity: empty string")
        return np.mean([self.embed_word(t) for t in tokens], axis=0)

    def nearest(self, word: str, k: int = 5) -> list[str]:
        """Top-k vocabulary words by cosine similarity, excluding ``word`` itself."""
        if self._matrix is None:
            self._matrix = np.stack([self.embed_word(w) for w in self.vocab.words])
        mat = self._matrix
        norms = np.linalg.norm(mat, axis=1)
        q = self.embed_word(word)
        qn = np.linalg.norm(q)
        sims = mat @ q / np.where(norms * qn > 0, norms * qn, 1.0)
        order = np.argsort(-sims, kind="stable")
        return [self.vocab.words[i] for i in order if self.vocab.words[i] != word][:k]

    # file format

    def save(self, path) -> None:
        """Write ``<vocab> <dim>`` text vectors plus a companion ``.ngrams.npz``."""
        path = Path(path)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{len(self.vocab.words)} {self.dim}\n")
            for w, vec in zip(self.vocab.words, self.word_vectors):
                fh.write(w + " " + " ".join(repr(float(x)) for x in vec) + "\n")
        ids = np.array(sorted(self.bucket_rows), dtype=np.int64)
        np.savez(
            _companion(path),
            bucket_ids=ids,
            bucket_vectors=self.bucket_vectors[[self.bucket_rows[i] for i in ids]] if len(ids) else self.bucket_vectors,
            counts=np.array(self.vocab.counts, dtype=np.int64),
            config=np.array([repr(asdict(self.config))]),
        )

    @classmethod
    def load(cls, path) -> "EmbeddingTable":
        """Load a saved table; plain word-vector text files (with or without header) also work."""
        path = Path(path)
        lines = path.read_text(encoding="utf-8").splitlines()
        if not lines:
            raise ValueError(f"{path}: empty embedding file")
        first = lines[0].split()
        if len(first) == 2 and all(p.isdigit() for p in first):
            lines = lines[1:]
        words, vecs = [], []
        for n, line in enumerate(lines, start=1):
            parts = line.rstrip().split(" ")
            if len(parts) < 2:
                raise ValueError(f"{path}: malformed vector on line {n}")
            words.append(parts[0])
            vecs.append([float(x) for x in parts[1:]])
        dims = {len(v) for v in vecs}
        if len(dims) != 1:
            raise ValueError(f"{path}: inconsistent vector dimensions {sorted(dims)}")
        mat = np.array(vecs, dtype=np.float64)
        comp = _companion(path)
        if comp.exists():
            data = np.load(comp)
            config = SkipGramConfig(**ast.literal_eval(str(data["config"][0])))
            vocab = SubwordVocab(words, [int(c) for c in data["counts"]], config.n_min, config.n_max, config.buckets)
            return cls(vocab, mat, data["bucket_ids"].tolist(), data["bucket_vectors"], config)
        config = SkipGramConfig(dim=mat.shape[1])
        vocab = SubwordVocab(words, [1] * len(words), config.n_min, config.n_max, config.buckets)
        return cls(vocab, mat, [], np.zeros((0, mat.shape[1])), config, subwords=False)


def _companion(path: Path) -> Path:
    return path.with_name(path.name + ".ngrams.npz")


def _unigram_table(counts: np.ndarray, power: float = 0.75) -> np.ndarray:
    p = counts.astype(np.float64) ** power
    return p / p.sum()


def train_skipgram(corpus: Iterable[Sequence[str]], config: Optional[SkipGramConfig] = None) -> EmbeddingTable:
    """Train subword skip-gram vectors on tokenized sentences.

    Single-threaded and deterministic for a fixed ``config.seed``.
    """
    config = config or SkipGramConfig()
    sentences = [list(s) for s in corpus]
    freq: dict[str, int] = {}
    for s in sentences:
        for t in s:
            freq[t] = freq.get(t, 0) + 1
    kept = sorted((w for w, c in freq.items() if c >= config.min_count), key=lambda w: (-freq[w], w))
    if not kept:
        raise ValueError("train_skipgram: corpus is empty after min-count filtering")
    vocab = SubwordVocab(kept, [freq[w] for w in kept], config.n_min, config.n_max, config.buckets)
    sentences = [[vocab.index[t] for t in s if t in vocab.index] for s in sentences]
    sentences = [s for s in sentences if s]

    rng = np.random.default_rng(config.seed)
    nwords = len(kept)
    word_buckets = [vocab.subword_buckets(w) for w in kept]
    bucket_ids = sorted({b for bs in word_buckets for b in bs})
    bucket_row = {b: nwords + i for i, b in enumerate(bucket_ids)}
    inputs = [np.array([i] + [bucket_row[b] for b in bs], dtype=np.int64) for i, bs in enumerate(word_buckets)]

    dim = config.dim
    w_in = rng.uniform(-1.0 / dim, 1.0 / dim, size=(nwords + len(bucket_ids), dim))
    w_out = np.zeros((nwords, dim))
    neg_p = _unigram_table(np.array(vocab.counts))

    total = config.epochs * sum(len(s) for s in sentences)
    processed = 0
    neg_buf = np.empty(0, dtype=np.int64)
    neg_pos = 0
    labels = np.zeros(config.negatives + 1)
    labels[0] = 1.0

    for epoch in range(config.epochs):
        for sent in sentences:
            for pos, center in enumerate(sent):
                lr = config.lr * (1.0 - processed / total)
                processed += 1
                rows = inputs[center]
                span = int(rng.integers(1, config.window + 1))
                for c in range(max(0, pos - span), min(len(sent), pos + span + 1)):
                    if c == pos:
                        continue
                    target = sent[c]
                    negs = []
                    if nwords > 1:
                        while len(negs) < config.negatives:
                            if neg_pos >= len(neg_buf):
                                neg_buf = rng.choice(nwords, size=4096, p=neg_p)
                                neg_pos = 0
                            cand = int(neg_buf[neg_pos])
                            neg_pos += 1
                            if cand != target:
                                negs.append(cand)
                    ids = np.array([target] + negs, dtype=np.int64)
                    h = w_in[rows].mean(axis=0)
                    score = 1.0 / (1.0 + np.exp(-(w_out[ids] @ h)))
                    g = lr * (labels[: len(ids)] - score)
                    grad_h = g @ w_out[ids]
                    np.add.at(w_out, ids, np.outer(g, h))
                    np.add.at(w_in, rows, grad_h)
        log.debug("skipgram epoch %d done", epoch + 1)

    return EmbeddingTable(vocab, w_in[:nwords], bucket_ids, w_in[nwords:], config)
