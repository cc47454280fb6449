"""Acceptance criteria 1-10.  Run with ``pytest tests/test_acceptance.py``."""

import json
import math
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from cerm import tensor as T
from cerm.augment import OPERATIONS, Augmenter, EdaConfig, LexiconSynonyms, eda
from cerm.config import TrainConfig, apply_overrides
from cerm.data import EntityLexicon, extract_pairs, save_examples, stats
from cerm.embeddings import SkipGramConfig, train_skipgram
from cerm.gradcheck import check_gradients
from cerm.losses import NegativeSampler, ce_loss, consistency_loss, cosine_phi, draw_unlabeled, joint_loss
from cerm.metrics import compute_metrics
from cerm.report import COLUMNS
from cerm.synthetic import make_benchmark, two_cluster_corpus
from cerm.text import find_spans
from cerm.trainer import corpus_sentences, evaluate, train

from conftest import small_model
from oracles import LABELS, brute_force_metrics, metrics_from_confusion
from test_embeddings import cluster_margin

GOLDEN = Path(__file__).parent / "golden" / "eda_seed42.json"


# 1


@pytest.mark.criterion(1, "gradient oracle on the full model + joint loss")
def test_gradient_oracle(record_property):
    b = make_benchmark(n_labeled=4, n_unlabeled=4, n_test=0, seed=0)
    model = small_model(b.labeled + b.unlabeled, static_dim=16, enc_dim=16, hidden=8, seed=0)
    ents = {e for ex in b.labeled + b.unlabeled for e in (ex.e1, ex.e2)}
    rng = np.random.default_rng(0)
    draws = draw_unlabeled(b.unlabeled, Augmenter(EdaConfig(rate=0.3), b.synonyms), NegativeSampler(ents, 0), rng)
    # the stop-gradient target is a constant, so it is fixed for the probes too
    clean = model.forward(draws.examples).probs.data
    params = model.trainable_parameters()
    assert any(n.startswith("encoder.block") for n in params)
    start = time.perf_counter()
    worst = check_gradients(lambda: joint_loss(model, b.labeled, draws, clean_probs=clean).graph, params)
    elapsed = time.perf_counter() - start
    entries = sum(p.data.size for p in params.values())
    record_property("detail", f"{entries} entries, max rel err {max(worst.values()):.2e}, {elapsed:.1f}s")
    assert max(worst.values()) < 1e-4, {k: v for k, v in worst.items() if v >= 1e-4}
    assert elapsed < 30


# 2


@pytest.mark.criterion(2, "loss identities")
def test_loss_identities(model, bench):
    uniform = T.Tensor(np.full((6, 3), 1 / 3))
    assert abs(ce_loss(uniform, [0, 1, 2, 0, 1, 2]).item() - math.log(3)) <= 1e-9

    ents = {e for ex in bench.labeled + bench.unlabeled for e in (ex.e1, ex.e2)}
    identity = Augmenter(EdaConfig(rate=0.0))
    draws = draw_unlabeled(bench.unlabeled[:6], identity, NegativeSampler(ents, 1), np.random.default_rng(1))
    assert consistency_loss(model, draws).item() == 0.0

    def phi(pos, neg, s):
        return cosine_phi(T.Tensor([pos]), T.Tensor([neg]), T.Tensor([s])).item()

    assert phi([1.0, 0.0], [0.0, 1.0], [1.0, 0.0]) == 0.0
    assert phi([0.0, 1.0], [1.0, 0.0], [1.0, 0.0]) == 2.0
    assert phi([1.0, 0.0], [1.0, 0.0], [1.0, 0.0]) == 1.0

    noisy = draw_unlabeled(
        bench.unlabeled[:6], Augmenter(EdaConfig(rate=0.3), bench.synonyms), NegativeSampler(ents, 2),
        np.random.default_rng(2),
    )
    for d in (draws, noisy):
        lb = joint_loss(model, bench.labeled[:6], d)
        assert abs(lb.total - (lb.ce + lb.consistency + lb.cosine)) <= 1e-10


# 3


def _random_case(rng):
    fill = ["in", "most", "older", "adults", "the", "trial", "showed", "that", "with", "daily", "use"]
    n_fill = int(rng.integers(6, 14))
    tokens = list(rng.choice(fill, size=n_fill))
    e1 = ["green", "tea"] if rng.random() < 0.5 else ["ginger"]
    e2 = ["nausea"]
    i = int(rng.integers(0, len(tokens) + 1))
    tokens[i:i] = e1
    j = int(rng.integers(0, len(tokens) + 1))
    if i < j < i + len(e1):  # never split the first entity
        j = i + len(e1)
    tokens[j:j] = e2
    return tokens, " ".join(e1), " ".join(e2)


@pytest.mark.criterion(3, "EDA invariants over 10,000 trials + golden output")
def test_eda_invariants(record_property):
    rng = np.random.default_rng(2024)
    syn = LexiconSynonyms({"older": ["elderly", "aged"], "daily": ["everyday"], "use": ["intake", "usage"],
                           "showed": ["found", "indicated"], "adults": ["grownups"]})
    counts = {op: 0 for op in OPERATIONS}
    for _ in range(10_000):
        tokens, e1, e2 = _random_case(rng)
        op = OPERATIONS[int(rng.integers(len(OPERATIONS)))]
        rate = float(rng.choice([0.0, 0.1, 0.2, 0.3, 0.5]))
        cfg = EdaConfig(rate=rate, operations=(op,))
        out = eda(tokens, e1, e2, cfg, syn, rng)
        for ent in (e1, e2):
            assert len(find_spans(out, ent.split())) == len(find_spans(tokens, ent.split()))
        if rate == 0.0:
            assert out == tokens
            continue
        counts[op] += 1
        n = max(1, int(np.floor(rate * len(tokens) + 0.5)))
        delta = {"random_delete": -n, "random_insert": n}.get(op, 0)
        assert len(out) - len(tokens) == delta, (op, tokens, out)

    golden = json.loads(GOLDEN.read_text())
    gsyn = LexiconSynonyms(golden["synonyms"])
    for case in golden["cases"]:
        cfg = EdaConfig(rate=golden["rate"], operations=tuple(case["operations"]), seed=golden["seed"])
        got = eda(golden["tokens"], golden["e1"], golden["e2"], cfg, gsyn, np.random.default_rng(golden["seed"]))
        assert got == case["output"]
    record_property("detail", ", ".join(f"{k}={v}" for k, v in counts.items()))


# 4


@pytest.mark.criterion(4, "skip-gram two-cluster separation on 5/5 seeds")
def test_skipgram_separation(record_property):
    start = time.perf_counter()
    margins = []
    for seed in range(5):
        table = train_skipgram(two_cluster_corpus(600, seed=seed), SkipGramConfig(seed=seed))
        margins.append(cluster_margin(table))
    elapsed = time.perf_counter() - start
    record_property("detail", f"margins {[round(float(m), 3) for m in margins]}, {elapsed:.0f}s")
    assert all(m > 0.1 for m in margins)
    assert elapsed < 120


# 5


OVERFIT = {
    "batch_size": 8, "lr": 1e-3, "epochs": 200, "validation_fraction": 0.0,
    "skipgram.dim": 32, "skipgram.epochs": 2, "skipgram.window": 5, "skipgram.buckets": 65536,
    "encoder.dim": 32, "encoder.ffn_dim": 64,
}


@pytest.mark.criterion(5, "overfit 32 separable examples within 200 epochs on 3 seeds")
def test_overfit(record_property):
    start = time.perf_counter()
    reached = []
    for seed in range(3):
        b = make_benchmark(n_labeled=32, n_unlabeled=0, n_test=0, seed=seed)
        cfg = TrainConfig()
        apply_overrides(cfg, {**OVERFIT, "seed": seed})
        model, hist = train(b.labeled, [], cfg)
        acc = evaluate(model, b.labeled).accuracy
        reached.append(acc)
        totals = [e["mean_total"] for e in hist.epochs]
        assert totals[-1] < totals[0]
    elapsed = time.perf_counter() - start
    record_property("detail", f"train accuracy {reached}, {elapsed:.0f}s")
    assert all(a == 1.0 for a in reached)
    assert elapsed < 120


# 6


SEMI = {
    "batch_size": 10, "lr": 3e-4, "epochs": 60, "validation_fraction": 0.0,
    "skipgram.dim": 50, "skipgram.epochs": 2,
}


@pytest.mark.slow
@pytest.mark.criterion(6, "semi-supervised benefit on 30 labeled + 1,000 unlabeled, 5 seeds")
def test_semi_supervised_benefit(record_property):
    start = time.perf_counter()
    ce_only, joint = [], []
    for seed in range(5):
        b = make_benchmark(n_labeled=30, n_unlabeled=1000, n_test=300, seed=seed)
        # both arms share one embedding table per seed
        sg = SkipGramConfig(dim=SEMI["skipgram.dim"], epochs=SEMI["skipgram.epochs"], seed=seed)
        emb = train_skipgram(corpus_sentences(b.labeled + b.unlabeled), sg)
        for weights, bucket in (((1.0, 0.0, 0.0), ce_only), ((1.0, 1.0, 1.0), joint)):
            cfg = TrainConfig()
            apply_overrides(cfg, {**SEMI, "seed": seed, "weights.ce": weights[0],
                                  "weights.consistency": weights[1], "weights.cosine": weights[2]})
            model, _ = train(b.labeled, b.unlabeled, cfg, embeddings=emb, synonyms=b.synonyms)
            bucket.append(evaluate(model, b.test).macro_f1)
    elapsed = time.perf_counter() - start
    wins = sum(j > c for j, c in zip(joint, ce_only))
    record_property(
        "detail",
        f"CE-only {np.mean(ce_only):.3f}, joint {np.mean(joint):.3f}, joint better on {wins}/5, {elapsed:.0f}s",
    )
    assert np.mean(joint) >= np.mean(ce_only) - 0.02
    assert wins >= 3
    assert elapsed < 600


# 7


@pytest.mark.criterion(7, "metrics agree with a brute-force oracle on 1,000 random sets")
def test_metrics_oracle():
    rng = np.random.default_rng(77)
    for _ in range(1000):
        n = int(rng.integers(1, 60))
        k = int(rng.integers(1, 4))
        classes = list(rng.choice(LABELS, size=k, replace=False))
        preds = [str(x) for x in rng.choice(classes, size=n)]
        labels = [str(x) for x in rng.choice(LABELS, size=n)]
        m = compute_metrics(preds, labels)
        f1, macro, acc = brute_force_metrics(preds, labels)
        assert m.f1 == f1
        assert m.macro_f1 == macro
        assert m.accuracy == acc
        cm = np.array(m.confusion)
        assert cm.sum() == n and np.trace(cm) == sum(p == y for p, y in zip(preds, labels))


# 8


@pytest.mark.criterion(8, "dataset statistics and pair extraction recounts")
def test_pipeline_statistics():
    rng = np.random.default_rng(8)
    for seed in range(5):
        b = make_benchmark(n_labeled=40, n_unlabeled=60, n_test=0, n_entities=10, seed=seed)
        data = b.labeled + b.unlabeled
        s = stats(data)
        lengths = [len(ex.sentence.split()) for ex in data]
        assert s.labeled == sum(1 for ex in data if ex.label)
        assert s.unlabeled == sum(1 for ex in data if ex.label is None)
        for lab in LABELS:
            assert s.per_label[lab] == sum(1 for ex in data if ex.label == lab)
        assert (s.words_min, s.words_max) == (min(lengths), max(lengths))
        assert s.words_avg == sum(lengths) / len(lengths)
        assert s.unique_entities == len({e.casefold() for ex in data for e in (ex.e1, ex.e2)})
        per_cat = {}
        for ex in data:
            for ent, cat in zip((ex.e1, ex.e2), ex.categories):
                per_cat.setdefault(cat, set()).add(ent.casefold())
        assert s.per_category == {c: len(v) for c, v in sorted(per_cat.items())}

    names = [f"entity{i}" for i in range(12)]
    lexicon = EntityLexicon()
    for i, name in enumerate(names):
        lexicon.add(name, ("Chemical", "Gene", "Disease")[i % 3])
    for _ in range(300):
        k = int(rng.integers(0, 7))
        planted = list(rng.choice(names, size=k, replace=False))
        filler = list(rng.choice(["the", "of", "binds", "and", "levels"], size=int(rng.integers(0, 6))))
        toks = filler + planted
        rng.shuffle(toks)
        pairs = extract_pairs([" ".join(toks)], lexicon)
        assert len(pairs) == k * (k - 1) // 2


# 9


def _cli(*args, cwd, hashseed):
    env = dict(os.environ, PYTHONHASHSEED=str(hashseed))
    return subprocess.run([sys.executable, "-m", "cerm.cli", *args], cwd=cwd, env=env, capture_output=True, text=True)


FAST_CLI = [
    "--set", "batch_size=8", "--set", "lr=0.001", "--set", "epochs=3", "--set", "validation_fraction=0.2",
    "--set", "skipgram.dim=16", "--set", "skipgram.epochs=1", "--set", "skipgram.buckets=65536",
    "--set", "encoder.dim=16", "--set", "encoder.ffn_dim=32", "--set", "hidden=16",
]


@pytest.mark.criterion(9, "train with --deterministic is bit-identical across runs")
def test_cli_determinism(tmp_path):
    b = make_benchmark(n_labeled=20, n_unlabeled=30, n_test=0, seed=9)
    save_examples(b.labeled, tmp_path / "train.jsonl")
    save_examples(b.unlabeled, tmp_path / "unlabeled.jsonl")
    b.synonyms.save(tmp_path / "syn.tsv")
    outs = []
    for run, hashseed in (("a", 1), ("b", 2)):
        res = _cli("train", "--data", "train.jsonl", "--unlabeled", "unlabeled.jsonl", "--synonyms", "syn.tsv",
                   "--seed", "5", "--deterministic", "--out", run, *FAST_CLI, cwd=tmp_path, hashseed=hashseed)
        assert res.returncode == 0, res.stderr
        outs.append(tmp_path / run)
    for name in ("model.ckpt", "history.jsonl"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name


# 10


@pytest.mark.criterion(10, "compare emits the results-table columns with consistent metrics")
def test_compare_report(tmp_path):
    b = make_benchmark(n_labeled=24, n_unlabeled=20, n_test=30, seed=10)
    save_examples(b.labeled, tmp_path / "train.jsonl")
    save_examples(b.unlabeled, tmp_path / "unlabeled.jsonl")
    save_examples(b.test, tmp_path / "test.jsonl")
    methods = [
        {"name": "Logistic Regression", "kind": "lr", "overrides": {"c": 0.1, "max_iter": 1000}},
        {"name": "MLP", "kind": "mlp", "overrides": {"epochs": 5}},
        {"name": "CERM", "kind": "cerm"},
    ]
    (tmp_path / "methods.json").write_text(json.dumps(methods))
    res = _cli("compare", "--data", "train.jsonl", "--unlabeled", "unlabeled.jsonl", "--test", "test.jsonl",
               "--methods", "methods.json", "--seeds", "0,1", "--out", "out", *FAST_CLI, cwd=tmp_path, hashseed=0)
    assert res.returncode == 0, res.stderr
    header = (tmp_path / "out" / "report.txt").read_text().splitlines()[0]
    cells = [c.strip() for c in header.split("|")]
    assert cells[0] == "Method" and tuple(cells[1:]) == COLUMNS
    runs = [json.loads(x) for x in (tmp_path / "out" / "report.jsonl").read_text().splitlines()]
    assert len(runs) == 6
    for r in runs:
        assert np.array(r["confusion"]).sum() == len(b.test)
        f1, macro, acc = metrics_from_confusion(r["confusion"])
        assert (r["f1_negative"], r["f1_neutral"], r["f1_positive"]) == (f1["negative"], f1["neutral"], f1["positive"])
        assert r["macro_f1"] == macro and r["accuracy"] == acc
    table = (tmp_path / "out" / "report.txt").read_text().splitlines()[2:]
    for line, m in zip(table, methods):
        values = [float(c) for c in line.split("|")[1:]]
        mine = [r for r in runs if r["method"] == m["name"]]
        expect = np.mean([[r["f1_negative"], r["f1_neutral"], r["f1_positive"], r["macro_f1"], r["accuracy"]]
                          for r in mine], axis=0)
        np.testing.assert_allclose(values, expect, atol=5e-5)
