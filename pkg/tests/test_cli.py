import json
import subprocess
import sys
from pathlib import Path

import pytest

from cerm.cli import main
from cerm.data import save_examples
from cerm.synthetic import make_benchmark

FIVE = Path(__file__).parent / "fixtures" / "five.jsonl"
FAST = [
    "--set", "batch_size=8", "--set", "lr=0.001", "--set", "epochs=2", "--set", "validation_fraction=0",
    "--set", "skipgram.dim=16", "--set", "skipgram.epochs=1", "--set", "skipgram.buckets=65536",
    "--set", "encoder.dim=16", "--set", "encoder.ffn_dim=32", "--set", "hidden=16",
]


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    b = make_benchmark(n_labeled=12, n_unlabeled=12, n_test=9, seed=2)
    save_examples(b.labeled, d / "train.jsonl")
    save_examples(b.unlabeled, d / "unlabeled.jsonl")
    save_examples(b.test, d / "test.jsonl")
    b.synonyms.save(d / "syn.tsv")
    return d, b


def test_stats_prints_table(capsys):
    assert main(["stats", "--data", str(FIVE)]) == 0
    out = capsys.readouterr().out
    lines = {}
    for line in out.splitlines():
        name, _, value = line.strip(" -").rpartition("  ")
        lines[name.strip()] = value.strip()
    assert lines["Labelled data count"] == "3"
    assert lines["Positive"] == lines["Negative"] == lines["Neutral"] == "1"
    assert lines["Unlabeled data count"] == "2"


def test_missing_file_names_path(capsys, tmp_path):
    assert main(["train", "--data", "missing.jsonl", "--out", str(tmp_path)]) != 0
    err = capsys.readouterr().err
    assert "missing.jsonl" in err and len(err.strip().splitlines()) == 1


def test_invalid_config_names_field(capsys, tmp_path):
    assert main(["train", "--data", str(FIVE), "--out", str(tmp_path), "--set", "batch_size=0"]) != 0
    assert "batch_size" in capsys.readouterr().err


def test_train_predict_evaluate(files, tmp_path, capsys):
    d, b = files
    out = tmp_path / "run"
    args = ["train", "--data", str(d / "train.jsonl"), "--unlabeled", str(d / "unlabeled.jsonl"),
            "--synonyms", str(d / "syn.tsv"), "--out", str(out), "--seed", "3", "--deterministic", *FAST]
    assert main(args) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "train" and manifest["seeds"]["seed"] == 3
    assert str(d / "train.jsonl") in manifest["inputs"]
    assert len(manifest["inputs"][str(d / "train.jsonl")]) == 64
    capsys.readouterr()
    ex = b.test[0]
    assert main(["predict", "--model", str(out / "model.ckpt"), "--e1", ex.e1, "--e2", ex.e2,
                 "--sentence", ex.sentence]) == 0
    assert capsys.readouterr().out.strip() in {"positive", "negative", "neutral"}
    assert main(["evaluate", "--model", str(out / "model.ckpt"), "--data", str(d / "test.jsonl")]) == 0
    assert "macro_f1" in capsys.readouterr().out


def test_train_deterministic(files, tmp_path):
    d, _ = files
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["train", "--data", str(d / "train.jsonl"), "--unlabeled", str(d / "unlabeled.jsonl"),
                     "--out", str(out), "--seed", "7", "--deterministic", *FAST]) == 0
        outs.append(out)
    for f in ("model.ckpt", "history.jsonl"):
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()


def test_named_default_config(files, tmp_path, capsys):
    d, _ = files
    assert main(["train-embeddings", "--data", str(d / "train.jsonl"), "--config", "paper-defaults",
                 "--set", "skipgram.epochs=1", "--set", "skipgram.dim=8", "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "manifest.json").read_text())["config"]["batch_size"] == 64
    assert (tmp_path / "embeddings.vec").exists()


def test_augment_and_extract_and_absa(tmp_path, capsys):
    src = tmp_path / "s.txt"
    src.write_text("ginger helps nausea in older adults\n")
    assert main(["augment", "--input", str(src), "--e1", "ginger", "--e2", "nausea", "--rate", "0"]) == 0
    assert capsys.readouterr().out.strip() == "ginger helps nausea in older adults"
    lex = tmp_path / "lex.tsv"
    lex.write_text("ginger\tConsumable\nnausea\tDisease\nadults\tGene\n")
    assert main(["extract-pairs", "--sentences", str(src), "--lexicon", str(lex), "--out", str(tmp_path)]) == 0
    assert len((tmp_path / "pairs.jsonl").read_text().splitlines()) == 3
    capsys.readouterr()
    assert main(["absa-encode", "--target", "location1", "--aspect", "safety", "--sentence", "location1 is quiet"]) == 0
    assert json.loads(capsys.readouterr().out)["sentence"] == "location1 is quiet safety"


def test_compare_writes_table(files, tmp_path, capsys):
    d, _ = files
    methods = tmp_path / "m.json"
    methods.write_text(json.dumps([{"name": "LR", "kind": "lr"}]))
    assert main(["compare", "--data", str(d / "train.jsonl"), "--test", str(d / "test.jsonl"),
                 "--methods", str(methods), "--out", str(tmp_path), *FAST]) == 0
    head = (tmp_path / "report.txt").read_text().splitlines()[0]
    assert "Macro F1" in head and "F1-Score (Neutral)" in head


def test_console_script_entry():
    res = subprocess.run([sys.executable, "-m", "cerm.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip()
