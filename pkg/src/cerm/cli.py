"""Command-line entry point: ``cerm <subcommand> ...``."""

from __future__ import annotations

import argparse
import contextlib
import hashlib
import json
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .config import PAPER_DEFAULTS, ConfigError, TrainConfig, apply_overrides, load_config

log = logging.getLogger("cerm")


class CliError(Exception):
    pass


def _require(path: Optional[str], flag: str) -> Path:
    if path is None:
        raise CliError(f"missing required flag {flag}")
    p = Path(path)
    if not p.exists():
        raise CliError(f"file not found: {path}")
    return p


def _digest(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _out_dir(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_manifest(out: Path, command: str, config: dict, inputs: Sequence[Path], outputs: Sequence[str], seed: int) -> None:
    manifest = {
        "command": command,
        "argv": sys.argv[1:],
        "version": __version__,
        "config": config,
        "seeds": {"seed": seed},
        "inputs": {str(p): _digest(p) for p in inputs},
        "outputs": [str(out / o) for o in outputs],
        "started": datetime.now(timezone.utc).isoformat(),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _resolve_config(args) -> TrainConfig:
    if args.config and args.config != PAPER_DEFAULTS:
        cfg = load_config(_require(args.config, "--config"))
    else:
        cfg = TrainConfig()
    overrides = {}
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(item, "expected key=value")
        overrides[key.strip()] = value.strip()
    apply_overrides(cfg, overrides)
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.skipgram.seed = args.seed
        cfg.eda.seed = args.seed
    cfg.validate()
    return cfg


def _load_examples(path: Optional[str], flag: str):
    from .data import load_examples

    return load_examples(_require(path, flag))


# subcommands


def cmd_train_embeddings(args) -> int:
    from .embeddings import train_skipgram
    from .trainer import corpus_sentences

    cfg = _resolve_config(args)
    inputs = [_require(args.data, "--data")]
    examples = _load_examples(args.data, "--data")
    if args.unlabeled:
        inputs.append(_require(args.unlabeled, "--unlabeled"))
        examples += _load_examples(args.unlabeled, "--unlabeled")[: cfg.unlabeled_pool]
    out = _out_dir(args)
    write_manifest(out, "train-embeddings", cfg.to_dict(), inputs, ["embeddings.vec", "embeddings.vec.ngrams.npz"], cfg.seed)
    table = train_skipgram(corpus_sentences(examples), cfg.skipgram)
    table.save(out / "embeddings.vec")
    print(f"wrote {out / 'embeddings.vec'} ({len(table.vocab.words)} words, dim {table.dim})")
    return 0


def cmd_extract_pairs(args) -> int:
    from .data import EntityLexicon, extract_pairs, save_examples

    sent_path = _require(args.sentences, "--sentences")
    lex_path = _require(args.lexicon, "--lexicon")
    lexicon = EntityLexicon.load(lex_path)
    sentences = [s.strip() for s in sent_path.read_text(encoding="utf-8").splitlines() if s.strip()]
    out = _out_dir(args)
    write_manifest(out, "extract-pairs", {}, [sent_path, lex_path], ["pairs.jsonl"], 0)
    pairs = extract_pairs(sentences, lexicon)
    save_examples(pairs, out / "pairs.jsonl")
    print(f"{len(pairs)} pairs from {len(sentences)} sentences -> {out / 'pairs.jsonl'}")
    return 0


def cmd_stats(args) -> int:
    from .data import stats

    examples = _load_examples(args.data, "--data")
    if args.unlabeled:
        examples += _load_examples(args.unlabeled, "--unlabeled")
    s = stats(examples)
    print(s.table())
    if args.out:
        out = _out_dir(args)
        (out / "stats.json").write_text(json.dumps(s.__dict__, indent=2) + "\n", encoding="utf-8")
    return 0


def cmd_augment(args) -> int:
    import numpy as np

    from .augment import OPERATIONS, EdaConfig, EmbeddingSynonyms, LexiconSynonyms, NoSynonyms, eda
    from .embeddings import EmbeddingTable
    from .text import words

    if args.synonyms:
        source = LexiconSynonyms.load(_require(args.synonyms, "--synonyms"))
    elif args.embeddings:
        source = EmbeddingSynonyms(EmbeddingTable.load(_require(args.embeddings, "--embeddings")))
    else:
        source = NoSynonyms()
    ops = tuple(args.operations.split(",")) if args.operations else OPERATIONS
    config = EdaConfig(rate=args.rate, operations=ops, seed=args.seed or 0)
    try:
        config.validate()
    except ValueError as exc:
        raise ConfigError(str(exc).split(":", 1)[0], str(exc)) from None
    rng = np.random.default_rng(config.seed)
    if args.input and args.input != "-":
        lines = _require(args.input, "--input").read_text(encoding="utf-8").splitlines()
    else:
        lines = sys.stdin.read().splitlines()
    out_lines = []
    for n, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        e1, e2, sentence = args.e1 or "", args.e2 or "", line
        if line.lstrip().startswith("{"):
            try:
                rec = json.loads(line)
            except json.JSONDecodeError:
                raise CliError(f"line {n}: invalid JSON") from None
            e1, e2, sentence = rec.get("e1", e1), rec.get("e2", e2), rec.get("sentence", "")
        toks = words(sentence)
        if not toks:
            raise CliError(f"line {n}: empty sentence")
        out_lines.append(" ".join(eda(toks, e1, e2, config, source, rng)))
    if args.out:
        out = _out_dir(args)
        (out / "augmented.txt").write_text("\n".join(out_lines) + "\n", encoding="utf-8")
    else:
        for line in out_lines:
            print(line)
    return 0


def _synonyms_for(args, cfg):
    from .augment import LexiconSynonyms

    if args.synonyms:
        return LexiconSynonyms.load(_require(args.synonyms, "--synonyms"))
    if cfg.synonym_source == "lexicon":
        raise ConfigError("synonym_source", "lexicon source needs --synonyms")
    return None


def cmd_train(args) -> int:
    from .embeddings import EmbeddingTable
    from .trainer import evaluate, train

    data_path = _require(args.data, "--data")
    cfg = _resolve_config(args)
    inputs = [data_path]
    labeled = _load_examples(args.data, "--data")
    unlabeled = []
    if args.unlabeled:
        inputs.append(_require(args.unlabeled, "--unlabeled"))
        unlabeled = _load_examples(args.unlabeled, "--unlabeled")
    test = None
    if args.test:
        inputs.append(_require(args.test, "--test"))
        test = _load_examples(args.test, "--test")
    embeddings = None
    if args.embeddings:
        inputs.append(_require(args.embeddings, "--embeddings"))
        embeddings = EmbeddingTable.load(args.embeddings)
    vectors = None
    if args.sentence_vectors:
        vectors = _require(args.sentence_vectors, "--sentence-vectors")
        inputs.append(vectors)
    synonyms = _synonyms_for(args, cfg)
    if args.synonyms:
        inputs.append(Path(args.synonyms))
    out = _out_dir(args)
    write_manifest(out, "train", cfg.to_dict(), inputs, ["model.ckpt", "history.jsonl"], cfg.seed)
    model, history = train(labeled, unlabeled, cfg, embeddings, synonyms, test, vectors)
    model.save(out / "model.ckpt", {"train_config": cfg.to_dict()})
    history.save(out / "history.jsonl")
    print(f"trained {len(history.steps)} steps -> {out / 'model.ckpt'}")
    if test:
        m = evaluate(model, test)
        print(f"test macro F1 {m.macro_f1:.4f}  accuracy {m.accuracy:.4f}")
    return 0


def cmd_evaluate(args) -> int:
    from .model import CermModel
    from .trainer import evaluate

    model = CermModel.load(_require(args.model, "--model"))
    m = evaluate(model, _load_examples(args.data, "--data"))
    rec = m.record()
    for k in ("f1_negative", "f1_neutral", "f1_positive", "macro_f1", "accuracy"):
        print(f"{k:<12} {rec[k]:.4f}")
    if args.out:
        out = _out_dir(args)
        (out / "metrics.json").write_text(json.dumps(rec, indent=2) + "\n", encoding="utf-8")
    return 0


def cmd_predict(args) -> int:
    from .data import save_examples
    from .model import CermModel

    model = CermModel.load(_require(args.model, "--model"))
    if args.data:
        examples = _load_examples(args.data, "--data")
        preds = model.predict(examples)
        for ex, p in zip(examples, preds):
            ex.label = p
        if args.out:
            save_examples(examples, _out_dir(args) / "predictions.jsonl")
        else:
            for ex in examples:
                print(f"{ex.id}\t{ex.label}")
        return 0
    if not (args.e1 and args.e2 and args.sentence):
        raise CliError("predict needs --data or all of --e1, --e2, --sentence")
    print(model.predict_one(args.e1, args.e2, args.sentence))
    return 0


def cmd_compare(args) -> int:
    from .augment import LexiconSynonyms
    from .data import split
    from .report import DEFAULT_METHODS, MethodSpec, compare

    cfg = _resolve_config(args)
    inputs = [_require(args.data, "--data")]
    labeled = _load_examples(args.data, "--data")
    unlabeled = []
    if args.unlabeled:
        inputs.append(_require(args.unlabeled, "--unlabeled"))
        unlabeled = _load_examples(args.unlabeled, "--unlabeled")
    if args.test:
        inputs.append(_require(args.test, "--test"))
        train_set, test_set = labeled, _load_examples(args.test, "--test")
    else:
        train_set, test_set = split(labeled, 0.7, cfg.seed)
    methods = DEFAULT_METHODS
    if args.methods:
        path = _require(args.methods, "--methods")
        inputs.append(path)
        methods = [MethodSpec.from_dict(d) for d in json.loads(path.read_text(encoding="utf-8"))]
    synonyms = LexiconSynonyms.load(_require(args.synonyms, "--synonyms")) if args.synonyms else None
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else [cfg.seed]
    out = _out_dir(args)
    write_manifest(out, "compare", cfg.to_dict(), inputs, ["report.txt", "report.jsonl"], cfg.seed)
    report = compare(methods, train_set, test_set, unlabeled, cfg, seeds, synonyms=synonyms)
    report.save(out / "report.txt", out / "report.jsonl")
    print(report.table())
    return 0


def cmd_absa_encode(args) -> int:
    from .data import absa_encode, save_examples

    if args.input:
        path = _require(args.input, "--input")
        out_examples = []
        for n, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            rec = json.loads(line)
            try:
                out_examples.append(
                    absa_encode(rec["target"], rec["aspect"], rec["sentence"], rec.get("label"), str(rec.get("id", n)))
                )
            except KeyError as exc:
                raise CliError(f"{path}:{n}: missing field {exc}") from None
        out = _out_dir(args)
        save_examples(out_examples, out / "absa.jsonl")
        print(f"{len(out_examples)} examples -> {out / 'absa.jsonl'}")
        return 0
    if not (args.target and args.aspect and args.sentence):
        raise CliError("absa-encode needs --input or all of --target, --aspect, --sentence")
    print(json.dumps(absa_encode(args.target, args.aspect, args.sentence).to_dict()))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cerm", description="Semi-supervised entity-relationship sentiment analysis")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--deterministic", action="store_true", help="single-threaded numerics")
        if config:
            p.add_argument("--config", help=f"JSON config file or '{PAPER_DEFAULTS}' (the default)")
            p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config field")

    p = sub.add_parser("train-embeddings", help="train subword skip-gram vectors")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--unlabeled")
    p.set_defaults(func=cmd_train_embeddings)

    p = sub.add_parser("extract-pairs", help="emit entity pairs co-occurring in sentences")
    common(p, config=False)
    p.add_argument("--sentences", required=True, help="one sentence per line")
    p.add_argument("--lexicon", required=True, help="surface<TAB>category")
    p.set_defaults(func=cmd_extract_pairs)

    p = sub.add_parser("stats", help="dataset statistics")
    common(p, config=False)
    p.add_argument("--data", required=True)
    p.add_argument("--unlabeled")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("augment", help="EDA perturbation of sentences")
    common(p, config=False)
    p.add_argument("--input", help="file of sentences or JSON examples; stdin when omitted")
    p.add_argument("--e1")
    p.add_argument("--e2")
    p.add_argument("--rate", type=float, default=0.2)
    p.add_argument("--operations", help="comma-separated subset of EDA operations")
    p.add_argument("--synonyms", help="word<TAB>syn1,syn2 lexicon")
    p.add_argument("--embeddings", help="embedding file for nearest-neighbour synonyms")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("train", help="train CERM")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--unlabeled")
    p.add_argument("--test", help="test set (used only with select_on_test and for a final report)")
    p.add_argument("--embeddings")
    p.add_argument("--synonyms")
    p.add_argument("--sentence-vectors", help="id<TAB>vector file for the precomputed encoder")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="metrics of a checkpoint on labeled data")
    common(p, config=False)
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="label one example or a file")
    common(p, config=False)
    p.add_argument("--model", required=True)
    p.add_argument("--e1")
    p.add_argument("--e2")
    p.add_argument("--sentence")
    p.add_argument("--data")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("compare", help="train several methods and print a results table")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--unlabeled")
    p.add_argument("--test")
    p.add_argument("--methods", help="JSON list of {name, kind, overrides}")
    p.add_argument("--synonyms")
    p.add_argument("--seeds", help="comma-separated seeds")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("absa-encode", help="recast aspect-level examples as entity pairs")
    common(p, config=False)
    p.add_argument("--input", help="JSON lines with target, aspect, sentence, label?")
    p.add_argument("--target")
    p.add_argument("--aspect")
    p.add_argument("--sentence")
    p.set_defaults(func=cmd_absa_encode)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    level = getattr(logging, os.environ.get("CERM_LOG", "WARNING").upper(), logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    limits = contextlib.nullcontext()
    if args.deterministic:
        from threadpoolctl import threadpool_limits

        limits = threadpool_limits(1)
    try:
        with limits:
            return args.func(args)
    except ConfigError as exc:
        print(f"error: invalid config value for {exc.field}: {exc}", file=sys.stderr)
    except (CliError, ValueError, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
