import numpy as np
import pytest

from cerm.data import Example
from cerm.embeddings import SkipGramConfig, train_skipgram
from cerm.encoder import EncoderConfig, TinyTransformer, Vocabulary, mark_ctx
from cerm.model import CermModel
from cerm.synthetic import make_benchmark
from cerm.trainer import corpus_sentences


def small_model(examples, static_dim=16, enc_dim=16, hidden=8, seed=0, suffix=2, pooling="first"):
    """CERM with a tiny static table and encoder built from ``examples``."""
    table = train_skipgram(
        corpus_sentences(examples), SkipGramConfig(dim=static_dim, epochs=1, window=5, buckets=2**16, seed=seed)
    )
    vocab = Vocabulary.build(mark_ctx(ex.sentence, ex.e1, ex.e2).text for ex in examples)
    enc = TinyTransformer(
        vocab,
        EncoderConfig(dim=enc_dim, layers=2, heads=2, ffn_dim=2 * enc_dim, trainable_suffix=suffix, pooling=pooling),
        np.random.default_rng(seed),
    )
    return CermModel(table, enc, hidden, hidden, rng=np.random.default_rng(seed + 1))


@pytest.fixture(scope="session")
def bench():
    return make_benchmark(n_labeled=12, n_unlabeled=12, n_test=12, seed=3)


@pytest.fixture
def model(bench):
    return small_model(bench.labeled + bench.unlabeled)


@pytest.fixture
def ginger():
    return Example("g1", "ginger", "nausea", "Ginger helps nausea in most patients.", "positive")


# acceptance reporting: one line per criterion in the terminal summary

_CRITERIA: dict[int, tuple[str, str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    if rep.when == "setup" and rep.passed:
        return
    n, title = mark.args
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    _CRITERIA[n] = ("PASS" if rep.passed else "FAIL", title, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        status, title, detail = _CRITERIA[n]
        line = f"criterion {n:>2}: {status}  {title}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
