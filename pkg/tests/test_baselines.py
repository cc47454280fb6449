import numpy as np
import pytest

from cerm.baselines import LogisticBaseline, MLPBaseline, MLPConfig, frozen_features, train_baseline


def _separable(n=40, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 2))
    y = (x[:, 0] + x[:, 1] > 0).astype(int)
    x[y == 1] += 1.0
    x[y == 0] -= 1.0
    return x, y


def test_lr_fits_separable_toy():
    x, y = _separable()
    clf = train_baseline(x, y, "lr", c=10.0)
    assert np.mean(clf.predict(x) == y) == 1.0


def test_lr_regularisation_shrinks_weights():
    x, y = _separable()
    weak = LogisticBaseline(c=1e6).fit(x, y)
    strong = LogisticBaseline(c=0.1).fit(x, y)
    assert strong.weight_norm < weak.weight_norm


def test_lr_defaults():
    clf = LogisticBaseline()
    assert (clf.model.C, clf.model.max_iter) == (0.1, 1000)


def test_mlp_eval_is_deterministic_and_learns():
    x, y = _separable(seed=1)
    clf = MLPBaseline(MLPConfig(hidden=16, lr=1e-2, epochs=40, batch_size=8, n_classes=2)).fit(x, y)
    np.testing.assert_array_equal(clf.predict_proba(x), clf.predict_proba(x))
    assert np.mean(clf.predict(x) == y) > 0.9


def test_mlp_defaults():
    c = MLPConfig()
    assert (c.hidden, c.dropout, c.lr, c.batch_size, c.epochs) == (200, 0.5, 5e-5, 32, 50)


def test_length_mismatch_and_unknown_kind():
    x, y = _separable()
    with pytest.raises(ValueError, match="labels"):
        train_baseline(x, y[:-1], "lr")
    with pytest.raises(ValueError, match="kind"):
        train_baseline(x, y, "svm")


def test_frozen_features_layout(model, bench):
    feats = frozen_features(bench.labeled[:3], model.embeddings)
    d = model.embeddings.dim
    assert feats.shape == (3, 3 * d)
    ex = bench.labeled[0]
    np.testing.assert_array_equal(feats[0, :d], model.entity_vector(ex.e1))
