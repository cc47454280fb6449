import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cerm import tensor as T
from cerm.augment import Augmenter, EdaConfig
from cerm.losses import (
    LossWeights,
    NegativeSampler,
    UnlabeledDraws,
    ce_loss,
    consistency_loss,
    cosine_loss,
    cosine_phi,
    draw_unlabeled,
    joint_loss,
    kl_rows,
)


def _t(x):
    return T.Tensor(np.asarray(x, dtype=np.float64))


def test_ce_analytic_values():
    assert ce_loss(_t([[1.0, 0.0, 0.0]]), [0]).item() == 0.0
    assert ce_loss(_t(np.full((4, 3), 1 / 3)), [0, 1, 2, 0]).item() == pytest.approx(math.log(3), abs=1e-12)
    assert ce_loss(_t([[0.5, 0.25, 0.25]]), [0]).item() == pytest.approx(math.log(2), abs=1e-12)


def test_ce_log_floor_and_empty():
    assert ce_loss(_t([[0.0, 1.0, 0.0]]), [0]).item() == pytest.approx(-math.log(1e-12))
    with pytest.raises(ValueError, match="empty"):
        ce_loss(_t(np.zeros((0, 3))), [])


def test_kl_toy_value():
    got = kl_rows(np.array([[0.5, 0.5]]), _t([[0.25, 0.75]])).item()
    assert got == pytest.approx(0.5 * math.log(2) + 0.5 * math.log(2 / 3), abs=1e-12)
    assert got == pytest.approx(0.1438, abs=5e-5)


dists = arrays(np.float64, (4, 3), elements=st.floats(0.01, 1.0)).map(lambda a: a / a.sum(1, keepdims=True))


@settings(max_examples=100, deadline=None)
@given(dists, dists)
def test_kl_nonnegative_and_zero_on_self(p, q):
    assert np.all(kl_rows(p, _t(q)).data >= -1e-15)
    np.testing.assert_allclose(kl_rows(p, _t(p)).data, 0.0, atol=1e-15)


def test_cosine_phi_cases():
    one = lambda pos, neg, s: cosine_phi(_t([pos]), _t([neg]), _t([s])).item()  # noqa: E731
    assert one([1, 0], [0, 1], [1, 0]) == pytest.approx(0.0)
    assert one([0, 1], [1, 0], [1, 0]) == pytest.approx(2.0)
    assert one([1, 0], [1, 0], [1, 0]) == pytest.approx(1.0)


def test_cosine_phi_zero_norm_is_finite():
    v = cosine_phi(_t([[0.0, 0.0]]), _t([[1.0, 0.0]]), _t([[0.0, 0.0]])).item()
    assert v == 1.0


vecs = arrays(np.float64, (5, 4), elements=st.floats(-10, 10))


@settings(max_examples=200, deadline=None)
@given(vecs, vecs, vecs)
def test_cosine_phi_bounds(a, b, s):
    phi = cosine_phi(_t(a), _t(b), _t(s)).data
    assert np.all(np.isfinite(phi))
    assert np.all(phi >= -1e-12) and np.all(phi <= 3 + 1e-12)


def test_cosine_phi_monotone():
    s = _t([[1.0, 0.0]])
    angles = np.linspace(0, np.pi, 9)
    pos_vals = [cosine_phi(_t([[np.cos(a), np.sin(a)]]), _t([[0.0, 1.0]]), s).item() for a in angles]
    neg_vals = [cosine_phi(_t([[1.0, 0.0]]), _t([[np.cos(a), np.sin(a)]]), s).item() for a in angles]
    # widening the positive angle lowers cos(pos, s): phi goes up
    assert all(x <= y + 1e-12 for x, y in zip(pos_vals, pos_vals[1:]))
    # widening the negative angle lowers cos(neg, s): phi does not go up
    assert all(x >= y - 1e-12 for x, y in zip(neg_vals, neg_vals[1:]))


def test_negative_sampler():
    sampler = NegativeSampler(["a", "b", "c", "d"], seed=1)
    draws = [sampler.sample("a", "B") for _ in range(600)]
    assert set(draws) == {"c", "d"}
    assert 250 < draws.count("c") < 350
    again = NegativeSampler(["a", "b", "c", "d"], seed=1)
    assert [again.sample("a", "b") for _ in range(600)] == draws
    with pytest.raises(ValueError, match="more than 2"):
        NegativeSampler(["a", "b", "A"])


def _draws(bench, rate=0.0, seed=0):
    exs = bench.unlabeled[:5]
    ents = {e for ex in bench.labeled + bench.unlabeled for e in (ex.e1, ex.e2)}
    aug = Augmenter(EdaConfig(rate=rate), bench.synonyms)
    return draw_unlabeled(exs, aug, NegativeSampler(ents, seed), np.random.default_rng(seed))


def test_identity_augmentation_gives_zero_consistency(model, bench):
    draws = _draws(bench, rate=0.0)
    assert consistency_loss(model, draws).item() == 0.0


def test_consistency_positive_under_augmentation(model, bench):
    assert consistency_loss(model, _draws(bench, rate=0.4)).item() > 0


def test_cosine_loss_single_sample_reduces_to_phi(model, bench):
    draws = _draws(bench)
    one = UnlabeledDraws(draws.examples[:1], [draws.augmented[0][:1]], draws.negatives[:1])
    ex, er = one.examples[0], one.negatives[0]
    out = model.forward([ex])
    expect = cosine_phi(out.h_pair, model.forward_pair([(ex.e1, er)]), out.h_sent).item()
    assert cosine_loss(model, one).item() == pytest.approx(expect, abs=1e-15)


def test_cosine_loss_deterministic_and_bounded(model, bench):
    a = cosine_loss(model, _draws(bench, seed=4)).item()
    b = cosine_loss(model, _draws(bench, seed=4)).item()
    assert a == b and 0.0 <= a <= 3.0


def test_joint_empty_unlabeled_equals_ce(model, bench):
    lb = joint_loss(model, bench.labeled[:4], None)
    assert lb.total == lb.ce and lb.consistency == 0.0 and lb.cosine == 0.0
    with pytest.raises(ValueError, match="empty"):
        joint_loss(model, [], None)


def test_joint_total_is_exact_weighted_sum(model, bench):
    draws = _draws(bench, rate=0.3)
    for w in (LossWeights(), LossWeights(0.5, 2.0, 0.25)):
        lb = joint_loss(model, bench.labeled[:4], draws, w)
        assert lb.total == lb.ce * w.ce + lb.consistency * w.consistency + lb.cosine * w.cosine
        assert min(lb.ce, lb.consistency, lb.cosine) >= 0


def test_joint_identity_augmentation(model, bench):
    draws = _draws(bench, rate=0.0)
    lb = joint_loss(model, bench.labeled[:4], draws)
    assert lb.consistency == 0.0
    assert lb.total == lb.ce + lb.cosine


def _grads(model, loss):
    params = model.trainable_parameters()
    for p in params.values():
        p.grad = None
    loss.backward()
    return {n: (np.zeros_like(p.data) if p.grad is None else p.grad.copy()) for n, p in params.items()}


def test_joint_gradient_is_sum_of_component_gradients(model, bench):
    draws = _draws(bench, rate=0.3)
    lab = bench.labeled[:4]
    clean = model.forward(draws.examples).probs.data
    total = _grads(model, joint_loss(model, lab, draws, clean_probs=clean).graph)
    parts = [
        _grads(model, joint_loss(model, lab, draws, LossWeights(1, 0, 0), clean_probs=clean).graph),
        _grads(model, joint_loss(model, [], draws, LossWeights(0, 1, 0), clean_probs=clean).graph),
        _grads(model, joint_loss(model, [], draws, LossWeights(0, 0, 1), clean_probs=clean).graph),
    ]
    for name, g in total.items():
        np.testing.assert_allclose(g, sum(p[name] for p in parts), rtol=0, atol=1e-10)


def test_stop_gradient_blocks_clean_branch(model, bench):
    draws = _draws(bench, rate=0.0)
    # identical inputs: with the target frozen, KL(p||p) is at its minimum
    g = _grads(model, consistency_loss(model, draws))
    assert all(np.max(np.abs(v)) < 1e-12 for v in g.values())
    # letting gradients through the clean branch as well still gives zero here,
    # but the graph then reaches the clean forward pass
    free = consistency_loss(model, draws, stop_gradient=False)
    assert free.item() == 0.0
