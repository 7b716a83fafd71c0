"""Pairwise loss: probabilities, cross entropy, and the analytic gradient."""

import math

import numpy as np
import pytest

from activerank.network import (
    NetworkConfig,
    init_params,
    sample_mask,
    forward,
)
from activerank.ranking import (
    AnnotatedPair,
    PairBatch,
    RankingError,
    batch_loss,
    batch_loss_grad,
    pair_loss,
    pair_probability,
    validate_label,
)

LN2 = 0.6931471805599453


def make_instance(seed, sizes=(3, 4, 1), n_pairs=4, dropout=0.3, activation="relu"):
    """Random params, features, labels, and per-pair masks."""
    rng = np.random.default_rng(seed)
    config = NetworkConfig(layer_sizes=sizes, dropout_prob=dropout, activation=activation)
    params = init_params(config, seed=int(rng.integers(1 << 30)))
    ids = [f"x{k}" for k in range(2 * n_pairs)]
    features = {sid: rng.normal(size=sizes[0]) for sid in ids}
    labels = rng.choice([0.0, 0.5, 1.0], size=n_pairs)
    pairs = [
        AnnotatedPair(ids[2 * k], ids[2 * k + 1], float(labels[k])) for k in range(n_pairs)
    ]
    masks = [
        (
            sample_mask(config, seed=int(rng.integers(1 << 30))),
            sample_mask(config, seed=int(rng.integers(1 << 30))),
        )
        for _ in range(n_pairs)
    ]
    return params, PairBatch(pairs=pairs, features=features), masks


# -- labels and pairs --------------------------------------------------------


def test_label_codomain():
    for value in (0.0, 0.5, 1.0):
        assert validate_label(value) == value
    for value in (0.7, -1.0, 2.0, 0.499999):
        with pytest.raises(RankingError):
            validate_label(value)


def test_pair_rejects_self_comparison():
    with pytest.raises(RankingError):
        AnnotatedPair("a", "a", 1.0)


def test_batch_requires_features_for_every_id():
    pair = AnnotatedPair("a", "b", 1.0)
    with pytest.raises(RankingError):
        PairBatch(pairs=[pair], features={"a": np.zeros(2)})


# -- probability -------------------------------------------------------------


def test_pair_probability_anchor_and_monotonicity():
    assert pair_probability(0.0, 0.0) == pytest.approx(0.5, abs=1e-15)
    assert pair_probability(2.0, 0.0) == pytest.approx(1.0 / (1.0 + math.exp(-2.0)))
    assert pair_probability(5.0, 1.0) > pair_probability(4.0, 1.0)


def test_pair_probability_antisymmetry():
    rng = np.random.default_rng(0)
    for _ in range(2000):
        a, b = rng.normal(scale=5.0, size=2)
        assert pair_probability(a, b) + pair_probability(b, a) == pytest.approx(1.0, abs=1e-12)


def test_pair_probability_extreme_scores_stay_finite():
    assert pair_probability(1000.0, -1000.0) == pytest.approx(1.0)
    assert pair_probability(-1000.0, 1000.0) == pytest.approx(0.0, abs=1e-300)


def test_pair_probability_rejects_nonfinite():
    with pytest.raises(RankingError):
        pair_probability(float("nan"), 0.0)


# -- loss --------------------------------------------------------------------


def test_pair_loss_tie_anchor_is_ln2():
    assert pair_loss(0.5, 0.5) == pytest.approx(LN2, abs=1e-12)


def test_pair_loss_reduces_to_log_terms():
    rng = np.random.default_rng(1)
    for _ in range(200):
        p = float(rng.uniform(0.01, 0.99))
        assert pair_loss(p, 1.0) == pytest.approx(-math.log(p), rel=1e-12)
        assert pair_loss(p, 0.0) == pytest.approx(-math.log(1.0 - p), rel=1e-12)


def test_pair_loss_rejects_degenerate_probability():
    for p in (0.0, 1.0, -0.1, 1.1):
        with pytest.raises(RankingError):
            pair_loss(p, 1.0)


def test_pair_loss_is_clamped_near_the_edges():
    assert math.isfinite(pair_loss(1e-300, 1.0))
    assert math.isfinite(pair_loss(1.0 - 1e-16, 0.0))


# -- batch loss vs the scalar path --------------------------------------------


def test_batch_loss_matches_per_pair_recomputation():
    """The vectorized batch loss must agree with the public scalar ops."""
    for seed in range(8):
        params, batch, masks = make_instance(seed)
        wd = 1e-4 if seed % 2 else 0.0
        total = batch_loss(params, batch, masks, weight_decay=wd)
        expected = 0.0
        for pair, (mask_i, mask_j) in zip(batch.pairs, masks):
            fi = forward(params, batch.features[pair.i], mask_i)
            fj = forward(params, batch.features[pair.j], mask_j)
            expected += pair_loss(pair_probability(fi, fj), pair.label)
        expected += wd * sum(float((w * w).sum()) for w in params.weights)
        assert total == pytest.approx(expected, rel=1e-10)


def test_batch_loss_grad_mask_count_must_match():
    params, batch, masks = make_instance(3)
    with pytest.raises(RankingError):
        batch_loss_grad(params, batch, masks[:-1], weight_decay=0.0)


def test_weight_decay_adds_exactly_two_lambda_w():
    params, batch, masks = make_instance(4)
    g0 = batch_loss_grad(params, batch, masks, weight_decay=0.0)
    g1 = batch_loss_grad(params, batch, masks, weight_decay=1e-2)
    for w, a, b in zip(params.weights, g0.weights, g1.weights):
        np.testing.assert_allclose(b - a, 2e-2 * w, rtol=1e-9, atol=1e-12)
    for a, b in zip(g0.biases, g1.biases):
        np.testing.assert_array_equal(a, b)  # decay never touches biases


# -- gradient vs finite differences ------------------------------------------


def flatten(arrays):
    return np.concatenate([a.ravel() for a in arrays])


def numeric_gradient(params, batch, masks, wd, h=1e-6):
    """Central differences over every parameter coordinate."""
    grads = []
    for kind in ("weights", "biases"):
        for l in range(len(params.weights)):
            arr = getattr(params, kind)[l]
            g = np.zeros_like(arr)
            it = np.nditer(arr, flags=["multi_index"])
            while not it.finished:
                idx = it.multi_index
                orig = arr[idx]
                arr[idx] = orig + h
                hi = batch_loss(params, batch, masks, weight_decay=wd)
                arr[idx] = orig - h
                lo = batch_loss(params, batch, masks, weight_decay=wd)
                arr[idx] = orig
                g[idx] = (hi - lo) / (2.0 * h)
                it.iternext()
            grads.append(g)
    return grads


def relu_kink_margin(params, batch, masks):
    """Smallest |pre-activation| across both sides of every pair."""
    smallest = np.inf
    for pair, (mask_i, mask_j) in zip(batch.pairs, masks):
        for sid, mask in ((pair.i, mask_i), (pair.j, mask_j)):
            a = np.asarray(batch.features[sid])
            for l in range(len(params.weights) - 1):
                z = a @ params.weights[l] + params.biases[l]
                smallest = min(smallest, float(np.min(np.abs(z))))
                a = np.maximum(z, 0.0) * mask.layers[l] * params.config.keep_scale
    return smallest


def test_gradient_matches_finite_differences_tanh():
    """Smooth activation first: no kink caveats."""
    for seed in range(6):
        params, batch, masks = make_instance(seed, sizes=(2, 5, 1), activation="tanh")
        wd = (0.0, 1e-4)[seed % 2]
        analytic = batch_loss_grad(params, batch, masks, weight_decay=wd)
        numeric = numeric_gradient(params, batch, masks, wd)
        got = flatten(analytic.weights + analytic.biases)
        want = flatten(numeric)
        err = np.max(np.abs(got - want) / np.maximum(1.0, np.maximum(np.abs(got), np.abs(want))))
        assert err < 1e-6, f"seed {seed}: max relative error {err}"


def test_gradient_matches_finite_differences_relu():
    checked = 0
    seed = 0
    while checked < 6:
        params, batch, masks = make_instance(seed, sizes=(3, 6, 4, 1))
        seed += 1
        if relu_kink_margin(params, batch, masks) < 1e-3:
            continue  # finite differences straddle a kink; reroll
        analytic = batch_loss_grad(params, batch, masks, weight_decay=1e-4)
        numeric = numeric_gradient(params, batch, masks, 1e-4)
        got = flatten(analytic.weights + analytic.biases)
        want = flatten(numeric)
        err = np.max(np.abs(got - want) / np.maximum(1.0, np.maximum(np.abs(got), np.abs(want))))
        assert err < 1e-6, f"instance {seed - 1}: max relative error {err}"
        checked += 1
