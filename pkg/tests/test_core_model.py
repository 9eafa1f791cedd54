import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kfl.core.model import (LocalModel, extract, forward, init_model, loss_and_grads,
                            mlp_param_count, predict)
from kfl.verify import gradient_error, toy_problem


def test_param_count_of_reference_mlp():
    assert mlp_param_count([784, 512, 256, 64, 10]) == 550346
    m = init_model(784, (512, 256), 64, 10, np.random.default_rng(0))
    assert m.num_params == 550346


def test_zero_weights_give_uniform_probs():
    m = init_model(5, (4,), 3, 7, np.random.default_rng(0))
    m = m.with_flat(np.zeros(m.num_params))
    _, p = forward(m, np.ones(5))
    assert np.allclose(p, 1 / 7)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=50, deadline=None)
def test_probs_normalized(seed):
    rng = np.random.default_rng(seed)
    m = init_model(6, (8, 5), 4, 3, rng, predictor_hidden=(3,))
    _, p = forward(m, rng.normal(size=(10, 6)) * 10)
    assert np.all(p >= 0)
    assert np.allclose(p.sum(axis=1), 1.0)


def test_hand_computed_two_layer_features():
    w1 = np.array([[1.0, -1.0], [2.0, 0.5]])
    b1 = np.array([0.0, 1.0])
    w2 = np.array([[1.0, 2.0], [-1.0, 1.0]])
    b2 = np.array([-1.0, 0.0])
    m = LocalModel([(w1, b1), (w2, b2)], [(np.zeros((2, 2)), np.zeros(2))])
    z, _ = forward(m, np.array([1.0, 1.0]))
    # layer 1: [1+2, -1+0.5+1] = [3, 0.5]; layer 2: [3-0.5-1, 6+0.5] = [1.5, 6.5]
    assert np.allclose(z, [1.5, 6.5])
    z, _ = forward(m, np.array([-1.0, 0.0]))
    # layer 1: relu([-1, 2]) = [0, 2]; layer 2: relu([-2-1, 2]) = [0, 2]
    assert np.allclose(z, [0.0, 2.0])


def test_forward_dimension_mismatch():
    m = init_model(5, (4,), 3, 2, np.random.default_rng(0))
    with pytest.raises(ValueError):
        forward(m, np.ones(4))


def test_init_bounds_and_seeding():
    m = init_model(20, (32,), 8, 10, np.random.default_rng(1))
    a = math.sqrt(6 / (20 + 32))
    assert np.abs(m.extractor[0][0]).max() <= a
    assert np.all(m.extractor[0][1] == 0)
    again = init_model(20, (32,), 8, 10, np.random.default_rng(1))
    assert np.array_equal(m.flat(), again.flat())


def test_flat_round_trip():
    m = init_model(4, (3,), 2, 2, np.random.default_rng(0))
    v = np.arange(m.num_params, dtype=float)
    assert np.array_equal(m.with_flat(v).flat(), v)
    assert not np.array_equal(m.flat(), v)  # original untouched


def test_loss_perfect_prediction_is_zero():
    m = LocalModel([(np.eye(2), np.zeros(2))], [(np.eye(2) * 1e3, np.zeros(2))])
    X = np.array([[1.0, 0.0], [0.0, 1.0]])
    loss, _, _ = loss_and_grads(m, X, np.array([0, 1]))
    assert loss.empirical == pytest.approx(0.0, abs=1e-12)


def test_loss_uniform_prediction_is_log_classes():
    m = init_model(3, (4,), 2, 5, np.random.default_rng(0))
    m = m.with_flat(np.zeros(m.num_params))
    loss, _, _ = loss_and_grads(m, np.ones((4, 3)), np.array([0, 1, 2, 3]))
    assert loss.empirical == pytest.approx(math.log(5))


def test_loss_matches_scalar_loop():
    rng = np.random.default_rng(3)
    m = init_model(4, (5,), 3, 4, rng)
    m = m.with_flat(rng.normal(size=m.num_params))
    X, y = rng.normal(size=(7, 4)), rng.integers(0, 4, 7)
    total = 0.0
    for x, label in zip(X, y):
        a = x
        for w, b in m.extractor:
            a = np.array([max(0.0, sum(a[i] * w[i, j] for i in range(len(a))) + b[j])
                          for j in range(w.shape[1])])
        w, b = m.predictor[0]
        logits = [sum(a[i] * w[i, j] for i in range(len(a))) + b[j] for j in range(w.shape[1])]
        top = max(logits)
        total -= logits[label] - top - math.log(sum(math.exp(l - top) for l in logits))
    loss, _, _ = loss_and_grads(m, X, y)
    assert loss.empirical == pytest.approx(total / len(y), abs=1e-10)


def test_knowledge_term_zero_when_features_hit_prototypes():
    rng = np.random.default_rng(0)
    m = init_model(3, (4,), 2, 2, rng)
    X, y = rng.normal(size=(1, 3)), np.array([1])
    protos = np.full((2, 2), np.nan)
    protos[1] = extract(m, X)[0]
    loss, _, _ = loss_and_grads(m, X, y, protos, 0.5)
    assert loss.knowledge == pytest.approx(0.0, abs=1e-15)
    assert loss.total == pytest.approx(loss.empirical)


def test_knowledge_term_distance_two():
    rng = np.random.default_rng(0)
    m = init_model(3, (4,), 2, 2, rng)
    X, y = rng.normal(size=(3, 3)), np.array([0, 1, 1])
    z = extract(m, X)
    protos = np.full((2, 2), np.nan)
    protos[0] = z[0] + np.array([2.0, 0.0])  # only sample 0 has a prototype
    loss, _, _ = loss_and_grads(m, X, y, protos, 1.0)
    assert loss.knowledge == pytest.approx(0.5 * 4 / 3)
    assert loss.missing_prototypes == 2


def test_gradient_on_toy_model():
    rng = np.random.default_rng(9)
    for _ in range(20):
        model, X, y, protos = toy_problem(rng)
        assert model.num_params == 20
        assert gradient_error(model, X, y, protos, float(rng.uniform(0.01, 1.0))) <= 1e-4


def test_gradient_with_predictor_hidden_layer_and_missing_prototypes():
    rng = np.random.default_rng(1)
    m = init_model(4, (5, 3), 3, 4, rng, predictor_hidden=(4,))
    m = m.with_flat(rng.normal(size=m.num_params))
    X, y = rng.normal(size=(8, 4)), rng.integers(0, 4, 8)
    protos = rng.normal(size=(4, 3))
    protos[2] = np.nan
    assert gradient_error(m, X, y, protos, 0.3) <= 1e-4


def test_predict_argmax():
    m = LocalModel([(np.eye(2), np.zeros(2))], [(np.array([[1.0, 0.0], [0.0, 1.0]]), np.zeros(2))])
    assert list(predict(m, np.array([[3.0, 1.0], [0.0, 2.0]]))) == [0, 1]
