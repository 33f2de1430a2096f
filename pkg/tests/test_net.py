import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from voronoi_adv.net import (
    SGD,
    Adam,
    MlpModel,
    forward,
    gradient_relative_error,
    init_mlp,
    input_gradient,
    loss_and_grads,
    make_optimizer,
    numerical_gradients,
    per_example_losses,
    predict,
)

KINK_MARGIN = 1e-3


def zero_model(d, h, c):
    return MlpModel(np.zeros((h, d)), np.zeros(h), np.zeros((c, h)), np.zeros(c))


def draw_away_from_kinks(model, rng):
    """Finite differences are only meaningful where no ReLU sits at its kink."""
    while True:
        x = rng.normal(size=model.d_in)
        if np.min(np.abs(model.W1 @ x + model.b1)) > KINK_MARGIN:
            return x


class TestForward:
    def test_zero_params(self):
        assert np.array_equal(forward(zero_model(3, 4, 5), np.ones(3)), np.zeros(5))

    def test_identity(self):
        eye = np.eye(4)
        model = MlpModel(eye, np.zeros(4), eye, np.zeros(4))
        x = np.array([0.0, 1.5, 2.0, 7.0])
        assert np.array_equal(forward(model, x), x)

    def test_relu_clips_negative(self):
        eye = np.eye(2)
        model = MlpModel(eye, np.zeros(2), eye, np.zeros(2))
        assert np.array_equal(forward(model, np.array([-1.0, 2.0])), [0.0, 2.0])

    def test_batch_matches_single(self):
        model = init_mlp(5, 7, 3, seed=1)
        X = np.random.default_rng(0).normal(size=(6, 5))
        assert np.allclose(forward(model, X), np.array([forward(model, x) for x in X]), rtol=0, atol=1e-14)

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            forward(init_mlp(2, 3, 2), np.array([np.nan, 0.0]))

    def test_dimension_rejected(self):
        with pytest.raises(ValueError):
            forward(init_mlp(2, 3, 2), np.zeros(3))

    def test_inconsistent_shapes(self):
        with pytest.raises(ValueError):
            MlpModel(np.zeros((3, 2)), np.zeros(4), np.zeros((2, 3)), np.zeros(2))


class TestInit:
    def test_glorot_limits(self):
        model = init_mlp(102, 100, 2, seed=0)
        assert np.abs(model.W1).max() <= math.sqrt(6 / 202)
        assert np.abs(model.W2).max() <= math.sqrt(6 / 102)
        assert np.all(model.b1 == 0) and np.all(model.b2 == 0)
        assert model.dims == (102, 100, 2)

    def test_determinism(self):
        a, b = init_mlp(4, 8, 2, seed=3), init_mlp(4, 8, 2, seed=3)
        assert all(np.array_equal(a.params()[k], b.params()[k]) for k in a.params())
        assert not np.array_equal(a.W1, init_mlp(4, 8, 2, seed=4).W1)


class TestLoss:
    @pytest.mark.parametrize("c", [2, 3, 10])
    def test_uniform_logits(self, c):
        loss, _, _ = loss_and_grads(zero_model(4, 3, c), np.ones(4), 0)
        assert loss == pytest.approx(math.log(c), rel=1e-15)

    def test_saturated_input_gradient(self):
        model = MlpModel(np.eye(2), np.zeros(2), np.array([[50.0, 0.0], [0.0, 0.0]]), np.zeros(2))
        _, _, gx = loss_and_grads(model, np.array([1.0, 0.0]), 0)
        assert np.linalg.norm(gx) < 1e-15

    def test_large_logits_stable(self):
        model = MlpModel(np.eye(1), np.zeros(1), np.array([[1e4], [-1e4]]), np.zeros(2))
        loss, _, _ = loss_and_grads(model, np.array([1.0]), 1)
        assert loss == pytest.approx(2e4)

    def test_label_out_of_range(self):
        with pytest.raises(ValueError):
            loss_and_grads(init_mlp(2, 3, 2), np.zeros(2), 2)

    def test_batch_mean(self):
        model = init_mlp(3, 5, 2, seed=2)
        X = np.random.default_rng(1).normal(size=(4, 3))
        y = np.array([0, 1, 1, 0])
        loss, grads, gx = loss_and_grads(model, X, y)
        singles = [loss_and_grads(model, X[i], y[i]) for i in range(4)]
        assert loss == pytest.approx(np.mean([s[0] for s in singles]), rel=1e-14)
        assert np.allclose(grads["W1"], np.mean([s[1]["W1"] for s in singles], axis=0), atol=1e-15)
        assert np.allclose(gx, np.array([s[2] for s in singles]), atol=1e-15)
        g2, losses = input_gradient(model, X, y)
        assert np.array_equal(g2, gx)
        assert np.allclose(losses, per_example_losses(model, X, y))


@settings(max_examples=30, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    d=st.sampled_from([1, 2, 5, 12]),
    hidden=st.integers(1, 20),
    c=st.integers(2, 5),
)
def test_gradients_match_finite_differences(seed, d, hidden, c):
    rng = np.random.default_rng(seed)
    model = init_mlp(d, hidden, c, seed=seed)
    model.b1[:] = rng.normal(scale=0.1, size=hidden)
    model.b2[:] = rng.normal(scale=0.1, size=c)
    x = draw_away_from_kinks(model, rng)
    y = int(rng.integers(c))
    _, grads, gx = loss_and_grads(model, x, y)
    num = numerical_gradients(model, x, y)
    for name, g in {**grads, "x": gx}.items():
        assert gradient_relative_error(g, num[name]) <= 1e-5, name


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_loss_non_negative(seed):
    rng = np.random.default_rng(seed)
    model = init_mlp(3, 6, 4, seed=seed)
    X = rng.normal(scale=10, size=(8, 3))
    assert np.all(per_example_losses(model, X, rng.integers(0, 4, 8)) >= 0)


def test_predict_argmax():
    model = MlpModel(np.eye(2), np.zeros(2), np.eye(2), np.zeros(2))
    assert list(predict(model, np.array([[1.0, 0.2], [0.1, 3.0]]))) == [0, 1]


class TestOptimizers:
    def test_adam_zero_gradient(self):
        model = init_mlp(2, 3, 2, seed=0)
        before = model.copy()
        Adam(lr=0.1).step(model, {k: np.zeros_like(v) for k, v in model.params().items()})
        assert all(np.array_equal(model.params()[k], before.params()[k]) for k in model.params())

    @pytest.mark.parametrize("g", [0.3, -2.0, 1e-3])
    def test_adam_first_step(self, g):
        # bias-corrected moments are g and g^2, so the step is -lr * g / (|g| + eps)
        model = MlpModel(np.ones((1, 1)), np.zeros(1), np.ones((1, 1)), np.zeros(1))
        grads = {k: np.full_like(v, g) for k, v in model.params().items()}
        Adam(lr=0.1).step(model, grads)
        expect = 1.0 - 0.1 * g / (abs(g) + 1e-8)
        assert model.W1[0, 0] == pytest.approx(expect, rel=1e-14)
        assert abs(model.W1[0, 0] - (1.0 - 0.1 * np.sign(g))) < 1e-6

    def test_adam_step_counter(self):
        opt = Adam()
        model = init_mlp(2, 2, 2)
        grads = {k: np.ones_like(v) for k, v in model.params().items()}
        for _ in range(3):
            opt.step(model, grads)
        assert opt.t == 3

    def test_sgd_exact(self):
        model = init_mlp(3, 4, 2, seed=5)
        before = model.copy()
        rng = np.random.default_rng(0)
        grads = {k: rng.normal(size=v.shape) for k, v in model.params().items()}
        SGD(lr=0.05).step(model, grads)
        for k in grads:
            assert np.array_equal(model.params()[k], before.params()[k] - 0.05 * grads[k])

    def test_sgd_momentum(self):
        model = MlpModel(np.zeros((1, 1)), np.zeros(1), np.zeros((1, 1)), np.zeros(1))
        opt = SGD(lr=1.0, momentum=0.5)
        grads = {k: np.ones_like(v) for k, v in model.params().items()}
        opt.step(model, grads)
        opt.step(model, grads)
        assert model.W1[0, 0] == pytest.approx(-2.5)

    def test_factory(self):
        assert isinstance(make_optimizer("adam", 0.1), Adam)
        assert isinstance(make_optimizer("SGD", 0.1, 0.9), SGD)
        with pytest.raises(ValueError):
            make_optimizer("rmsprop")
