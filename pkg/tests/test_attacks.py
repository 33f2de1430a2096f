import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from voronoi_adv import attacks
from voronoi_adv.attacks import (
    AttackConfig,
    ascent_direction,
    ball_pgd,
    fgsm,
    perturbation_norm,
    project_ball,
    run_attack,
    voronoi_pgd,
)
from voronoi_adv.geometry import make_planes
from voronoi_adv.net import MlpModel, init_mlp, per_example_losses
from voronoi_adv.voronoi import ConstraintSet, NeighborIndex, constraint_sets, in_voronoi_cell


def linear_model(w, bias=0.0):
    """Two-class net whose second logit is ``w . x + bias`` (first logit 0).

    ``(relu(c + x) - relu(c - x)) / 2 = x`` for ``|x| < c``, with no ReLU kink
    anywhere in that range.
    """
    w = np.asarray(w, dtype=np.float64)
    d = w.size
    W1 = np.vstack([np.eye(d), -np.eye(d)])
    W2 = np.vstack([np.zeros(2 * d), np.concatenate([w, -w]) / 2])
    return MlpModel(W1, np.full(2 * d, 100.0), W2, np.array([0.0, bias]))


def sigmoid(z):
    return 1 / (1 + np.exp(-z))


class TestFGSM:
    def test_zero_gradient(self):
        model = MlpModel(np.zeros((3, 2)), np.zeros(3), np.zeros((2, 3)), np.zeros(2))
        x = np.array([0.3, -0.2])
        assert np.array_equal(fgsm(model, x, 0, 0.5, np.inf), x)
        assert np.array_equal(fgsm(model, x, 0, 0.5, 2), x)

    def test_zero_budget(self):
        model = init_mlp(4, 10, 2, seed=1)
        x = np.random.default_rng(0).normal(size=(5, 4))
        assert np.array_equal(fgsm(model, x, np.zeros(5, int), 0.0, np.inf), x)

    @pytest.mark.parametrize("w,x,y", [(1.5, 0.2, 0), (1.5, 0.2, 1), (-0.7, -1.0, 1), (-0.7, 3.0, 0)])
    def test_logistic_closed_form(self, w, x, y):
        model = linear_model([w])
        grad = w * (sigmoid(w * x) - (y == 1))
        out = fgsm(model, np.array([x]), y, 0.25, np.inf)
        assert out[0] == pytest.approx(x + 0.25 * np.sign(grad), abs=1e-15)
        out2 = fgsm(model, np.array([x]), y, 0.25, 2)
        assert out2[0] == pytest.approx(x + 0.25 * np.sign(grad), abs=1e-15)

    def test_l2_uses_unit_gradient(self):
        w = np.array([3.0, 4.0])
        out = fgsm(linear_model(w), np.zeros(2), 0, 1.0, 2)
        assert np.allclose(out, [0.6, 0.8], atol=1e-15)

    def test_negative_budget(self):
        with pytest.raises(ValueError):
            fgsm(linear_model([1.0]), np.zeros(1), 0, -0.1)


class TestBallPGD:
    def test_single_clipped_step_is_fgsm(self):
        model = init_mlp(6, 20, 3, seed=2)
        x = np.random.default_rng(1).normal(size=(10, 6))
        y = np.arange(10) % 3
        cfg = AttackConfig("bim", np.inf, 0.3, step=0.5, iters=1)
        assert np.allclose(ball_pgd(model, x, y, cfg), fgsm(model, x, y, 0.3, np.inf), atol=1e-15)

    def test_default_step(self):
        assert AttackConfig("bim", 2, 0.4).resolved_step() == pytest.approx(0.025)
        assert AttackConfig("voronoi_pgd", 2).resolved_step() == 0.05

    def test_random_start_defaults(self):
        assert AttackConfig("ball_pgd", 2, 0.1).uses_random_start()
        assert not AttackConfig("bim", 2, 0.1).uses_random_start()
        assert not AttackConfig("voronoi_pgd", 2, random_start=True).uses_random_start()

    def test_linear_linf_beats_random_search(self):
        rng = np.random.default_rng(3)
        w = rng.normal(size=5)
        model = linear_model(w)
        x = rng.normal(size=5)
        cfg = AttackConfig("bim", np.inf, 0.2, iters=40)
        out = ball_pgd(model, x, 0, cfg)
        best = per_example_losses(model, out[None], [0])[0]
        cand = x + rng.uniform(-0.2, 0.2, size=(10_000, 5))
        assert best >= per_example_losses(model, cand, np.zeros(10_000, int)).max()
        assert np.allclose(out, x + 0.2 * np.sign(w), atol=1e-12)

    def test_linear_loss_monotone_per_iteration(self):
        rng = np.random.default_rng(4)
        model = linear_model(rng.normal(size=3))
        x = rng.normal(size=(20, 3))
        y = rng.integers(0, 2, 20)
        for p in (2, np.inf):
            prev = per_example_losses(model, x, y)
            for it in range(1, 15):
                out = ball_pgd(model, x, y, AttackConfig("bim", p, 0.5, iters=it))
                cur = per_example_losses(model, out, y)
                assert np.all(cur >= prev - 1e-12)
                prev = cur

    def test_random_start_is_seeded(self):
        model = init_mlp(3, 8, 2, seed=0)
        x = np.zeros((4, 3))
        cfg = AttackConfig("ball_pgd", 2, 0.5, iters=2)
        a = ball_pgd(model, x, np.zeros(4, int), cfg, seed=7)
        b = ball_pgd(model, x, np.zeros(4, int), cfg, seed=7)
        assert np.array_equal(a, b)

    def test_wrong_kind(self):
        with pytest.raises(ValueError):
            ball_pgd(init_mlp(2, 2, 2), np.zeros(2), 0, AttackConfig("fgsm", 2, 0.1))


@settings(max_examples=60, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    kind=st.sampled_from(["bim", "ball_pgd"]),
    p=st.sampled_from([2, np.inf]),
    eps=st.floats(0.0, 3.0),
    iters=st.integers(1, 12),
    step_scale=st.floats(0.01, 5.0),
)
def test_ball_budget(seed, kind, p, eps, iters, step_scale):
    rng = np.random.default_rng(seed)
    model = init_mlp(4, 16, 3, seed=seed)
    x = rng.normal(size=(16, 4))
    cfg = AttackConfig(kind, p, eps, step=step_scale * max(eps, 1e-3), iters=iters)
    out = ball_pgd(model, x, rng.integers(0, 3, 16), cfg, seed=seed)
    assert np.all(perturbation_norm(x, out, p) <= eps + 1e-9)


class TestProjection:
    def test_l2(self):
        out = project_ball(np.zeros(2), np.array([3.0, 4.0]), 1.0, 2)
        assert np.allclose(out, [0.6, 0.8])

    def test_linf(self):
        out = project_ball(np.zeros(2), np.array([3.0, -0.2]), 1.0, np.inf)
        assert np.array_equal(out, [1.0, -0.2])

    def test_inside_untouched(self):
        x = np.array([0.1, 0.2])
        assert np.array_equal(project_ball(np.zeros(2), x, 1.0, 2), x)

    def test_direction_zero(self):
        assert np.array_equal(ascent_direction(np.zeros((1, 3)), 2), np.zeros((1, 3)))


class TestVoronoiPGD:
    def ascending_model(self):
        # class index 0 loss grows with x, so the ascent direction is +1
        return linear_model([2.0])

    def test_hand_trajectory(self):
        cs = ConstraintSet([0.0], [[2.0]], 1)
        cfg = AttackConfig("voronoi_pgd", 2, step=0.3, iters=40)
        out = voronoi_pgd(self.ascending_model(), np.array([0.0]), 0, cs, cfg)
        assert out[0] == pytest.approx(0.9, abs=1e-12)

    def test_lands_on_bisector(self):
        cs = ConstraintSet([0.0], [[2.0]], 1)
        cfg = AttackConfig("voronoi_pgd", 2, step=0.25, iters=40)
        out = voronoi_pgd(self.ascending_model(), np.array([0.0]), 0, cs, cfg)
        assert out[0] == 1.0

    def test_zero_step(self):
        cs = ConstraintSet([0.0], [[2.0]], 1)
        cfg = AttackConfig("voronoi_pgd", 2, step=0.0, iters=40)
        assert voronoi_pgd(self.ascending_model(), np.array([0.0]), 0, cs, cfg)[0] == 0.0

    def test_empty_constraints_follow_free_ascent(self):
        model = init_mlp(3, 12, 2, seed=6)
        x0 = np.array([0.2, -0.4, 0.1])
        cs = ConstraintSet(x0, np.zeros((0, 3)), 1)
        cfg = AttackConfig("voronoi_pgd", 2, step=0.05, iters=25)
        out = voronoi_pgd(model, x0, 1, cs, cfg)
        cur = x0.copy()
        for _ in range(25):
            cur = fgsm(model, cur, 1, 0.05, 2)
        assert np.allclose(out, cur, atol=1e-14)

    def test_infeasible_first_step_returns_anchor(self):
        # one step overshoots the bisector at 1, so the anchor is returned
        cs = ConstraintSet([0.0], [[2.0]], 1)
        cfg = AttackConfig("voronoi_pgd", 2, step=3.0, iters=5)
        assert voronoi_pgd(self.ascending_model(), np.array([0.0]), 0, cs, cfg)[0] == 0.0

    def test_anchor_mismatch(self):
        cs = ConstraintSet([1.0], [[2.0]], 1)
        with pytest.raises(ValueError):
            voronoi_pgd(self.ascending_model(), np.array([0.0]), 0, cs, AttackConfig("voronoi_pgd", 2))

    def test_run_attack_needs_constraints(self):
        with pytest.raises(ValueError):
            run_attack(self.ascending_model(), np.zeros(1), 0, AttackConfig("voronoi_pgd", 2))

    def test_linf_ascent_uses_sign(self):
        model = linear_model([1.0, -3.0])
        cs = ConstraintSet([0.0, 0.0], [[10.0, 10.0]], 1)
        out = voronoi_pgd(model, np.zeros(2), 0, cs, AttackConfig("voronoi_pgd", np.inf, step=0.1, iters=3))
        assert np.allclose(out, [0.3, -0.3], atol=1e-15)


@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    p=st.sampled_from([2, np.inf]),
    step=st.floats(0.01, 1.5),
    m=st.integers(1, 5),
)
def test_voronoi_outputs_feasible(seed, p, step, m):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(24, 3))
    labels = np.repeat([1, 2, 3], 8)
    idx = NeighborIndex(pts, labels, p)
    batch = constraint_sets(idx, m)
    model = init_mlp(3, 10, 3, seed=seed)
    cfg = AttackConfig("voronoi_pgd", p, step=step, iters=20)
    out = voronoi_pgd(model, pts, labels - 1, batch, cfg)
    assert np.all(batch.contains(out, p))
    for i in range(24):
        assert in_voronoi_cell(pts[i], out[i], batch.get(i), p)


def test_voronoi_on_planes_stays_on_own_side():
    train, _ = make_planes(1.0, 1)
    idx = NeighborIndex.from_dataset(train)
    batch = constraint_sets(idx, 10)
    model = init_mlp(train.d, 20, 2, seed=0)
    out = voronoi_pgd(model, train.points, train.labels - 1, batch, AttackConfig("voronoi_pgd", 2, step=0.05))
    # the rival plane is two units away, so no feasible point crosses the midplane
    side = np.where(train.labels == 1, out[:, -1] <= 1 + 1e-12, out[:, -1] >= 1 - 1e-12)
    assert np.all(side)


@pytest.mark.parametrize("p", [2, np.inf])
def test_voronoi_chunking_is_invisible(monkeypatch, p):
    rng = np.random.default_rng(5)
    pts = rng.normal(size=(40, 6))
    labels = np.repeat([1, 2], 20)
    batch = constraint_sets(NeighborIndex(pts, labels, p), 4)
    model = init_mlp(6, 12, 2, seed=1)
    cfg = AttackConfig("voronoi_pgd", p, step=0.1, iters=30)
    whole = voronoi_pgd(model, pts, labels - 1, batch, cfg)
    monkeypatch.setattr(attacks, "VORONOI_CHUNK_FLOATS", 7 * 4 * 6)
    assert np.array_equal(voronoi_pgd(model, pts, labels - 1, batch, cfg), whole)
