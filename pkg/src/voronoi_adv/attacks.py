"""Gradient attacks: FGSM, BIM / ball PGD, and the Voronoi-constrained ascent.

All functions are batched: ``x`` has shape ``(n, d)`` (a single ``(d,)`` point
also works) and ``y`` holds 0-based class indices.  Attacks are untargeted and
ascend the loss of the true label.
"""

from dataclasses import dataclass, replace

import numpy as np

from ._rng import as_generator
from .geometry import lp_norm, norm_order
from .net import input_gradient
from .voronoi import ConstraintBatch, ConstraintSet

FGSM = "fgsm"
BIM = "bim"
BALL_PGD = "ball_pgd"
VORONOI_PGD = "voronoi_pgd"
KINDS = (FGSM, BIM, BALL_PGD, VORONOI_PGD)

# cap on the floats held by one chunk of precomputed l2 cell normals
VORONOI_CHUNK_FLOATS = 8_000_000


@dataclass(frozen=True)
class AttackConfig:
    """Attack settings.

    ``step=None`` means ``2.5 * epsilon / iters`` for the ball attacks and
    ``0.05`` for the Voronoi attack.  ``random_start=None`` means on for
    ``ball_pgd`` and off otherwise.  The Voronoi attack ignores ``epsilon``
    and ``random_start``.
    """

    kind: str = BIM
    p: float = 2.0
    epsilon: float = 0.0
    step: float | None = None
    iters: int = 40
    random_start: bool | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown attack kind {self.kind!r}")
        object.__setattr__(self, "p", norm_order(self.p))
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")
        if self.kind != FGSM:
            if self.iters < 1:
                raise ValueError("iterative attacks need iters >= 1")
            if self.step is not None and self.step < 0:
                raise ValueError("step must be non-negative")

    @property
    def name(self):
        return self.kind if self.p == 2 else f"{self.kind}_linf"

    def with_epsilon(self, epsilon):
        return replace(self, epsilon=float(epsilon))

    def resolved_step(self):
        if self.step is not None:
            return self.step
        if self.kind == VORONOI_PGD:
            return 0.05
        return 2.5 * self.epsilon / self.iters

    def uses_random_start(self):
        if self.kind in (FGSM, VORONOI_PGD):
            return False
        if self.random_start is None:
            return self.kind == BALL_PGD
        return bool(self.random_start)


def ascent_direction(g, p):
    """Steepest l_p ascent direction of unit norm (zero where ``g`` is zero)."""
    if norm_order(p) == np.inf:
        return np.sign(g)
    norms = np.linalg.norm(g, axis=-1, keepdims=True)
    return np.divide(g, norms, out=np.zeros_like(g), where=norms > 0)


def project_ball(x0, x, epsilon, p):
    """Project ``x`` onto the l_p ball of radius ``epsilon`` around ``x0``."""
    delta = x - x0
    if norm_order(p) == np.inf:
        return x0 + np.clip(delta, -epsilon, epsilon)
    norms = np.linalg.norm(delta, axis=-1, keepdims=True)
    scale = np.minimum(1.0, np.divide(epsilon, norms, out=np.ones_like(norms), where=norms > 0))
    return x0 + delta * scale


def _batch(x, y):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    Y = np.atleast_1d(np.asarray(y, dtype=np.int64))
    return X, Y, single


def fgsm(model, x, y, epsilon, p=np.inf):
    """One step of size ``epsilon`` along the l_p steepest-ascent direction."""
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    X, Y, single = _batch(x, y)
    g, _ = input_gradient(model, X, Y)
    out = X + epsilon * ascent_direction(g, p)
    return out[0] if single else out


def ball_pgd(model, x, y, cfg, seed=0):
    """Iterated gradient ascent with projection onto ``B(x, epsilon)``.

    ``kind="bim"`` starts at ``x``; ``kind="ball_pgd"`` starts at a uniform
    random point of the ball.
    """
    if cfg.kind not in (BIM, BALL_PGD):
        raise ValueError(f"ball_pgd needs a bim or ball_pgd config, got {cfg.kind!r}")
    X, Y, single = _batch(x, y)
    eps, p, step = cfg.epsilon, cfg.p, cfg.resolved_step()
    cur = X.copy()
    if cfg.uses_random_start() and eps > 0:
        rng = as_generator(seed, "attack")
        cur = project_ball(X, X + _uniform_ball(rng, X.shape, eps, p), eps, p)
    for _ in range(cfg.iters):
        g, _ = input_gradient(model, cur, Y)
        cur = project_ball(X, cur + step * ascent_direction(g, p), eps, p)
    return cur[0] if single else cur


def _uniform_ball(rng, shape, eps, p):
    n, d = shape
    if p == np.inf:
        return rng.uniform(-eps, eps, shape)
    g = rng.standard_normal(shape)
    g /= np.maximum(np.linalg.norm(g, axis=1, keepdims=True), 1e-300)
    return g * eps * rng.uniform(0.0, 1.0, (n, 1)) ** (1.0 / d)


def voronoi_pgd(model, x, y, constraints, cfg):
    """Gradient ascent from ``x`` that stops at the first Voronoi violation.

    Each iteration proposes ``current + step * direction``.  The proposal is
    accepted only if it stays in the anchor's (rival-restricted) Voronoi cell;
    otherwise that example freezes at its last feasible iterate.  A zero
    gradient also freezes the example.
    """
    if cfg.kind != VORONOI_PGD:
        raise ValueError(f"voronoi_pgd needs a voronoi_pgd config, got {cfg.kind!r}")
    X, Y, single = _batch(x, y)
    batch = _as_constraint_batch(constraints, X)
    step = cfg.resolved_step()
    if step == 0 or len(X) == 0:
        return X[0].copy() if single else X.copy()
    # examples are independent, so chunking bounds the (rows, rivals, d) normals without changing results
    rows = max(1, VORONOI_CHUNK_FLOATS // max(1, batch.rival_ids.shape[1] * X.shape[1]))
    out = np.concatenate(
        [_voronoi_ascent(model, Y[s : s + rows], batch[s : s + rows], cfg.p, step, cfg.iters)
         for s in range(0, len(X), rows)]
    )
    return out[0] if single else out


def _voronoi_ascent(model, Y, batch, p, step, iters):
    cur = batch.anchors.copy()
    active = np.ones(len(cur), dtype=bool)
    cells = batch.l2_cells() if p == 2 else None
    for _ in range(iters):
        idx = np.flatnonzero(active)
        if len(idx) == 0:
            break
        g, _ = input_gradient(model, cur[idx], Y[idx])
        direction = ascent_direction(g, p)
        cand = cur[idx] + step * direction
        inside = cells.contains(idx, cand) if cells is not None else batch[idx].contains(cand, p)
        ok = inside & np.any(direction != 0, axis=1)
        cur[idx[ok]] = cand[ok]
        active[idx[~ok]] = False
    return cur


def _as_constraint_batch(constraints, X):
    if isinstance(constraints, ConstraintBatch):
        if len(constraints) != len(X):
            raise ValueError("one constraint set per example is required")
        if not np.array_equal(constraints.anchors, X):
            raise ValueError("constraint anchors must equal the attacked points")
        return constraints
    sets = [constraints] if isinstance(constraints, ConstraintSet) else list(constraints)
    if len(sets) != len(X):
        raise ValueError("one constraint set per example is required")
    width = max(len(s) for s in sets)
    pool = np.concatenate([s.rivals for s in sets] + [np.zeros((0, X.shape[1]))])
    rival_ids = np.zeros((len(sets), width), dtype=np.int64)
    empty = np.zeros(len(sets), dtype=bool)
    start = 0
    for i, s in enumerate(sets):
        if not np.array_equal(s.anchor, X[i]):
            raise ValueError("constraint anchors must equal the attacked points")
        if len(s) == 0:
            empty[i] = True
            continue
        rival_ids[i, : len(s)] = np.arange(start, start + len(s))
        rival_ids[i, len(s) :] = start
        start += len(s)
    return ConstraintBatch(X.copy(), pool, rival_ids, empty, max((s.m for s in sets), default=1))


def run_attack(model, x, y, cfg, seed=0, constraints=None):
    """Dispatch on ``cfg.kind``."""
    if cfg.kind == FGSM:
        return fgsm(model, x, y, cfg.epsilon, cfg.p)
    if cfg.kind in (BIM, BALL_PGD):
        return ball_pgd(model, x, y, cfg, seed)
    if constraints is None:
        raise ValueError("the Voronoi attack needs constraint sets")
    return voronoi_pgd(model, x, y, constraints, cfg)


def perturbation_norm(x0, x, p):
    return lp_norm(np.asarray(x) - np.asarray(x0), p)
