"""Natural, norm-ball adversarial and Voronoi-constrained adversarial training."""

import time
from dataclasses import dataclass, field

import numpy as np

from ._rng import substream
from .attacks import BALL_PGD, BIM, VORONOI_PGD, AttackConfig, ball_pgd, voronoi_pgd
from .net import init_mlp, loss_and_grads, make_optimizer
from .voronoi import NeighborIndex, constraint_sets

NATURAL = "natural"
BALL_ADV = "ball"
VORONOI_ADV = "voronoi"
MODES = (NATURAL, BALL_ADV, VORONOI_ADV)


@dataclass(frozen=True)
class TrainConfig:
    mode: str = NATURAL
    epochs: int = 200
    batch_size: int | None = 64
    lr: float = 0.1
    optimizer: str = "adam"
    momentum: float = 0.0
    hidden: int = 100
    attack: AttackConfig | None = None
    m: int = 10
    retrainings: int = 1
    seed: int = 0
    early_stop_loss: float = 1e-4

    def validate(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown training mode {self.mode!r}")
        if self.retrainings < 1:
            raise ValueError("retrainings must be >= 1")
        if self.epochs < 1 or self.hidden < 1:
            raise ValueError("epochs and hidden must be positive")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be positive (or None for full batch)")
        if self.mode == NATURAL and self.attack is not None:
            raise ValueError("natural training takes no attack config")
        if self.mode == BALL_ADV:
            if self.attack is None or self.attack.kind not in (BIM, BALL_PGD):
                raise ValueError("ball adversarial training needs a bim or ball_pgd attack")
        if self.mode == VORONOI_ADV:
            if self.attack is None or self.attack.kind != VORONOI_PGD:
                raise ValueError("Voronoi adversarial training needs a voronoi_pgd attack")
            if self.m < 1:
                raise ValueError("m must be >= 1")
        return self


@dataclass
class TrainRun:
    model: object
    seed: int
    epoch_losses: list = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def final_loss(self):
        return self.epoch_losses[-1] if self.epoch_losses else float("nan")


def _check_labels(dataset):
    if dataset.role != "train":
        raise ValueError("training needs a dataset with role 'train'")
    present = np.unique(dataset.labels)
    if not np.array_equal(present, np.arange(1, len(present) + 1)):
        raise ValueError("labels must be contiguous class ids 1..C")
    return len(present)


def train_one(dataset, cfg, retraining=0, constraints=None, on_batch=None):
    """Train a single model with seed ``cfg.seed + retraining``.

    ``on_batch(x_clean, x_used, batch_ids)`` is called with the points the
    loss is taken on, which lets callers audit feasibility.
    """
    cfg.validate()
    n_classes = _check_labels(dataset)
    seed = cfg.seed + retraining
    X = dataset.points
    Y = dataset.labels - 1
    n = len(X)
    if cfg.mode == VORONOI_ADV and constraints is None:
        constraints = constraint_sets(NeighborIndex(X, dataset.labels, cfg.attack.p), cfg.m)

    model = init_mlp(dataset.d, cfg.hidden, n_classes, substream(seed, "init"))
    opt = make_optimizer(cfg.optimizer, cfg.lr, cfg.momentum)
    shuffle_rng = substream(seed, "shuffle")
    attack_rng = substream(seed, "attack")
    bs = n if cfg.batch_size is None else min(cfg.batch_size, n)
    run = TrainRun(model, seed)
    start = time.perf_counter()
    for _ in range(cfg.epochs):
        perm = shuffle_rng.permutation(n)
        total = 0.0
        for s in range(0, n, bs):
            ids = perm[s : s + bs]
            xb, yb = X[ids], Y[ids]
            if cfg.mode == BALL_ADV:
                xb_used = ball_pgd(model, xb, yb, cfg.attack, attack_rng)
            elif cfg.mode == VORONOI_ADV:
                xb_used = voronoi_pgd(model, xb, yb, constraints[ids], cfg.attack)
            else:
                xb_used = xb
            if on_batch is not None:
                on_batch(xb, xb_used, ids)
            loss, grads, _ = loss_and_grads(model, xb_used, yb)
            opt.step(model, grads)
            total += loss * len(ids)
        run.epoch_losses.append(total / n)
        if run.epoch_losses[-1] < cfg.early_stop_loss:
            break
    run.wall_time = time.perf_counter() - start
    return run


def train_runs(dataset, cfg, on_batch=None):
    """All retrainings of ``cfg`` as :class:`TrainRun` records."""
    cfg.validate()
    constraints = None
    if cfg.mode == VORONOI_ADV:
        # the training set is static, so one computation serves every epoch and retraining
        constraints = constraint_sets(
            NeighborIndex(dataset.points, dataset.labels, cfg.attack.p), cfg.m
        )
    return [
        train_one(dataset, cfg, r, constraints, on_batch) for r in range(cfg.retrainings)
    ]


def train(dataset, cfg):
    """Train ``cfg.retrainings`` models; returns the list of models."""
    return [run.model for run in train_runs(dataset, cfg)]
