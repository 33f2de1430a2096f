"""Adversarial training with Voronoi constraints, plus the sampling and
volume arguments for why norm balls fall short in high codimension."""

from .attacks import AttackConfig, ball_pgd, fgsm, run_attack, voronoi_pgd
from .evaluation import RobustnessCurve, aggregate, nauc, robustness_curve
from .geometry import (
    LabeledDataset,
    ManifoldSpec,
    coverage_ratio_bound,
    coverage_ratio_mc,
    covering_gap,
    make_circles,
    make_planes,
    measure_delta_cover,
    tube_sample,
)
from .net import Adam, MlpModel, SGD, forward, init_mlp, loss_and_grads
from .training import TrainConfig, train, train_runs
from .voronoi import (
    ConstraintSet,
    NeighborIndex,
    certify_ball_cover,
    certify_nn_cover,
    constraint_set,
    in_voronoi_cell,
    nn_classify,
)

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "AttackConfig",
    "ConstraintSet",
    "LabeledDataset",
    "ManifoldSpec",
    "MlpModel",
    "NeighborIndex",
    "RobustnessCurve",
    "SGD",
    "TrainConfig",
    "aggregate",
    "ball_pgd",
    "certify_ball_cover",
    "certify_nn_cover",
    "constraint_set",
    "coverage_ratio_bound",
    "coverage_ratio_mc",
    "covering_gap",
    "fgsm",
    "forward",
    "in_voronoi_cell",
    "init_mlp",
    "loss_and_grads",
    "make_circles",
    "make_planes",
    "measure_delta_cover",
    "nauc",
    "nn_classify",
    "robustness_curve",
    "run_attack",
    "train",
    "train_runs",
    "tube_sample",
    "voronoi_pgd",
]
