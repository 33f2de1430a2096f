"""Robustness curves, normalised area under the curve, and aggregation."""

from dataclasses import dataclass

import numpy as np

from .attacks import BIM, FGSM, VORONOI_PGD, AttackConfig, run_attack
from .net import predict


@dataclass
class RobustnessCurve:
    eps_grid: np.ndarray
    accuracies: dict
    n_test: int

    def __post_init__(self):
        self.eps_grid = _check_grid(self.eps_grid)
        self.accuracies = {k: np.asarray(v, dtype=np.float64) for k, v in self.accuracies.items()}
        if not self.accuracies:
            raise ValueError("a curve needs at least one attack")
        for name, acc in self.accuracies.items():
            if acc.shape != self.eps_grid.shape:
                raise ValueError(f"accuracy for {name} does not match the grid")
            if np.any(acc < 0) or np.any(acc > 1):
                raise ValueError("accuracies must lie in [0, 1]")

    @property
    def min_curve(self):
        return np.min(np.vstack(list(self.accuracies.values())), axis=0)

    def nauc(self):
        return nauc(self.eps_grid, self.min_curve)


def _check_grid(eps_grid):
    grid = np.asarray(eps_grid, dtype=np.float64)
    if grid.ndim != 1 or len(grid) < 1:
        raise ValueError("eps grid must be a non-empty 1-d sequence")
    if grid[0] != 0:
        raise ValueError("eps grid must start at 0")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("eps grid must be strictly increasing")
    return grid


def default_eps_grid(eps_max, n_points=21):
    return np.linspace(0.0, eps_max, n_points)


def default_suite(p=2, iters=40):
    """FGSM plus BIM in the given norm."""
    return [AttackConfig(FGSM, p), AttackConfig(BIM, p, iters=iters)]


def accuracy(model, points, labels):
    """Fraction of points classified as ``labels`` (1-based class ids)."""
    return float(np.mean(predict(model, points) == np.asarray(labels) - 1))


def robustness_curve(model, testset, attack_suite, eps_grid, seed=0):
    """Accuracy under each attack of the suite at every budget in ``eps_grid``."""
    grid = _check_grid(eps_grid)
    if len(testset) == 0:
        raise ValueError("empty test set")
    suite = list(attack_suite)
    if not suite:
        raise ValueError("attack suite is empty")
    names = [cfg.name for cfg in suite]
    if len(set(names)) != len(names):
        raise ValueError("attack suite contains duplicate attacks")
    X, labels = testset.points, testset.labels
    y = labels - 1
    clean = accuracy(model, X, labels)
    accs = {}
    for i, cfg in enumerate(suite):
        if cfg.kind == VORONOI_PGD:
            raise ValueError("the Voronoi attack is a training device, not an evaluation attack")
        row = np.empty(len(grid))
        for j, eps in enumerate(grid):
            if eps == 0:
                row[j] = clean
                continue
            adv = run_attack(model, X, y, cfg.with_epsilon(eps), seed=_cell_seed(seed, i, j))
            row[j] = accuracy(model, adv, labels)
        accs[cfg.name] = row
    return RobustnessCurve(grid, accs, len(testset))


def _cell_seed(seed, i, j):
    return np.random.default_rng([int(seed), 7919, i, j])


def nauc(eps_grid, acc):
    """Trapezoidal area under ``acc`` over ``[0, eps_max]`` divided by ``eps_max``."""
    grid = _check_grid(eps_grid)
    acc = np.asarray(acc, dtype=np.float64)
    if len(grid) < 2:
        raise ValueError("NAUC needs at least two grid points")
    if acc.shape != grid.shape:
        raise ValueError("accuracy and grid lengths differ")
    area = np.sum(np.diff(grid) * (acc[:-1] + acc[1:]) / 2.0)
    # summation roundoff can step just outside [0, 1]
    return float(min(1.0, max(0.0, area / grid[-1])))


@dataclass
class CurveAggregate:
    eps_grid: np.ndarray
    acc_mean: np.ndarray
    acc_std: np.ndarray
    naucs: np.ndarray

    @property
    def nauc_mean(self):
        return float(np.mean(self.naucs))

    @property
    def nauc_std(self):
        return float(np.std(self.naucs, ddof=1)) if len(self.naucs) > 1 else 0.0


def aggregate(curves):
    """Mean and standard deviation of the min-curves over retrainings."""
    curves = list(curves)
    if not curves:
        raise ValueError("nothing to aggregate")
    grid = curves[0].eps_grid
    for c in curves[1:]:
        if not np.array_equal(c.eps_grid, grid):
            raise ValueError("curves use different eps grids")
    mins = np.vstack([c.min_curve for c in curves])
    ddof = 1 if len(curves) > 1 else 0
    return CurveAggregate(
        grid,
        mins.mean(axis=0),
        mins.std(axis=0, ddof=ddof),
        np.array([c.nauc() for c in curves]),
    )
