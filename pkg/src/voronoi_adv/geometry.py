"""Synthetic class manifolds, tubular neighbourhoods and covering geometry.

Two families of datasets are provided, both with a decision axis at
distance 1 from each class manifold:

* ``circles``: two concentric circles of radius 1 and 3 in the x1-x2 plane.
* ``planes``: two axis-aligned squares ``[-10, 10]^2`` lying in ``x_d = 0``
  and ``x_d = 2``.

Extra ambient coordinates (the codimension) are always exactly zero on the
manifold, so the same data can be embedded in any ``d >= k + 1``.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from ._rng import as_generator

CIRCLES = "circles"
PLANES = "planes"
INGESTED = "ingested"

# vertices per axis for the supported planes cover levels; 2 * m**2 samples
PLANES_COVER_VERTICES = {1.0: 15, 0.5: 29, 0.25: 57}


def norm_order(p):
    """Normalise a norm spec (2, inf, "inf", "2") to 2.0 or np.inf."""
    if isinstance(p, str):
        p = p.strip().lower()
        p = np.inf if p in ("inf", "linf", "infinity") else float(p)
    p = float(p)
    if p not in (2.0, np.inf):
        raise ValueError(f"only the l2 and l-inf norms are supported, got p={p}")
    return p


def lp_norm(v, p, axis=-1):
    p = norm_order(p)
    if p == np.inf:
        return np.max(np.abs(v), axis=axis)
    return np.sqrt(np.sum(v * v, axis=axis))


@dataclass(frozen=True)
class ManifoldSpec:
    """Analytic description of a two-class synthetic data manifold."""

    kind: str
    k: int
    d: int
    reach_decision_axis: float
    medial_reach: float
    vol_k: float
    extent: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in (CIRCLES, PLANES):
            raise ValueError(f"unknown manifold kind {self.kind!r}")
        if self.d < self.k:
            raise ValueError(f"ambient dimension {self.d} below intrinsic dimension {self.k}")
        if not (0 < self.vol_k < math.inf):
            raise ValueError("vol_k must be positive and finite")
        if self.reach_decision_axis <= 0 or self.medial_reach <= 0:
            raise ValueError("reach values must be positive")

    @property
    def codim(self):
        return self.d - self.k

    @property
    def class_ids(self):
        return (1, 2)

    def class_volume(self, class_id):
        """Intrinsic k-volume of a single class manifold."""
        if self.kind == CIRCLES:
            return 2 * math.pi * self.extent["radii"][class_id - 1]
        lo, hi = self.extent["bounds"]
        return (hi - lo) ** 2


def circles_spec(codim, r1=1.0, r2=3.0):
    if codim < 0:
        raise ValueError("codim must be non-negative")
    if not 0 < r1 < r2:
        raise ValueError("need 0 < r1 < r2")
    return ManifoldSpec(
        kind=CIRCLES,
        k=1,
        d=2 + codim,
        reach_decision_axis=(r2 - r1) / 2,
        # medial axis: the decision circle and the axis through the centre
        medial_reach=min((r2 - r1) / 2, r1),
        vol_k=2 * math.pi * (r1 + r2),
        extent={"radii": (r1, r2)},
    )


def planes_spec(codim, lo=-10.0, hi=10.0, separation=2.0):
    if codim < 1:
        raise ValueError("planes need codim >= 1 for the separation axis")
    if not lo < hi:
        raise ValueError("need lo < hi")
    return ManifoldSpec(
        kind=PLANES,
        k=2,
        d=2 + codim,
        reach_decision_axis=separation / 2,
        # flat convex pieces have no medial axis of their own
        medial_reach=separation / 2,
        vol_k=2 * (hi - lo) ** 2,
        extent={"bounds": (lo, hi), "separation": separation},
    )


@dataclass
class LabeledDataset:
    """Points in R^d with class labels in ``1..C``.

    ``spec`` is ``None`` for ingested (non-synthetic) data, which has no
    known reach and therefore cannot be used for certification.
    """

    points: np.ndarray
    labels: np.ndarray
    spec: ManifoldSpec | None = None
    role: str = "train"
    seed: int | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.points.ndim != 2:
            raise ValueError("points must be a 2-d array")
        if len(self.points) != len(self.labels):
            raise ValueError("points and labels differ in length")
        if self.role not in ("train", "test"):
            raise ValueError(f"role must be train or test, got {self.role!r}")
        if len(self.labels) and self.labels.min() < 1:
            raise ValueError("labels must be class ids >= 1")

    def __len__(self):
        return len(self.labels)

    @property
    def d(self):
        return self.points.shape[1]

    @property
    def n_classes(self):
        if self.spec is not None:
            return len(self.spec.class_ids)
        return int(self.labels.max())

    def class_points(self, class_id):
        return self.points[self.labels == class_id]


# ---------------------------------------------------------------------------
# generators


def make_circles(n_per_class, codim, seed, r1=1.0, r2=3.0, role="train"):
    """Two concentric circles, uniform in angle, padded with ``codim`` zeros.

    The ambient dimension is ``2 + codim``; the manifold codimension
    ``spec.codim`` is therefore ``codim + 1``.
    """
    if n_per_class < 1:
        raise ValueError("n_per_class must be positive")
    spec = circles_spec(codim, r1, r2)
    # train and test draws for one seed come from distinct streams
    rng = as_generator(seed, f"dataset-{role}")
    pts, labels = [], []
    for cid in spec.class_ids:
        pts.append(sample_manifold(spec, cid, n_per_class, rng))
        labels.append(np.full(n_per_class, cid))
    return LabeledDataset(np.vstack(pts), np.concatenate(labels), spec, role, seed)


def make_planes(cover_level=1.0, codim=1, vertices_per_axis=None):
    """Grid-sampled planes; returns ``(train, test)``.

    The training set is the vertices of a regular grid on each square and the
    test set is the centres of the grid cells.  ``cover_level`` selects one of
    the standard densities (1.0, 0.5, 0.25); ``vertices_per_axis`` overrides it.
    """
    spec = planes_spec(codim)
    if vertices_per_axis is None:
        try:
            vertices_per_axis = PLANES_COVER_VERTICES[float(cover_level)]
        except KeyError:
            raise ValueError(
                f"cover_level must be one of {sorted(PLANES_COVER_VERTICES)}, got {cover_level}"
            ) from None
    m = int(vertices_per_axis)
    if m < 2:
        raise ValueError("need at least 2 vertices per axis")
    lo, hi = spec.extent["bounds"]
    ticks = np.linspace(lo, hi, m)
    centres = (ticks[:-1] + ticks[1:]) / 2

    def layout(axis_vals, role):
        g1, g2 = np.meshgrid(axis_vals, axis_vals, indexing="ij")
        base = np.zeros((g1.size, spec.d))
        base[:, 0] = g1.ravel()
        base[:, 1] = g2.ravel()
        pts, labels = [], []
        for cid, offset in zip(spec.class_ids, (0.0, spec.extent["separation"])):
            block = base.copy()
            block[:, -1] = offset
            pts.append(block)
            labels.append(np.full(len(block), cid))
        return LabeledDataset(np.vstack(pts), np.concatenate(labels), spec, role)

    return layout(ticks, "train"), layout(centres, "test")


def sample_manifold(spec, class_id, n, seed):
    """``n`` points uniform (by intrinsic volume) on one class manifold."""
    rng = as_generator(seed, "dataset")
    out = np.zeros((n, spec.d))
    if spec.kind == CIRCLES:
        r = spec.extent["radii"][class_id - 1]
        theta = rng.uniform(0.0, 2 * np.pi, n)
        out[:, 0] = r * np.cos(theta)
        out[:, 1] = r * np.sin(theta)
    else:
        lo, hi = spec.extent["bounds"]
        out[:, :2] = rng.uniform(lo, hi, (n, 2))
        out[:, -1] = 0.0 if class_id == 1 else spec.extent["separation"]
    return out


def dense_reference(spec, n_per_class, seed):
    """Uniform on-manifold sample used as the reference for cover measurement."""
    rng = as_generator(seed, "reference")
    pts = [sample_manifold(spec, cid, n_per_class, rng) for cid in spec.class_ids]
    labels = np.repeat(spec.class_ids, n_per_class)
    return LabeledDataset(np.vstack(pts), labels, spec, "test", None)


# ---------------------------------------------------------------------------
# distances and covers


def distance_to_manifold(spec, class_id, points, p=2):
    """Exact (l2, planes l-inf) or grid-refined (circles l-inf) distance."""
    p = norm_order(p)
    x = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if spec.kind == PLANES:
        lo, hi = spec.extent["bounds"]
        level = 0.0 if class_id == 1 else spec.extent["separation"]
        diff = x.copy()
        diff[:, :2] = x[:, :2] - np.clip(x[:, :2], lo, hi)
        diff[:, -1] = x[:, -1] - level
        return lp_norm(diff, p)
    r = spec.extent["radii"][class_id - 1]
    rest = x[:, 2:]
    if p == 2:
        radial = np.hypot(x[:, 0], x[:, 1]) - r
        return np.sqrt(radial**2 + np.sum(rest * rest, axis=1))
    rest_max = np.max(np.abs(rest), axis=1) if rest.shape[1] else np.zeros(len(x))
    return np.maximum(_linf_to_circle(x[:, 0], x[:, 1], r), rest_max)


def _linf_to_circle(x1, x2, r, n_grid=2048, n_refine=60):
    def f(theta):
        return np.maximum(np.abs(x1[:, None] - r * np.cos(theta)), np.abs(x2[:, None] - r * np.sin(theta)))

    grid = np.linspace(0.0, 2 * np.pi, n_grid, endpoint=False)
    best = np.argmin(f(grid[None, :]), axis=1)
    h = 2 * np.pi / n_grid
    a, b = grid[best] - h, grid[best] + h
    for _ in range(n_refine):
        m1 = a + (b - a) / 3
        m2 = b - (b - a) / 3
        left = f(m1[:, None])[:, 0] <= f(m2[:, None])[:, 0]
        b = np.where(left, m2, b)
        a = np.where(left, a, m1)
    return f(((a + b) / 2)[:, None])[:, 0]


def measure_delta_cover(candidate, reference, p=2):
    """Directed Hausdorff distance from ``reference`` to same-class ``candidate``.

    Returns ``inf`` when a class present in the reference has no candidate
    points.
    """
    p = norm_order(p)
    worst = 0.0
    for cid in np.unique(reference.labels):
        ref = reference.class_points(cid)
        cand = candidate.class_points(cid)
        if len(cand) == 0:
            return math.inf
        dist, _ = cKDTree(cand).query(ref, k=1, p=p)
        worst = max(worst, float(np.max(dist)))
    return worst


# ---------------------------------------------------------------------------
# tubular neighbourhoods


def _normal_basis_offsets(spec, base, directions):
    """Map unit vectors in the (d-k)-dim normal space at ``base`` into R^d."""
    n = len(base)
    out = np.zeros((n, spec.d))
    if spec.kind == PLANES:
        out[:, 2:] = directions
        return out
    radial = base[:, :2] / np.linalg.norm(base[:, :2], axis=1, keepdims=True)
    out[:, :2] = radial * directions[:, :1]
    out[:, 2:] = directions[:, 1:]
    return out


def _ball_offsets(rng, n, dim, epsilon, p, radial):
    if p == np.inf:
        if radial == "uniform":
            return rng.uniform(-epsilon, epsilon, (n, dim))
        off = rng.uniform(-epsilon, epsilon, (n, dim))
        face = rng.integers(0, dim, n)
        off[np.arange(n), face] = epsilon * rng.choice((-1.0, 1.0), n)
        return off
    g = rng.standard_normal((n, dim))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    g /= norms
    if radial == "uniform":
        radius = epsilon * rng.uniform(0.0, 1.0, (n, 1)) ** (1.0 / dim)
    else:
        radius = np.full((n, 1), float(epsilon))
    return g * radius


def _tube_points(spec, class_id, epsilon, p, n, rng, radial, offset):
    if radial not in ("uniform", "shell"):
        raise ValueError("radial must be 'uniform' or 'shell'")
    if offset not in ("ambient", "normal"):
        raise ValueError("offset must be 'ambient' or 'normal'")
    base = sample_manifold(spec, class_id, n, rng)
    if epsilon == 0:
        return base
    if offset == "ambient":
        return base + _ball_offsets(rng, n, spec.d, epsilon, p, radial)
    if p != 2:
        raise ValueError("normal-space offsets are only defined for the l2 norm")
    nd = spec.d - spec.k
    coeffs = _ball_offsets(rng, n, nd, epsilon, 2.0, radial)
    radius = np.linalg.norm(coeffs, axis=1, keepdims=True)
    unit = np.divide(coeffs, radius, out=np.zeros_like(coeffs), where=radius > 0)
    return base + _normal_basis_offsets(spec, base, unit) * radius


def tube_sample(spec, class_id, epsilon, p=2, n=1000, seed=0, radial="uniform", offset="ambient"):
    """Sample ``n`` points within l_p distance ``epsilon`` of a class manifold.

    Each point is an on-manifold point plus a perturbation of l_p norm at most
    ``epsilon``.  ``radial="uniform"`` spreads the perturbation uniformly over
    the ball, ``"shell"`` puts it exactly on the sphere.  ``offset="normal"``
    restricts an l2 perturbation to the normal space, which makes the draw
    uniform over the tube of a flat manifold.

    Raises ``ValueError`` when ``epsilon`` reaches the decision axis.
    """
    p = norm_order(p)
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    if epsilon >= spec.reach_decision_axis:
        raise ValueError(
            f"epsilon={epsilon} is not below the decision-axis reach {spec.reach_decision_axis}"
        )
    rng = as_generator(seed, "tube")
    return _tube_points(spec, class_id, epsilon, p, n, rng, radial, offset)


# ---------------------------------------------------------------------------
# volume and covering-number bounds


def coverage_ratio_bound(d, k, epsilon, n_samples, vol_k):
    """Upper bound on vol(union of eps-balls at the samples) / vol(eps-tube).

    Ratio of the disjoint-ball volume ``n * V_d * eps^d`` to the flat tube
    lower bound ``V_{d-k} * eps^(d-k) * vol_k``, evaluated in log space.
    """
    if d <= k:
        raise ValueError(f"need d > k, got d={d}, k={k}")
    if k < 1:
        raise ValueError("k must be >= 1")
    if n_samples < 0 or epsilon < 0 or vol_k <= 0:
        raise ValueError("need n_samples >= 0, epsilon >= 0 and vol_k > 0")
    if n_samples == 0 or epsilon == 0:
        return 0.0
    log_ratio = (
        math.lgamma((d - k) / 2 + 1)
        - math.lgamma(d / 2 + 1)
        + (k / 2) * math.log(math.pi)
        + k * math.log(epsilon)
        + math.log(n_samples)
        - math.log(vol_k)
    )
    return math.exp(log_ratio)


@dataclass(frozen=True)
class MonteCarloEstimate:
    value: float
    stderr: float
    n: int

    def __float__(self):
        return self.value


def coverage_ratio_mc(train, epsilon, n_mc=100_000, seed=0, chunk=20_000):
    """Monte Carlo estimate of the fraction of the eps-tube within eps of ``train``.

    Tube points are drawn as a uniform on-manifold base plus a uniform
    normal-space l2 offset, with classes weighted by intrinsic volume.
    """
    spec = train.spec
    if spec is None:
        raise ValueError("coverage estimation needs a synthetic dataset with a known spec")
    if n_mc < 1000:
        raise ValueError("n_mc must be at least 1000")
    if not 0 <= epsilon <= spec.medial_reach:
        raise ValueError(f"epsilon must lie in [0, {spec.medial_reach}]")
    rng = as_generator(seed, "mc")
    weights = np.array([spec.class_volume(c) for c in spec.class_ids])
    counts = rng.multinomial(n_mc, weights / weights.sum())
    data = train.points
    sq_data = np.sum(data * data, axis=1)
    # keep each (chunk, n_train) distance block around 16M entries
    chunk = max(1, min(chunk, 16_000_000 // max(len(data), 1)))
    hits = 0
    for cid, n_cls in zip(spec.class_ids, counts):
        done = 0
        while done < n_cls:
            m = min(chunk, n_cls - done)
            q = _tube_points(spec, cid, epsilon, 2.0, m, rng, "uniform", "normal")
            sq = np.sum(q * q, axis=1)[:, None] - 2.0 * q @ data.T + sq_data[None, :]
            hits += int(np.count_nonzero(np.min(sq, axis=1) <= epsilon * epsilon))
            done += m
    frac = hits / n_mc
    return MonteCarloEstimate(frac, math.sqrt(max(frac * (1 - frac), 0.0) / n_mc), n_mc)


def covering_gap(k, epsilon):
    """Cover radii sufficient for 1-NN vs ball-based training on the planes.

    Returns ``(delta_nn, delta_ball, count_ratio_lower)`` for two parallel
    k-flats at distance 2 (decision-axis reach 1).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not 0 <= epsilon < 1:
        raise ValueError("epsilon must lie in [0, 1)")
    delta_nn = 2.0 * math.sqrt(1.0 - epsilon)
    delta_ball = math.sqrt(1.0 - epsilon * epsilon)
    if epsilon == 0:
        return delta_nn, delta_ball, float(2**k)
    return delta_nn, delta_ball, (4.0 / (1.0 + epsilon)) ** (k / 2)


@dataclass(frozen=True)
class GridCover:
    k: int
    side: float
    per_axis: int

    @property
    def count(self):
        return self.per_axis**self.k

    @property
    def radius(self):
        return self.side / self.per_axis * math.sqrt(self.k) / 2


def grid_cover(k, delta, side=20.0):
    """Smallest cell-centre grid on ``[0, side]^k`` whose cover radius is <= delta."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    m = max(1, math.ceil(side * math.sqrt(k) / (2 * delta)))
    while GridCover(k, side, m).radius > delta:
        m += 1
    return GridCover(k, side, m)


def grid_cover_radius_empirical(cover, n=20_000, seed=0):
    """Largest observed distance from random cube points to the nearest centre."""
    rng = as_generator(seed, "cover")
    x = rng.uniform(0.0, cover.side, (n, cover.k))
    h = cover.side / cover.per_axis
    idx = np.clip(np.floor(x / h), 0, cover.per_axis - 1)
    nearest = (idx + 0.5) * h
    return float(np.max(np.linalg.norm(x - nearest, axis=1)))
