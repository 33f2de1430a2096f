"""Exact nearest-neighbour queries, Voronoi-cell tests and cover certificates."""

from dataclasses import dataclass

import numpy as np

from .geometry import lp_norm, norm_order

# rows * n_points * d floats per distance block
_BLOCK = 4_000_000


@dataclass(frozen=True)
class NeighborIndex:
    """Immutable training sample for exact l_p nearest-neighbour queries.

    Queries are brute-force linear scans; ties resolve to the lowest index.
    """

    points: np.ndarray
    labels: np.ndarray
    p: float = 2.0

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or len(pts) == 0:
            raise ValueError("index needs a non-empty 2-d point array")
        labels = np.asarray(self.labels, dtype=np.int64)
        if len(labels) != len(pts):
            raise ValueError("points and labels differ in length")
        pts.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "p", norm_order(self.p))

    @classmethod
    def from_dataset(cls, dataset, p=2):
        return cls(dataset.points, dataset.labels, p)

    @property
    def d(self):
        return self.points.shape[1]

    def __len__(self):
        return len(self.points)

    def distances(self, queries):
        """Full ``(n_queries, n_points)`` distance matrix, computed blockwise."""
        q = self._check(queries)
        out = np.empty((len(q), len(self.points)))
        rows = max(1, _BLOCK // max(1, len(self.points) * self.d))
        for s in range(0, len(q), rows):
            diff = q[s : s + rows, None, :] - self.points[None, :, :]
            out[s : s + rows] = lp_norm(diff, self.p)
        return out

    def nearest(self, queries):
        """Index of the nearest training point per query (lowest index on ties)."""
        q = self._check(queries)
        out = np.empty(len(q), dtype=np.int64)
        rows = max(1, _BLOCK // max(1, len(self.points) * self.d))
        for s in range(0, len(q), rows):
            diff = q[s : s + rows, None, :] - self.points[None, :, :]
            out[s : s + rows] = np.argmin(lp_norm(diff, self.p), axis=1)
        return out

    def _check(self, queries):
        q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
        if q.shape[1] != self.d:
            raise ValueError(f"query dimension {q.shape[1]} does not match index dimension {self.d}")
        return q


def nn_classify(index, query):
    """1-NN label for a single query point, or an array of labels for a batch."""
    q = np.asarray(query, dtype=np.float64)
    if q.ndim <= 1:
        return int(index.labels[index.nearest(q.reshape(1, -1))[0]])
    return index.labels[index.nearest(q)]


@dataclass(frozen=True)
class ConstraintSet:
    """Rival-class samples bounding the Voronoi cell of ``anchor``."""

    anchor: np.ndarray
    rivals: np.ndarray
    m: int
    anchor_label: int | None = None
    rival_labels: np.ndarray | None = None

    def __post_init__(self):
        anchor = np.asarray(self.anchor, dtype=np.float64).ravel()
        rivals = np.asarray(self.rivals, dtype=np.float64).reshape(-1, anchor.size)
        object.__setattr__(self, "anchor", anchor)
        object.__setattr__(self, "rivals", rivals)
        if self.rival_labels is not None and self.anchor_label is not None:
            if np.any(np.asarray(self.rival_labels) == self.anchor_label):
                raise ValueError("a rival shares the anchor's class")

    def __len__(self):
        return len(self.rivals)


def in_voronoi_cell(anchor, query, constraints, p=2):
    """True iff ``query`` is no farther from ``anchor`` than from every rival.

    Points on a bisector count as inside.
    """
    a = np.asarray(anchor, dtype=np.float64).ravel()
    q = np.asarray(query, dtype=np.float64).ravel()
    if q.shape != a.shape:
        raise ValueError("query and anchor dimensions differ")
    rivals = constraints.rivals if isinstance(constraints, ConstraintSet) else np.asarray(constraints)
    if rivals.size == 0:
        return True
    if rivals.shape[-1] != a.size:
        raise ValueError("rival and anchor dimensions differ")
    d_anchor = lp_norm(a - q, p)
    d_rivals = lp_norm(rivals - q[None, :], p)
    return bool(np.all(d_anchor <= d_rivals))


def constraint_set(index, anchor_id, m=10):
    """The ``m`` exact nearest training points to the anchor in each other class."""
    if m < 1:
        raise ValueError("m must be >= 1")
    anchor = index.points[anchor_id]
    label = int(index.labels[anchor_id])
    dist = index.distances(anchor[None, :])[0]
    chosen = []
    for cls in np.unique(index.labels):
        if cls == label:
            continue
        members = np.flatnonzero(index.labels == cls)
        # stable sort keeps lowest index first among equal distances
        order = np.argsort(dist[members], kind="stable")[:m]
        chosen.append(members[order])
    ids = np.concatenate(chosen) if chosen else np.empty(0, dtype=np.int64)
    return ConstraintSet(anchor, index.points[ids], m, label, index.labels[ids])


@dataclass(frozen=True)
class ConstraintBatch:
    """Constraint sets for a batch of anchors, stored as indices into a shared pool.

    ``rival_ids`` has shape ``(n, r)`` and indexes rows of ``pool``; rows with
    fewer real rivals are padded by repeating their first rival, which leaves
    the cell unchanged.  ``empty`` marks anchors without any rival
    (single-class data).  Rival coordinates are only gathered for the rows
    being tested, so large inputs never need an ``(n, r, d)`` array.
    """

    anchors: np.ndarray
    pool: np.ndarray
    rival_ids: np.ndarray
    empty: np.ndarray
    m: int

    def __getitem__(self, idx):
        return ConstraintBatch(self.anchors[idx], self.pool, self.rival_ids[idx], self.empty[idx], self.m)

    def __len__(self):
        return len(self.anchors)

    @property
    def rivals(self):
        """Padded rival coordinates, shape ``(n, r, d)``."""
        return self.pool[self.rival_ids]

    def contains(self, queries, p=2):
        """Row-wise cell membership of ``queries`` (shape ``(n, d)``)."""
        if self.rival_ids.shape[1] == 0:
            return np.ones(len(queries), dtype=bool)
        d_anchor = lp_norm(self.anchors - queries, p)
        d_rivals = lp_norm(self.rivals - queries[:, None, :], p)
        ok = np.all(d_anchor[:, None] <= d_rivals, axis=1)
        return ok | self.empty

    def l2_cells(self):
        """Precomputed l2 membership test for repeated queries against this batch."""
        return L2Cells(self)

    def get(self, i):
        ids = np.unique(self.rival_ids[i]) if not self.empty[i] else np.empty(0, dtype=np.int64)
        return ConstraintSet(self.anchors[i], self.pool[ids].reshape(-1, self.pool.shape[1]), self.m)


class L2Cells:
    """l2 cell membership as halfspace tests, with an exact fallback.

    ``|q - a| <= |q - r|`` is equivalent to ``2 q.(r - a) <= |r|^2 - |a|^2``,
    a single dot product per rival once the normals are stored.  Rounding
    makes the two forms disagree only within a thin band around a bisector,
    so rows that land inside that band are re-tested with
    :meth:`ConstraintBatch.contains`, which gives the same verdicts as
    :func:`in_voronoi_cell`.
    """

    # relative band, far above the d * 2^-52 rounding error of either form
    BAND = 1e-9

    def __init__(self, batch):
        self.batch = batch
        rivals = batch.rivals
        anchors = batch.anchors
        self.normals = 2.0 * (rivals - anchors[:, None, :])
        sq_r = np.einsum("nrd,nrd->nr", rivals, rivals)
        sq_a = np.einsum("nd,nd->n", anchors, anchors)
        self.offsets = sq_r - sq_a[:, None]
        widest = np.sqrt(sq_r.max(axis=1)) if sq_r.shape[1] else np.zeros(len(anchors))
        self.scale = np.sqrt(sq_a) + widest

    def contains(self, rows, queries):
        """Membership of ``queries[i]`` in the cell of batch row ``rows[i]``."""
        rows = np.asarray(rows)
        every_row = len(rows) == len(self.offsets) and np.array_equal(rows, np.arange(len(rows)))
        normals = self.normals if every_row else self.normals[rows]
        slack = self.offsets[rows] - np.matmul(normals, queries[:, :, None])[..., 0]
        band = (self.BAND * (np.linalg.norm(queries, axis=1) + self.scale[rows]) ** 2)[:, None]
        ok = np.all(slack > band, axis=1)
        unsure = ~ok & np.all(slack >= -band, axis=1)
        if unsure.any():
            ok[unsure] = self.batch[rows[unsure]].contains(queries[unsure], 2)
        return ok | self.batch.empty[rows]


def constraint_sets(index, m=10, anchor_ids=None):
    """Constraint sets for many anchors at once, as a :class:`ConstraintBatch`."""
    if m < 1:
        raise ValueError("m must be >= 1")
    ids = np.arange(len(index)) if anchor_ids is None else np.asarray(anchor_ids)
    classes = np.unique(index.labels)
    members = {c: np.flatnonzero(index.labels == c) for c in classes}
    per_class = {c: min(m, len(members[c])) for c in classes}
    width = max(
        (sum(per_class[c] for c in classes if c != own) for own in classes),
        default=0,
    )
    n = len(ids)
    rival_ids = np.zeros((n, width), dtype=np.int64)
    empty = np.zeros(n, dtype=bool)
    rows = max(1, _BLOCK // max(1, len(index) * index.d))
    for s in range(0, n, rows):
        block = ids[s : s + rows]
        dist = index.distances(index.points[block])
        for j, aid in enumerate(block):
            own = index.labels[aid]
            picked = []
            for c in classes:
                if c == own:
                    continue
                # stable sort keeps lowest index first among equal distances
                order = np.argsort(dist[j, members[c]], kind="stable")[: per_class[c]]
                picked.append(members[c][order])
            if not picked:
                empty[s + j] = True
                continue
            sel = np.concatenate(picked)
            rival_ids[s + j, : len(sel)] = sel
            rival_ids[s + j, len(sel) :] = sel[0]
    return ConstraintBatch(index.points[ids].copy(), index.points, rival_ids, empty, m)


@dataclass(frozen=True)
class Certificate:
    """Outcome of a sampling-condition check; truthy iff certified."""

    ok: bool
    threshold: float
    beyond_reach: bool = False

    def __bool__(self):
        return self.ok


def _certify(delta, reach, epsilon, factor):
    if min(delta, reach, epsilon) < 0:
        raise ValueError("delta, reach and epsilon must be non-negative")
    if epsilon >= reach:
        return Certificate(False, 0.0, beyond_reach=True)
    threshold = factor * (reach - epsilon)
    return Certificate(bool(delta <= threshold), threshold)


def certify_nn_cover(delta, reach, epsilon):
    """Whether a delta-cover makes 1-NN correct on the eps-tube (delta <= 2(reach - eps))."""
    return _certify(delta, reach, epsilon, 2.0)


def certify_ball_cover(delta, reach, epsilon):
    """Whether a delta-cover makes ball-based training correct on the eps-tube (delta <= reach - eps)."""
    return _certify(delta, reach, epsilon, 1.0)
