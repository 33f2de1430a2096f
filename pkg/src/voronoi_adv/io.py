"""File formats: dataset CSV + metadata sidecar, MRLM1 checkpoints, IDX, curve CSVs."""

import csv
import struct
from pathlib import Path

import numpy as np

from .geometry import CIRCLES, INGESTED, PLANES, LabeledDataset, circles_spec, planes_spec
from .net import MlpModel

CHECKPOINT_MAGIC = b"MRLM1"
IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class FormatError(ValueError):
    """Malformed input file."""


# ---------------------------------------------------------------------------
# datasets


def meta_path(csv_path):
    p = Path(csv_path)
    return p.with_name(p.name + ".meta")


def _fmt(x):
    return repr(float(x))


def write_dataset(dataset, path, extra_meta=None):
    """Write ``label,x1..xd`` CSV plus a ``key=value`` sidecar next to it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = ["label"] + [f"x{i + 1}" for i in range(dataset.d)]
    with open(path, "w", newline="") as f:
        f.write(",".join(header) + "\n")
        for lab, row in zip(dataset.labels, dataset.points):
            f.write(str(int(lab)) + "," + ",".join(_fmt(v) for v in row) + "\n")
    write_kv(meta_path(path), dataset_meta(dataset, extra_meta))
    return path


def dataset_meta(dataset, extra=None):
    spec = dataset.spec
    meta = {
        "kind": spec.kind if spec else INGESTED,
        "k": spec.k if spec else "none",
        "d": dataset.d,
        "reach": _fmt(spec.reach_decision_axis) if spec else "none",
        "vol_k": _fmt(spec.vol_k) if spec else "none",
        "seed": "none" if dataset.seed is None else int(dataset.seed),
        "role": dataset.role,
        "n": len(dataset),
        "n_classes": dataset.n_classes,
    }
    if spec is not None:
        meta["medial_reach"] = _fmt(spec.medial_reach)
        if spec.kind == CIRCLES:
            meta["r1"], meta["r2"] = (_fmt(r) for r in spec.extent["radii"])
        else:
            lo, hi = spec.extent["bounds"]
            meta["lo"], meta["hi"] = _fmt(lo), _fmt(hi)
            meta["separation"] = _fmt(spec.extent["separation"])
    meta.update(extra or {})
    return meta


def read_dataset(path):
    path = Path(path)
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if not header or header[0] != "label":
            raise FormatError(f"{path}: missing 'label,x1,...' header")
        rows = [r for r in reader if r]
    d = len(header) - 1
    labels = np.array([int(r[0]) for r in rows], dtype=np.int64)
    points = np.array([[float(v) for v in r[1:]] for r in rows], dtype=np.float64).reshape(-1, d)
    meta = read_kv(meta_path(path)) if meta_path(path).exists() else {}
    spec = spec_from_meta(meta, d)
    seed = meta.get("seed", "none")
    return LabeledDataset(
        points,
        labels,
        spec,
        meta.get("role", "train"),
        None if seed == "none" else int(seed),
    )


def spec_from_meta(meta, d):
    kind = meta.get("kind", INGESTED)
    if kind == CIRCLES:
        return circles_spec(d - 2, float(meta.get("r1", 1.0)), float(meta.get("r2", 3.0)))
    if kind == PLANES:
        return planes_spec(
            d - 2,
            float(meta.get("lo", -10.0)),
            float(meta.get("hi", 10.0)),
            float(meta.get("separation", 2.0)),
        )
    return None


def write_kv(path, mapping):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        for key, value in mapping.items():
            f.write(f"{key}={value}\n")
    return path


def read_kv(path):
    out = {}
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise FormatError(f"{path}:{lineno}: expected key=value")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(model, path):
    """``MRLM1`` + int32 (d_in, hidden, n_classes) + float64 W1, b1, W2, b2, little-endian."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    d_in, hidden, n_classes = model.dims
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<3i", d_in, hidden, n_classes))
        for arr in (model.W1, model.b1, model.W2, model.b2):
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return path


def load_checkpoint(path):
    data = Path(path).read_bytes()
    if data[:5] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: not an MRLM1 checkpoint")
    if len(data) < 17:
        raise FormatError(f"{path}: truncated header")
    d_in, hidden, n_classes = struct.unpack("<3i", data[5:17])
    sizes = [hidden * d_in, hidden, n_classes * hidden, n_classes]
    expected = 17 + 8 * sum(sizes)
    if len(data) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(data)}")
    flat = np.frombuffer(data, dtype="<f8", offset=17).astype(np.float64)
    parts = np.split(flat, np.cumsum(sizes)[:-1])
    return MlpModel(
        parts[0].reshape(hidden, d_in),
        parts[1],
        parts[2].reshape(n_classes, hidden),
        parts[3],
    )


# ---------------------------------------------------------------------------
# IDX (MNIST)


def _read_idx(path, magic):
    data = Path(path).read_bytes()
    if len(data) < 8:
        raise FormatError(f"{path}: truncated header")
    (found,) = struct.unpack(">i", data[:4])
    if found != magic:
        raise FormatError(f"{path}: magic mismatch (expected {magic:#010x}, found {found:#010x})")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(data) < header:
        raise FormatError(f"{path}: truncated header")
    dims = struct.unpack(f">{ndim}i", data[4:header])
    size = int(np.prod(dims))
    if len(data) - header < size:
        raise FormatError(f"{path}: truncated payload ({len(data) - header} of {size} bytes)")
    return np.frombuffer(data, dtype=np.uint8, count=size, offset=header).reshape(dims)


def read_idx_images(path):
    """``(n, rows, cols)`` uint8 array."""
    return _read_idx(path, IDX_IMAGES_MAGIC)


def read_idx_labels(path):
    return _read_idx(path, IDX_LABELS_MAGIC)


def load_idx_pair(images_path, labels_path):
    """Images flattened and scaled to [0, 1], plus labels shifted to 1..10."""
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if len(images) != len(labels):
        raise FormatError(f"image/label count mismatch: {len(images)} vs {len(labels)}")
    points = images.reshape(len(images), -1).astype(np.float64) / 255.0
    return points, labels.astype(np.int64) + 1


def stratified_subset(labels, n, seed):
    """Indices of a class-balanced random subset; per-class counts differ by at most one."""
    rng = np.random.default_rng(seed)
    classes = np.unique(labels)
    base, extra = divmod(n, len(classes))
    bonus = set(rng.choice(classes, size=extra, replace=False).tolist()) if extra else set()
    picked = []
    for c in classes:
        members = np.flatnonzero(labels == c)
        want = base + (1 if c in bonus else 0)
        if want > len(members):
            raise ValueError(f"class {c} has only {len(members)} items, {want} requested")
        picked.append(rng.choice(members, size=want, replace=False))
    return np.sort(np.concatenate(picked))


def write_idx(path, array, magic):
    """Write a uint8 IDX file (used to build fixtures)."""
    array = np.asarray(array, dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">i", magic))
        f.write(struct.pack(f">{array.ndim}i", *array.shape))
        f.write(array.tobytes())
    return path


# ---------------------------------------------------------------------------
# curves


def write_curves_long(path, curves, seeds):
    """Long format ``epsilon,attack,accuracy,seed``; the pointwise minimum is attack ``min``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["epsilon", "attack", "accuracy", "seed"])
        for curve, seed in zip(curves, seeds):
            series = dict(curve.accuracies)
            series["min"] = curve.min_curve
            for name, acc in series.items():
                for eps, a in zip(curve.eps_grid, acc):
                    w.writerow([_fmt(eps), name, _fmt(a), seed])
    return path


def read_curves_long(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def write_aggregate(path, agg):
    """``epsilon,acc_mean,acc_std,nauc_mean,nauc_std``, one row per grid point."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["epsilon", "acc_mean", "acc_std", "nauc_mean", "nauc_std"])
        for eps, m, s in zip(agg.eps_grid, agg.acc_mean, agg.acc_std):
            w.writerow([_fmt(eps), _fmt(m), _fmt(s), _fmt(agg.nauc_mean), _fmt(agg.nauc_std)])
    return path
