"""Experiment orchestration shared by the CLI and the reproduction tests."""

import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import io
from .attacks import BALL_PGD, BIM, FGSM, VORONOI_PGD, AttackConfig
from .config import ConfigError, InvariantViolation, dump_config
from .evaluation import aggregate, default_eps_grid, robustness_curve
from .geometry import (
    coverage_ratio_bound,
    coverage_ratio_mc,
    covering_gap,
    dense_reference,
    grid_cover,
    grid_cover_radius_empirical,
    make_circles,
    make_planes,
    measure_delta_cover,
    tube_sample,
)
from .training import TrainConfig, train_runs
from .voronoi import NeighborIndex, certify_ball_cover, certify_nn_cover, nn_classify

# Voronoi ascent step as a fraction of the decision-axis reach
VORONOI_STEP_FRACTION = 0.05
IMAGE_VORONOI_STEP = 0.01
IMAGE_EPS_MAX = 0.5


# ---------------------------------------------------------------------------
# datasets


def build_datasets(cfg, codim):
    """``(train, test)`` from files when given, otherwise generated from ``cfg``."""
    if cfg.train is not None:
        train = io.read_dataset(cfg.train)
        if cfg.test is None:
            raise ConfigError("a train file needs a matching test file")
        test = io.read_dataset(cfg.test)
        train.role, test.role = "train", "test"
        return train, test
    if cfg.kind == "circles":
        return (
            make_circles(cfg.n_per_class, codim, cfg.seed, role="train"),
            make_circles(cfg.n_per_class, codim, cfg.seed, role="test"),
        )
    if cfg.kind == "planes":
        try:
            return make_planes(cfg.cover, codim, cfg.vertices_per_axis)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    raise ConfigError("ingested data must be passed through train=/test= files")


def generate_data(cfg):
    """Write train/test CSVs (+ metadata) for every configured codimension."""
    cfg.validate()
    out = Path(cfg.out)
    written = []
    for codim in cfg.codim:
        train, test = build_datasets(cfg, codim)
        for ds in (train, test):
            path = out / f"{cfg.kind}_codim{codim}_{ds.role}.csv"
            io.write_dataset(ds, path, {"codim": codim})
            written.append(path)
    return written


# ---------------------------------------------------------------------------
# training + evaluation


def attack_suite(cfg):
    kinds = {"fgsm": FGSM, "bim": BIM, "ball_pgd": BALL_PGD}
    return [AttackConfig(kinds[name], cfg.eval_p, iters=cfg.eval_iters) for name in cfg.attacks]


def eval_grid(cfg, dataset):
    eps_max = cfg.eps_max
    if eps_max is None:
        eps_max = dataset.spec.reach_decision_axis if dataset.spec else IMAGE_EPS_MAX
    return default_eps_grid(eps_max, cfg.eps_points)


def train_config(cfg, dataset):
    if cfg.mode == "natural":
        attack = None
    elif cfg.mode == "ball":
        attack = AttackConfig(
            cfg.ball_attack, cfg.train_p, cfg.train_eps, cfg.train_step, cfg.train_iters
        )
    else:
        step = cfg.voronoi_step
        if step is None:
            step = (
                VORONOI_STEP_FRACTION * dataset.spec.reach_decision_axis
                if dataset.spec
                else IMAGE_VORONOI_STEP
            )
        attack = AttackConfig(VORONOI_PGD, cfg.train_p, step=step, iters=cfg.train_iters)
    return TrainConfig(
        mode=cfg.mode,
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        lr=cfg.lr,
        optimizer=cfg.optimizer,
        momentum=cfg.momentum,
        hidden=cfg.hidden,
        attack=attack,
        m=cfg.m,
        retrainings=cfg.retrainings,
        seed=cfg.seed,
        early_stop_loss=cfg.early_stop_loss,
    ).validate()


@dataclass
class RunResult:
    codim: int
    aggregate: object
    curves: list
    runs: list = field(default_factory=list)
    out_dir: Path | None = None


def run_single(cfg, codim, out_dir=None):
    """Train all retrainings for one dataset and evaluate each on the test set."""
    train, test = build_datasets(cfg, codim)
    tcfg = train_config(cfg, train)
    grid = eval_grid(cfg, train)
    suite = attack_suite(cfg)
    runs = train_runs(train, tcfg)
    curves = [robustness_curve(r.model, test, suite, grid, seed=r.seed) for r in runs]
    agg = aggregate(curves)
    result = RunResult(codim, agg, curves, runs)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for i, r in enumerate(runs):
            io.save_checkpoint(r.model, out_dir / f"model_r{i:02d}.mrlm")
        seeds = [r.seed for r in runs]
        io.write_curves_long(out_dir / "curves.csv", curves, seeds)
        io.write_aggregate(out_dir / "aggregate.csv", agg)
        # the echo is narrowed to this codimension so it reproduces this directory alone
        (out_dir / "config.txt").write_text(dump_config(replace(cfg, codim=(codim,))))
        manifest = {
            "codim": codim,
            "mode": tcfg.mode,
            "retrainings": len(runs),
            "final_losses": ",".join(repr(r.final_loss) for r in runs),
            "epochs_run": ",".join(str(len(r.epoch_losses)) for r in runs),
            "nauc_mean": repr(agg.nauc_mean),
            "nauc_std": repr(agg.nauc_std),
        }
        io.write_kv(out_dir / "manifest.txt", manifest)
        # wall time varies between runs, so it lives outside the reproducible files
        io.write_kv(out_dir / "timing.txt", {"wall_time_s": f"{sum(r.wall_time for r in runs):.3f}"})
        result.out_dir = out_dir
    return result


def run_experiment(cfg):
    """Run every configured codimension; writes a sweep summary when there are several."""
    cfg.validate()
    out = Path(cfg.out)
    results = []
    for codim in cfg.codim:
        sub = out / f"codim{codim}" if len(cfg.codim) > 1 else out
        results.append(run_single(cfg, codim, sub))
    if len(results) > 1:
        lines = ["codim,nauc_mean,nauc_std"]
        lines += [f"{r.codim},{r.aggregate.nauc_mean!r},{r.aggregate.nauc_std!r}" for r in results]
        (out / "sweep.csv").write_text("\n".join(lines) + "\n")
    return results


def evaluate_run(cfg, run_dir):
    """Re-evaluate the checkpoints in ``run_dir`` against the configured test data."""
    run_dir = Path(run_dir)
    ckpts = sorted(run_dir.glob("model_r*.mrlm"))
    if not ckpts:
        raise ConfigError(f"no checkpoints in {run_dir}")
    manifest = run_dir / "manifest.txt"
    codim = int(io.read_kv(manifest)["codim"]) if manifest.exists() else cfg.codim[0]
    train, test = build_datasets(cfg, codim)
    grid = eval_grid(cfg, train)
    suite = attack_suite(cfg)
    curves = [
        robustness_curve(io.load_checkpoint(p), test, suite, grid, seed=cfg.seed + i)
        for i, p in enumerate(ckpts)
    ]
    agg = aggregate(curves)
    io.write_curves_long(run_dir / "eval_curves.csv", curves, [cfg.seed + i for i in range(len(ckpts))])
    io.write_aggregate(run_dir / "eval_aggregate.csv", agg)
    return agg


# ---------------------------------------------------------------------------
# theory report


@dataclass
class TheoryReport:
    certify: list
    gap: list
    coverage: list

    def summary(self):
        lines = ["Sampling certificates (planes cover, decision-axis reach 1)"]
        for r in self.certify:
            flag = " [eps beyond reach]" if r["beyond_reach"] else ""
            lines.append(
                f"  delta={r['delta']:.4f} eps={r['epsilon']:.3f}: 1-NN certified={r['nn_ok']}, "
                f"ball certified={r['ball_ok']}, 1-NN tube accuracy={r['nn_tube_acc']}{flag}"
            )
        lines.append("Covering gap on parallel flats")
        for r in self.gap:
            lines.append(
                f"  k={r['k']} eps={r['epsilon']}: delta_nn={r['delta_nn']:.4f} "
                f"delta_ball={r['delta_ball']:.4f} ratio_lower={r['ratio_lower']:.4f} "
                f"grid count ratio={r['empirical_count_ratio']:.4f}"
            )
        lines.append("Coverage of the eps-tube by eps-balls at the samples")
        for r in self.coverage:
            mc = "n/a" if r["mc_estimate"] is None else f"{r['mc_estimate']:.5f} +- {r['mc_stderr']:.5f}"
            lines.append(f"  d={r['d']} k={r['k']} eps={r['epsilon']} n={r['n']}: bound={r['bound']:.6g}, mc={mc}")
        return "\n".join(lines) + "\n"


def theory_report(cfg, check=True):
    """Certification, covering-gap and coverage tables for the planes geometry."""
    train, _ = make_planes(cfg.cover, 1, cfg.vertices_per_axis)
    spec = train.spec
    per_class = len(train) // 2
    reference = dense_reference(spec, cfg.reference_multiplier * per_class, cfg.seed)
    delta = measure_delta_cover(train, reference, 2)
    reach = spec.reach_decision_axis
    index = NeighborIndex.from_dataset(train, 2)
    certify = []
    for eps in cfg.theory_eps:
        nn = certify_nn_cover(delta, reach, eps)
        ball = certify_ball_cover(delta, reach, eps)
        acc = None
        if eps < reach:
            hits = 0
            for cid in spec.class_ids:
                pts = tube_sample(spec, cid, eps, 2, 5000, (cfg.seed, cid), radial="shell")
                hits += int(np.sum(nn_classify(index, pts) == cid))
            acc = hits / 10000
        certify.append(
            {
                "delta": delta,
                "reach": reach,
                "epsilon": eps,
                "nn_ok": bool(nn),
                "ball_ok": bool(ball),
                "beyond_reach": nn.beyond_reach,
                "nn_tube_acc": acc,
            }
        )

    gap = []
    for k in cfg.gap_k:
        for eps in cfg.gap_eps:
            d_nn, d_ball, ratio = covering_gap(k, eps)
            nn_cover, ball_cover = grid_cover(k, d_nn), grid_cover(k, d_ball)
            gap.append(
                {
                    "k": k,
                    "epsilon": eps,
                    "delta_nn": d_nn,
                    "delta_ball": d_ball,
                    "ratio_lower": ratio,
                    "count_nn": nn_cover.count,
                    "count_ball": ball_cover.count,
                    "empirical_count_ratio": ball_cover.count / nn_cover.count,
                    "radius_nn_observed": grid_cover_radius_empirical(nn_cover, seed=cfg.seed),
                    "radius_ball_observed": grid_cover_radius_empirical(ball_cover, seed=cfg.seed),
                }
            )

    coverage = []
    for d in cfg.coverage_d:
        codim = d - spec.k
        bound = coverage_ratio_bound(d, spec.k, cfg.coverage_eps, len(train), spec.vol_k)
        row = {"d": d, "k": spec.k, "epsilon": cfg.coverage_eps, "n": len(train), "bound": bound,
               "mc_estimate": None, "mc_stderr": None}
        if codim >= 1 and cfg.n_mc > 0:
            lifted, _ = make_planes(cfg.cover, codim, cfg.vertices_per_axis)
            est = coverage_ratio_mc(lifted, cfg.coverage_eps, cfg.n_mc, (cfg.seed, d))
            row["mc_estimate"], row["mc_stderr"] = est.value, est.stderr
            if check and est.value > bound + 3 * est.stderr:
                raise InvariantViolation(
                    f"coverage estimate {est.value:.6f} exceeds bound {bound:.6f} + 3 sigma at d={d}"
                )
        coverage.append(row)
    return TheoryReport(certify, gap, coverage)


def write_theory_report(report, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name in ("certify", "gap", "coverage"):
        rows = getattr(report, name)
        keys = list(rows[0]) if rows else []
        text = ",".join(keys) + "\n"
        for r in rows:
            text += ",".join(_cell(r[k]) for k in keys) + "\n"
        (out_dir / f"theory_{name}.csv").write_text(text)
    (out_dir / "theory_summary.txt").write_text(report.summary())
    return out_dir


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else str(v)
    return str(v)


# ---------------------------------------------------------------------------
# ingestion


def ingest_idx(images_path, labels_path, subset_n, seed, out_path, role="train"):
    """Parse an IDX pair, draw a stratified subset and write it as a dataset CSV."""
    points, labels = io.load_idx_pair(images_path, labels_path)
    if subset_n is not None and subset_n < len(labels):
        idx = io.stratified_subset(labels, subset_n, seed)
        points, labels = points[idx], labels[idx]
    from .geometry import LabeledDataset

    ds = LabeledDataset(points, labels, None, role, seed)
    io.write_dataset(ds, out_path, {"source_images": Path(images_path).name})
    return ds


def timed(fn, *args, **kwargs):
    start = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - start
