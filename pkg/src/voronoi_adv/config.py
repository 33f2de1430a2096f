"""Flat ``key=value`` experiment configuration.

One key per line, ``#`` starts a comment.  Command-line flags use the same
names and override the file.  Unknown keys are rejected.
"""

from dataclasses import dataclass, fields, replace
from pathlib import Path


class ConfigError(ValueError):
    """Invalid configuration (CLI exit code 2)."""


class InvariantViolation(RuntimeError):
    """A checked invariant failed while producing output (CLI exit code 3)."""


def _int_list(text):
    return tuple(int(v) for v in str(text).split(",") if v.strip())


def _float_list(text):
    return tuple(float(v) for v in str(text).split(",") if v.strip())


def _str_list(text):
    return tuple(v.strip() for v in str(text).split(",") if v.strip())


def _opt_float(text):
    return None if str(text).lower() in ("", "none", "auto") else float(text)


def _opt_int(text):
    return None if str(text).lower() in ("", "none", "auto", "0") else int(text)


def _opt_path(text):
    return None if str(text).lower() in ("", "none") else str(text)


@dataclass(frozen=True)
class ExperimentConfig:
    # dataset
    kind: str = "circles"
    codim: tuple = (1,)
    n_per_class: int = 1000
    cover: float = 1.0
    vertices_per_axis: int | None = None
    train: str | None = None
    test: str | None = None
    # training
    mode: str = "natural"
    epochs: int = 200
    batch_size: int | None = 64
    lr: float = 0.1
    optimizer: str = "adam"
    momentum: float = 0.0
    hidden: int = 100
    retrainings: int = 20
    early_stop_loss: float = 1e-4
    ball_attack: str = "ball_pgd"
    train_p: str = "2"
    train_eps: float = 0.5
    train_step: float | None = None
    train_iters: int = 40
    m: int = 10
    voronoi_step: float | None = None
    # evaluation
    attacks: tuple = ("fgsm", "bim")
    eval_p: str = "2"
    eval_iters: int = 40
    eps_max: float | None = None
    eps_points: int = 21
    # theory report
    theory_eps: tuple = (0.1, 0.25, 0.45, 0.5, 0.75)
    gap_k: tuple = (1, 2, 3, 4, 5, 6)
    gap_eps: tuple = (0.0, 0.25, 0.5)
    coverage_d: tuple = (4, 12, 102, 502)
    coverage_eps: float = 0.5
    n_mc: int = 100_000
    reference_multiplier: int = 10
    # ingestion
    images: str | None = None
    labels: str | None = None
    subset_n: int = 2000
    # run control
    run_dir: str | None = None
    out: str = "runs/default"
    seed: int = 0

    def validate(self):
        if self.kind not in ("circles", "planes", "ingested"):
            raise ConfigError(f"kind must be circles, planes or ingested, got {self.kind!r}")
        if self.mode not in ("natural", "ball", "voronoi"):
            raise ConfigError(f"mode must be natural, ball or voronoi, got {self.mode!r}")
        if self.ball_attack not in ("bim", "ball_pgd"):
            raise ConfigError("ball_attack must be bim or ball_pgd")
        if self.retrainings < 1 or self.epochs < 1 or self.eps_points < 2:
            raise ConfigError("retrainings, epochs must be >= 1 and eps_points >= 2")
        for name in ("train_p", "eval_p"):
            if getattr(self, name).lower() not in ("2", "2.0", "inf"):
                raise ConfigError(f"{name} must be 2 or inf")
        for name in self.attacks:
            if name not in ("fgsm", "bim", "ball_pgd"):
                raise ConfigError(f"unsupported evaluation attack {name!r}")
        for name in ("train", "test", "images", "labels", "run_dir"):
            path = getattr(self, name)
            if path is not None and not Path(path).exists():
                raise ConfigError(f"{name}: file not found: {path}")
        if self.kind == "planes" and any(c < 1 for c in self.codim):
            raise ConfigError("planes need codim >= 1")
        return self


_PARSERS = {
    "codim": _int_list,
    "vertices_per_axis": _opt_int,
    "train": _opt_path,
    "test": _opt_path,
    "batch_size": _opt_int,
    "train_step": _opt_float,
    "voronoi_step": _opt_float,
    "attacks": _str_list,
    "eps_max": _opt_float,
    "theory_eps": _float_list,
    "gap_k": _int_list,
    "gap_eps": _float_list,
    "coverage_d": _int_list,
    "images": _opt_path,
    "labels": _opt_path,
    "run_dir": _opt_path,
}

_DEFAULTS = ExperimentConfig()
KEYS = tuple(f.name for f in fields(ExperimentConfig))


def _parse_value(key, text):
    if key in _PARSERS:
        return _PARSERS[key](text)
    default = getattr(_DEFAULTS, key)
    if isinstance(default, bool):
        return str(text).lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    return str(text)


def from_mapping(mapping, base=None):
    """Build a config from string values; unknown keys raise :class:`ConfigError`."""
    updates = {}
    for key, value in mapping.items():
        norm = key.replace("-", "_")
        if norm not in KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            updates[norm] = _parse_value(norm, value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {value!r} ({exc})") from None
    return replace(base or _DEFAULTS, **updates)


def parse_kv_text(text, source="<config>"):
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def load_config(path=None, overrides=None):
    """Read a config file (optional) and apply string ``overrides``."""
    mapping = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {path}")
        mapping.update(parse_kv_text(p.read_text(), str(p)))
    mapping.update(overrides or {})
    return from_mapping(mapping)


def format_value(value):
    if value is None:
        return "none"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def dump_config(cfg):
    """Serialise every key, so the echo alone reproduces a run."""
    return "".join(f"{f.name}={format_value(getattr(cfg, f.name))}\n" for f in fields(cfg))
