"""Command-line entry point: ``voronoi-adv <command> [--config FILE] [--key value ...]``.

Commands: gen-data, run, theory, ingest-idx, eval.
Exit codes: 0 success, 2 configuration error, 3 invariant violation.
"""

import argparse
import logging
import sys
from pathlib import Path

from . import experiments
from .config import KEYS, ConfigError, InvariantViolation, dump_config, load_config
from .io import FormatError

log = logging.getLogger("voronoi_adv")

COMMANDS = {
    "gen-data": "generate synthetic train/test datasets",
    "run": "train retrainings and write checkpoints, curves and aggregates",
    "theory": "write the certification / covering / coverage report",
    "ingest-idx": "convert an IDX image/label pair into a dataset CSV",
    "eval": "re-evaluate saved checkpoints (needs --run-dir)",
}


def _parser():
    parser = argparse.ArgumentParser(prog="voronoi-adv", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("-v", "--verbose", action="store_true")
        for key in KEYS:
            p.add_argument(f"--{key.replace('_', '-')}", dest=key, default=None, metavar="VALUE")
    return parser


def _config(args):
    overrides = {k: getattr(args, k) for k in KEYS if getattr(args, k) is not None}
    return load_config(args.config, overrides).validate()


def _run_command(command, cfg):
    out = Path(cfg.out)
    if command == "gen-data":
        for path in experiments.generate_data(cfg):
            print(path)
    elif command == "run":
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.txt").write_text(dump_config(cfg))
        for res in experiments.run_experiment(cfg):
            agg = res.aggregate
            print(f"codim={res.codim} nauc_mean={agg.nauc_mean:.4f} nauc_std={agg.nauc_std:.4f}")
    elif command == "theory":
        report = experiments.theory_report(cfg)
        experiments.write_theory_report(report, out)
        print(report.summary(), end="")
    elif command == "ingest-idx":
        if cfg.images is None or cfg.labels is None:
            raise ConfigError("ingest-idx needs --images and --labels")
        target = out if out.suffix == ".csv" else out / "ingested.csv"
        ds = experiments.ingest_idx(cfg.images, cfg.labels, cfg.subset_n, cfg.seed, target)
        print(f"{target}: {len(ds)} rows, {ds.d} features")
    elif command == "eval":
        if cfg.run_dir is None:
            raise ConfigError("eval needs --run-dir")
        agg = experiments.evaluate_run(cfg, cfg.run_dir)
        print(f"nauc_mean={agg.nauc_mean:.4f} nauc_std={agg.nauc_std:.4f}")


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        cfg = _config(args)
        _run_command(args.command, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FormatError as exc:
        print(f"bad input file: {exc}", file=sys.stderr)
        return 2
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
