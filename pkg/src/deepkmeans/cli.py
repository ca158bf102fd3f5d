"""Command-line entry point: ``deepkmeans {blobs,pretrain,train,evaluate,linesearch}``.

Exit codes: 0 success, 2 configuration error, 3 numeric failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import FIELDS, load_config
from .data import make_blobs, save_dense_csv, write_labels
from .errors import ConfigError, FormatError, NumericError
from .experiment import evaluate_runs, line_search, pretrain_runs, train_runs

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("deepkmeans")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", "-c", help="INI config file with [data]/[model]/[train]/[run] sections")
    for section, key, _, _ in FIELDS:
        p.add_argument(f"--{key.replace('_', '-')}", dest=f"cfg_{key}", metavar=key.upper(),
                       help=f"override [{section}] {key}")


def _config_from_args(args):
    overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg_") and v is not None}
    return load_config(args.config, overrides)


def cmd_blobs(args) -> int:
    ds = make_blobs(args.n_per_cluster, args.n_clusters, args.dim, args.spread, args.sigma, args.seed)
    save_dense_csv(args.out, ds.samples, ds.labels)
    if args.labels_out:
        write_labels(args.labels_out, ds.labels)
    print(f"wrote {len(ds)} samples to {args.out}")
    return EXIT_OK


def cmd_pretrain(args) -> int:
    for d in pretrain_runs(_config_from_args(args)):
        print(d)
    return EXIT_OK


def cmd_train(args) -> int:
    for d in train_runs(_config_from_args(args)):
        print(d)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    _, report = evaluate_runs(args.run_dirs, args.labels, args.split, args.out)
    print(json.dumps(report.summary, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_linesearch(args) -> int:
    cfg = _config_from_args(args)
    best, curve = line_search(cfg)
    for lam, acc in curve.items():
        print(f"lambda={lam:g}\tvalidation_acc={acc:.4f}")
    print(f"best lambda: {best:g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="deepkmeans", description="Deep k-Means clustering experiments")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("blobs", help="write a synthetic Gaussian-blob CSV (label column last)")
    p.add_argument("--out", required=True)
    p.add_argument("--labels-out")
    p.add_argument("--n-per-cluster", type=int, default=100)
    p.add_argument("--n-clusters", type=int, default=3)
    p.add_argument("--dim", type=int, default=10)
    p.add_argument("--spread", type=float, default=10.0)
    p.add_argument("--sigma", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_blobs)

    p = sub.add_parser("pretrain", help="pretrain the autoencoder on reconstruction loss")
    _add_config_flags(p)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("train", help="run the configured variant once per seed")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score run directories and aggregate over seeds")
    p.add_argument("run_dirs", nargs="+")
    p.add_argument("--labels", required=True, help="newline-delimited integer labels")
    p.add_argument("--split", choices=("test_only", "full"), default="test_only")
    p.add_argument("--out", default="evaluation")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("linesearch", help="choose lambda by validation accuracy")
    _add_config_flags(p)
    p.set_defaults(func=cmd_linesearch)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, FormatError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
