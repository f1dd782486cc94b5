"""Command-line experiment runner.

Verbs: run (full pipelines), sweep (one-parameter grids), validate
(dry-run config checks), report (rebuild summary.csv from artifacts).
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from .autodiff import ContractViolation
from .config import ExperimentConfig, METHODS, load_config
from .experiment import rebuild_summary, run_experiment, run_sweep


def parse_seeds(text: str) -> list[int]:
    """Accept '3', '1,2,5' or a range '1..5' (inclusive)."""
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..", 1)
        lo, hi = int(lo), int(hi)
        if hi < lo:
            raise argparse.ArgumentTypeError(f"empty seed range '{text}'")
        return list(range(lo, hi + 1))
    return [int(part) for part in text.split(",") if part]


def parse_values(text: str) -> list[float]:
    return [float(part) for part in text.split(",") if part]


def _load(args) -> ExperimentConfig:
    exp = load_config(args.config) if args.config else ExperimentConfig()
    if getattr(args, "seeds", None):
        exp = dataclasses.replace(exp, seeds=args.seeds)
    if getattr(args, "methods", None):
        exp = dataclasses.replace(exp, methods=args.methods.split(","))
    if getattr(args, "dataset", None):
        chosen = [d for d in exp.datasets if d.name == args.dataset]
        if not chosen:
            raise ContractViolation(
                f"dataset '{args.dataset}' not in config "
                f"(have {[d.name for d in exp.datasets]})")
        exp = dataclasses.replace(exp, datasets=chosen)
    if getattr(args, "output_dir", None):
        exp = dataclasses.replace(exp, output_dir=args.output_dir)
    if getattr(args, "eval_stride", None):
        exp = dataclasses.replace(
            exp, continual=dataclasses.replace(exp.continual, eval_stride=args.eval_stride))
    if getattr(args, "workers", None):
        exp = dataclasses.replace(exp, workers=args.workers)
    return exp


def _add_common(sub):
    sub.add_argument("--config", help="TOML experiment description")
    sub.add_argument("--seed", type=int, help="single seed (shorthand for --seeds)")
    sub.add_argument("--seeds", type=parse_seeds, help="e.g. 1,2,3 or 1..5")
    sub.add_argument("--dataset", help="restrict to one configured dataset by name")
    sub.add_argument("--output-dir", help="artifact directory (else $PROTOSTREAM_OUTPUT)")
    sub.add_argument("--eval-stride", type=int, help="evaluate every N stream steps")
    sub.add_argument("--workers", type=int, help="parallel (seed x method) runs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="protostream",
        description="Seeded continual-learning experiments on streaming sensor data")
    parser.add_argument("-v", "--verbose", action="store_true")
    commands = parser.add_subparsers(dest="command", required=True)

    p_run = commands.add_parser("run", help="run method x dataset x seed pipelines")
    _add_common(p_run)
    p_run.add_argument("--methods", help=f"comma list from {METHODS}")

    p_sweep = commands.add_parser("sweep", help="grid over one continual parameter")
    _add_common(p_sweep)
    p_sweep.add_argument("--param", required=True, choices=["margin", "refresh_ratio"])
    p_sweep.add_argument("--values", required=True, type=parse_values,
                         help="comma list, e.g. 0.2,1,2,3")
    p_sweep.add_argument("--method", default="lapnet",
                         help="method variant to sweep (default lapnet)")

    p_val = commands.add_parser("validate", help="dry-run config checks")
    p_val.add_argument("--config", help="TOML experiment description")

    p_rep = commands.add_parser("report", help="rebuild summary.csv from runs.json")
    p_rep.add_argument("--output-dir", required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "validate":
            exp = load_config(args.config) if args.config else ExperimentConfig()
            violations = exp.violations()
            if violations:
                print(f"{len(violations)} violation(s):")
                for v in violations:
                    print(f"  - {v}")
                return 1
            print("config ok: no violations")
            return 0

        if args.command == "report":
            path = rebuild_summary(Path(args.output_dir))
            print(f"wrote {path}")
            return 0

        if args.seed is not None and not args.seeds:
            args.seeds = [args.seed]
        exp = _load(args)

        if args.command == "run":
            out = run_experiment(exp)
            print(f"wrote {out / 'summary.csv'}")
            return 0

        if args.command == "sweep":
            path = run_sweep(exp, args.param, args.values, method=args.method)
            print(f"wrote {path}")
            return 0
    except (ContractViolation, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
