"""Command-line surface: search, random baseline, reporting, resume.

Exit codes: 0 success, 2 configuration error, 3 worker failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys

from .config import ConfigError, RunConfig, load_run_config
from .engine import report, resume_search, run_random, run_search
from .evaluator import WorkerError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_WORKER = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kdnas",
        description="Trust-region Bayesian architecture search with a KD-guided score.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_run_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("config", help="run config file (key = value lines)")
        p.add_argument("--seed", type=int, default=None, help="override the run seed")
        p.add_argument("--budget", type=int, default=None,
                       help="override the evaluation budget")
        p.add_argument("--backend", choices=["synthetic", "subprocess"], default=None)
        p.add_argument("--worker-cmd", default=None, help="worker command line")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--force", action="store_true",
                       help="overwrite an existing history in the output directory")

    add_run_flags(sub.add_parser("search", help="run the trust-region search"))
    add_run_flags(sub.add_parser("random", help="run the uniform-random baseline"))

    rep = sub.add_parser("report", help="emit Pareto/curve/allocation CSVs")
    rep.add_argument("history", help="path to a history.jsonl file")
    rep.add_argument("--out", default=None, help="directory for the CSVs")

    res = sub.add_parser("resume", help="continue an interrupted search")
    res.add_argument("checkpoint", help="path to a checkpoint.json file")
    return parser


def _apply_overrides(config: RunConfig, args: argparse.Namespace) -> RunConfig:
    updates: dict = {}
    if args.seed is not None:
        updates["optimizer"] = dataclasses.replace(config.optimizer, seed=args.seed)
    if args.budget is not None:
        updates["evaluations"] = args.budget
    if args.backend is not None:
        updates["backend"] = args.backend
    if args.worker_cmd is not None:
        updates["worker_cmd"] = args.worker_cmd
    if args.out is not None:
        updates["out_dir"] = args.out
    if not updates:
        return config
    try:
        return dataclasses.replace(config, **updates)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command in ("search", "random"):
            config = _apply_overrides(load_run_config(args.config), args)
            runner = run_search if args.command == "search" else run_random
            summary = runner(config, force=args.force)
        elif args.command == "report":
            summary = report(args.history, out_dir=args.out)
        else:
            summary = resume_search(args.checkpoint)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except WorkerError as exc:
        print(f"worker error: {exc}", file=sys.stderr)
        return EXIT_WORKER
    print(json.dumps(summary, indent=2))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
