"""Trainer command surface: the worker loop plus small diagnostics."""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np
import torch


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kdtrainer", description="Distillation evaluation worker and diagnostics.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("serve", help="speak the evaluation wire protocol on stdin/stdout")

    confuse = sub.add_parser(
        "confuse", help="agreement metrics between two probability matrices")
    confuse.add_argument("probs_a", help="JSON file: list of probability rows")
    confuse.add_argument("probs_b", help="JSON file: list of probability rows")

    sweep = sub.add_parser(
        "orth-sweep", help="orthogonality-penalty descent across coefficients")
    sweep.add_argument("--steps", type=int, default=200)
    sweep.add_argument("--rows", type=int, default=64)
    sweep.add_argument("--cols", type=int, default=128)
    sweep.add_argument("--seed", type=int, default=0)

    teach = sub.add_parser("train-teacher", help="regenerate the shipped teacher checkpoint")
    teach.add_argument("--out", default=None, help="alternative checkpoint path")
    return parser


def _cmd_confuse(args) -> int:
    from .metrics import confusion_metrics
    a = np.asarray(json.load(open(args.probs_a)), dtype=float)
    b = np.asarray(json.load(open(args.probs_b)), dtype=float)
    print(json.dumps(confusion_metrics(a, b)))
    return 0


def _cmd_orth_sweep(args) -> int:
    """How fast pure penalty descent orthogonalizes a random matrix, per lambda."""
    from .losses import orth_penalty

    report = []
    for lam in (1e-5, 1e-4, 1e-3, 1e-2):
        torch.manual_seed(args.seed)
        w = torch.randn(args.rows, args.cols) * (2.0 / args.rows) ** 0.5
        w.requires_grad_(True)
        optimizer = torch.optim.Adam([w], lr=1e-2)
        def gap(m):
            eye = torch.eye(m.shape[1])
            return float(torch.linalg.norm(m.T @ m - eye))
        before = gap(w.detach())
        for _ in range(args.steps):
            optimizer.zero_grad()
            orth_penalty([w], lam).backward()
            optimizer.step()
        after = gap(w.detach())
        report.append({"lambda": lam, "gap_before": before, "gap_after": after,
                       "reduction": 1.0 - after / before})
    print(json.dumps(report, indent=2))
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.command == "serve":
        from .worker import serve
        return serve()
    if args.command == "confuse":
        return _cmd_confuse(args)
    if args.command == "orth-sweep":
        return _cmd_orth_sweep(args)
    from .teacher import train_teacher
    from pathlib import Path
    acc = train_teacher(Path(args.out) if args.out else None)
    print(json.dumps({"val_top1": acc}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
