"""Run orchestration: trust-region search, the random baseline, reporting,
and exact kill/resume via per-batch checkpoints.

Layout of an output directory:
    history.jsonl    append-only candidate records (see records module)
    checkpoint.json  optimizer snapshot + the in-flight batch, rewritten per batch
    summary.json     final roll-up

The checkpoint is written after a batch is issued but before it is evaluated.
Resuming truncates any torn tail of the history back to the checkpoint and
re-evaluates the stored batch, so an interrupted run reproduces the exact
history an uninterrupted one would have written.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, run_config_from_dict, run_config_to_dict
from .evaluator import (
    Evaluator,
    EvalRequest,
    SubprocessBackend,
    SyntheticBackend,
    default_synthetic_budget,
)
from .objective import pareto_front
from .records import CandidateRecord, history_header, read_history
from .space import decode, dimensionality
from .turbo import ProposedPoint, StepResult, TurboOptimizer

log = logging.getLogger(__name__)

HISTORY_NAME = "history.jsonl"
CHECKPOINT_NAME = "checkpoint.json"
SUMMARY_NAME = "summary.json"

_RANDOM_STREAM_TAG = 7777
CHECKPOINT_VERSION = 1


def _proxy_seed(run_seed: int, candidate_id: int) -> int:
    return int(np.random.SeedSequence([run_seed, candidate_id]).generate_state(1)[0])


def _build_evaluator(config: RunConfig) -> Evaluator:
    budget = config.budget
    if budget is None:
        budget = default_synthetic_budget(config.space, config.latency)
    if config.backend == "synthetic":
        backend = SyntheticBackend()
    else:
        backend = SubprocessBackend(config.worker_cmd, timeout=config.worker_timeout)
    return Evaluator(config.space, backend, budget, latency=config.latency,
                     epsilon=config.epsilon)


def _prepare_out_dir(config: RunConfig, force: bool) -> Path:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    history = out / HISTORY_NAME
    if history.exists() and not force:
        raise ConfigError(f"{history} already exists; pass --force to overwrite")
    return out


class _RunState:
    """Rolling aggregates over the records written so far."""

    def __init__(self):
        self.ok_records: list[CandidateRecord] = []
        self.failed = 0
        self.best: CandidateRecord | None = None

    def absorb(self, record: CandidateRecord) -> None:
        if record.status != "ok":
            self.failed += 1
            return
        self.ok_records.append(record)
        if self.best is None or record.score.score < self.best.score.score:
            self.best = record

    def summary(self, mode: str) -> dict:
        doc = {
            "mode": mode,
            "evaluations": len(self.ok_records) + self.failed,
            "ok": len(self.ok_records),
            "failed": self.failed,
            "pareto_size": len(pareto_front(self.ok_records)),
            "best_score": None,
            "best_id": None,
            "best_arch": None,
        }
        if self.best is not None:
            doc.update(best_score=self.best.score.score, best_id=self.best.id,
                       best_arch=self.best.arch.to_dict())
        return doc


def _evaluate_point(evaluator: Evaluator, config: RunConfig, point_id: int,
                    coords: np.ndarray, region_id: int | None) -> CandidateRecord:
    arch = decode(config.space, coords)
    req = EvalRequest(id=point_id, arch=arch, proxy=config.proxy,
                      proxy_seed=_proxy_seed(config.optimizer.seed, point_id),
                      input_resolution=config.space.input_resolution, point=coords)
    t_start = time.time() if config.record_walltime else None
    outcome = evaluator.evaluate(req)
    t_end = time.time() if config.record_walltime else None
    return CandidateRecord(
        id=point_id, point=tuple(float(v) for v in coords), arch=arch,
        metrics=outcome.metrics, score=outcome.score, region_id=region_id,
        status=outcome.result.status, t_start=t_start, t_end=t_end,
    )


def _write_checkpoint(out: Path, config: RunConfig, opt: TurboOptimizer,
                      batch: list[ProposedPoint], evals_done: int) -> None:
    doc = {
        "version": CHECKPOINT_VERSION,
        "run": run_config_to_dict(config),
        "optimizer": opt.to_dict(),
        "batch": [
            {"point_id": p.point_id, "region_id": p.region_id,
             "point": [float(v) for v in p.coords]}
            for p in batch
        ],
        "evals_done": evals_done,
    }
    tmp = out / (CHECKPOINT_NAME + ".tmp")
    tmp.write_text(json.dumps(doc))
    tmp.replace(out / CHECKPOINT_NAME)


def _search_loop(config: RunConfig, opt: TurboOptimizer, out: Path, history_fh,
                 state: _RunState, evals_done: int,
                 first_batch: list[ProposedPoint] | None) -> dict:
    evaluator = _build_evaluator(config)
    try:
        results: list[StepResult] = []
        batch = first_batch
        while evals_done < config.evaluations:
            if batch is None:
                batch = opt.step(results)[: config.evaluations - evals_done]
                _write_checkpoint(out, config, opt, batch, evals_done)
            results = []
            for proposal in batch:
                record = _evaluate_point(evaluator, config, proposal.point_id,
                                         proposal.coords, proposal.region_id)
                history_fh.write(record.to_line() + "\n")
                history_fh.flush()
                state.absorb(record)
                evals_done += 1
                value = record.score.score if record.status == "ok" else None
                results.append(StepResult(proposal.point_id, value))
            log.info("evaluated %d/%d (best %s)", evals_done, config.evaluations,
                     None if state.best is None else f"{state.best.score.score:.6g}")
            batch = None
    finally:
        evaluator.close()

    summary = state.summary("search")
    (out / SUMMARY_NAME).write_text(json.dumps(summary, indent=2) + "\n")
    return summary


def run_search(config: RunConfig, force: bool = False) -> dict:
    """Full trust-region search run; returns the summary document."""
    out = _prepare_out_dir(config, force)
    d = dimensionality(config.space)
    opt = TurboOptimizer(config.optimizer, d)
    with open(out / HISTORY_NAME, "w") as fh:
        fh.write(history_header(config.optimizer.seed, config.backend,
                                config.evaluations, d, mode="search") + "\n")
        fh.flush()
        return _search_loop(config, opt, out, fh, _RunState(), 0, first_batch=None)


def resume_search(checkpoint_path: str | Path) -> dict:
    """Continue an interrupted run from its checkpoint.

    Any history lines past the checkpoint belong to the interrupted in-flight
    batch; they are dropped and re-evaluated, which reproduces them exactly.
    """
    checkpoint_path = Path(checkpoint_path)
    try:
        doc = json.loads(checkpoint_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read checkpoint {checkpoint_path}: {exc}") from None
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ConfigError(f"unsupported checkpoint version {doc.get('version')!r}")

    config = run_config_from_dict(doc["run"])
    opt = TurboOptimizer.from_dict(doc["optimizer"], config.optimizer)
    batch = [ProposedPoint(point_id=b["point_id"], region_id=b["region_id"],
                           coords=np.asarray(b["point"], dtype=float))
             for b in doc["batch"]]
    evals_done = doc["evals_done"]

    out = checkpoint_path.parent
    history = out / HISTORY_NAME
    if not history.exists():
        raise ConfigError(f"history file {history} not found next to the checkpoint")

    with open(history) as fh:
        lines = fh.readlines()
    keep = lines[: 1 + evals_done]  # header + completed records
    state = _RunState()
    for record_line in keep[1:]:
        state.absorb(CandidateRecord.from_doc(json.loads(record_line)))

    with open(history, "w") as fh:
        fh.writelines(keep)
        fh.flush()
        return _search_loop(config, opt, out, fh, state, evals_done, first_batch=batch)


def run_random(config: RunConfig, force: bool = False) -> dict:
    """Uniform-random baseline over the same budget and record format."""
    out = _prepare_out_dir(config, force)
    d = dimensionality(config.space)
    rng = np.random.default_rng([config.optimizer.seed, _RANDOM_STREAM_TAG])
    evaluator = _build_evaluator(config)
    state = _RunState()
    try:
        with open(out / HISTORY_NAME, "w") as fh:
            fh.write(history_header(config.optimizer.seed, config.backend,
                                    config.evaluations, d, mode="random") + "\n")
            for i in range(config.evaluations):
                record = _evaluate_point(evaluator, config, i, rng.random(d), None)
                fh.write(record.to_line() + "\n")
                fh.flush()
                state.absorb(record)
    finally:
        evaluator.close()
    summary = state.summary("random")
    (out / SUMMARY_NAME).write_text(json.dumps(summary, indent=2) + "\n")
    return summary


def report(history_path: str | Path, out_dir: str | Path | None = None) -> dict:
    """Digest a history file into plot-ready CSVs; returns a small summary."""
    history_path = Path(history_path)
    if not history_path.exists():
        raise ConfigError(f"history file {history_path} not found")
    out = Path(out_dir) if out_dir is not None else history_path.parent
    out.mkdir(parents=True, exist_ok=True)

    _, records, corrupt = read_history(history_path)
    ok = [r for r in records if r.status == "ok"]

    front = pareto_front(ok)
    with open(out / "pareto.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["acc", "params", "flops", "latency", "s", "score", "arch_id"])
        for r in front:
            writer.writerow([r.metrics.acc_student, r.metrics.np_student,
                             r.metrics.flops_student, r.metrics.latency_student,
                             r.score.s, r.score.score, r.id])

    best = float("inf")
    with open(out / "curve.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["evaluation", "best_score"])
        for i, r in enumerate(records, start=1):
            best = min(best, r.effective_score)
            writer.writerow([i, best])

    counts: dict = {}
    for r in records:
        counts[r.region_id] = counts.get(r.region_id, 0) + 1
    with open(out / "regions.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["region", "count"])
        for region in sorted(counts, key=lambda k: (k is None, k)):
            writer.writerow(["" if region is None else region, counts[region]])

    return {"records": len(records), "ok": len(ok), "corrupt": corrupt,
            "pareto_size": len(front)}
