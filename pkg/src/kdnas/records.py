"""Run-history records: one JSON document per line, append-only.

Line 1 is a header carrying the schema version and run identity; every
following line is one evaluated candidate. Each line parses independently, so
a crash loses at most the in-flight batch.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

from .evaluator import PENALTY_SCORE
from .objective import Metrics, ScoreBreakdown
from .space import ArchitectureSpec

log = logging.getLogger(__name__)

HISTORY_FORMAT = "kdnas-history"
HISTORY_VERSION = 1

_STATUSES = ("ok", "failed", "timeout")


@dataclass(frozen=True)
class CandidateRecord:
    """One fully evaluated candidate, as persisted in the history file."""

    id: int
    point: tuple[float, ...]
    arch: ArchitectureSpec
    metrics: Metrics | None
    score: ScoreBreakdown | None
    region_id: int | None
    status: str
    t_start: float | None = None
    t_end: float | None = None

    def __post_init__(self):
        if self.status not in _STATUSES:
            raise ValueError(f"unknown status {self.status!r}")
        if self.status == "ok" and (self.score is None or self.metrics is None):
            raise ValueError("ok records need metrics and a finite score")

    @property
    def effective_score(self) -> float:
        return self.score.score if self.score is not None else PENALTY_SCORE

    def to_line(self) -> str:
        doc = {
            "type": "candidate",
            "id": self.id,
            "region": self.region_id,
            "status": self.status,
            "point": list(self.point),
            "arch": self.arch.to_dict(),
            "metrics": None if self.metrics is None else {
                "acc": self.metrics.acc_student,
                "params": self.metrics.np_student,
                "flops": self.metrics.flops_student,
                "latency": self.metrics.latency_student,
            },
            "score": {
                "s": None if self.score is None else self.score.s,
                "indicator": None if self.score is None else self.score.indicator,
                "score": PENALTY_SCORE if self.score is None else self.score.score,
            },
            "t_start": self.t_start,
            "t_end": self.t_end,
        }
        return json.dumps(doc)

    @staticmethod
    def from_doc(doc: dict) -> "CandidateRecord":
        validate_record(doc)
        metrics = None
        if doc["metrics"] is not None:
            m = doc["metrics"]
            metrics = Metrics(acc_student=m["acc"], np_student=m["params"],
                              flops_student=m["flops"], latency_student=m["latency"])
        score = None
        if doc["score"]["s"] is not None:
            score = ScoreBreakdown(s=doc["score"]["s"], indicator=doc["score"]["indicator"],
                                   score=doc["score"]["score"])
        return CandidateRecord(
            id=doc["id"], point=tuple(doc["point"]),
            arch=ArchitectureSpec.from_dict(doc["arch"]), metrics=metrics, score=score,
            region_id=doc["region"], status=doc["status"],
            t_start=doc.get("t_start"), t_end=doc.get("t_end"),
        )


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ValueError(message)


def validate_record(doc: dict) -> None:
    """Structural check of one candidate document; raises ValueError."""
    _require(isinstance(doc, dict), "record is not an object")
    _require(doc.get("type") == "candidate", "record type must be 'candidate'")
    _require(isinstance(doc.get("id"), int) and doc["id"] >= 0, "id must be a non-negative int")
    _require(doc.get("region") is None or isinstance(doc["region"], int),
             "region must be an int or null")
    _require(doc.get("status") in _STATUSES, f"status must be one of {_STATUSES}")
    point = doc.get("point")
    _require(isinstance(point, list) and all(isinstance(v, (int, float)) for v in point),
             "point must be a list of numbers")
    _require(all(0.0 <= v <= 1.0 for v in point), "point coordinates must lie in [0, 1]")
    _require(isinstance(doc.get("arch"), dict), "arch must be an object")
    for key in ("stem", "conv_slots", "tail", "head"):
        _require(key in doc["arch"], f"arch is missing {key!r}")

    metrics, score = doc.get("metrics"), doc.get("score")
    _require(isinstance(score, dict) and {"s", "indicator", "score"} <= set(score),
             "score must be an object with s/indicator/score")
    if doc["status"] == "ok":
        _require(isinstance(metrics, dict), "ok records must carry metrics")
        for key in ("acc", "params", "flops", "latency"):
            _require(isinstance(metrics.get(key), (int, float)),
                     f"metrics.{key} must be a number")
        _require(0.0 <= metrics["acc"] <= 1.0, "metrics.acc must be in [0, 1]")
        _require(isinstance(score["score"], (int, float)) and score["score"] < PENALTY_SCORE,
                 "ok records need a finite score below the penalty sentinel")
    else:
        _require(metrics is None, "failed records must not carry metrics")
        _require(score["score"] == PENALTY_SCORE, "failed records carry the penalty score")


def history_header(seed: int, backend: str, budget: int, d: int, mode: str) -> str:
    return json.dumps({
        "type": "header", "format": HISTORY_FORMAT, "version": HISTORY_VERSION,
        "mode": mode, "seed": seed, "backend": backend, "budget": budget, "d": d,
    })


def read_history(path: str | Path) -> tuple[dict, list[CandidateRecord], int]:
    """Parse a history file; returns (header, records, corrupt-line count)."""
    header: dict = {}
    records: list[CandidateRecord] = []
    corrupt = 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
                if lineno == 1 and doc.get("type") == "header":
                    if doc.get("format") != HISTORY_FORMAT:
                        raise ValueError(f"not a {HISTORY_FORMAT} file")
                    header = doc
                    continue
                records.append(CandidateRecord.from_doc(doc))
            except (ValueError, KeyError, TypeError) as exc:
                corrupt += 1
                log.warning("%s:%d: skipping corrupt history line (%s)", path, lineno, exc)
    return header, records, corrupt
