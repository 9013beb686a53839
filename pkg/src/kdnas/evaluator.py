"""Turning proposed points into metrics and scores.

Two accuracy backends share one interface: a deterministic synthetic oracle
(a Gaussian bump over the hypercube, making the whole engine self-contained),
and an external trainer worker driven over a line-delimited JSON protocol on
its stdin/stdout. Resources always come from the analytic cost model; a
worker-measured latency, when reported, overrides the proxy.
"""

from __future__ import annotations

import json
import logging
import queue
import shlex
import subprocess
import threading
from dataclasses import dataclass

import numpy as np

from .config import ProxyConfig
from .costs import LatencyModelConfig, profile
from .objective import Metrics, ScoreBreakdown, TeacherBudget, kd_score
from .space import ArchitectureSpec, SearchSpaceDef

log = logging.getLogger(__name__)

PROTOCOL_VERSION = 1

# Recorded for failed/timeout candidates; such records never reach the GP.
PENALTY_SCORE = 1e30

# Default accuracy target for self-contained synthetic runs: the oracle's
# far-field plateau, so every candidate clears the target and the score stays
# in its smooth regime.
SYNTHETIC_ACC_FLOOR = 0.50


class WorkerError(RuntimeError):
    """The evaluation worker could not be started or kept alive."""


def synthetic_optimum(d: int) -> np.ndarray:
    """The oracle's fixed peak location: the golden-ratio lattice point."""
    ratio = (np.sqrt(5.0) - 1.0) / 2.0
    return np.mod((np.arange(1, d + 1)) * ratio, 1.0)


def synthetic_accuracy(point: np.ndarray) -> float:
    """Deterministic stand-in for proxy-task accuracy, range (0.50, 0.90]."""
    x = np.asarray(point, dtype=float)
    if np.any(np.isnan(x)) or np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError("synthetic oracle requires a point in [0, 1]^d")
    target = synthetic_optimum(len(x))
    sqdist = float(np.sum((x - target) ** 2))
    return 0.50 + 0.40 * np.exp(-sqdist / (0.1 * len(x)))


@dataclass(frozen=True)
class EvalRequest:
    """One candidate to evaluate. `point` is engine-side context for the
    synthetic backend and never crosses the wire."""

    id: int
    arch: ArchitectureSpec
    proxy: ProxyConfig
    proxy_seed: int
    input_resolution: int
    point: np.ndarray | None = None

    def to_wire(self) -> dict:
        arch_doc = self.arch.to_dict()
        arch_doc["input_resolution"] = self.input_resolution
        return {
            "id": self.id,
            "arch": arch_doc,
            "proxy": {
                "data_fraction": self.proxy.data_fraction,
                "epochs": self.proxy.epochs,
                "temperature": self.proxy.temperature,
                "alpha": self.proxy.alpha,
                "orth_lambda": self.proxy.orth_lambda,
                "seed": self.proxy_seed,
            },
        }


@dataclass(frozen=True)
class EvalResult:
    id: int
    status: str  # ok | failed | timeout
    top1: float | None = None
    measured_latency: float | None = None
    error: str = ""

    def __post_init__(self):
        if (self.status == "ok") != (self.top1 is not None):
            raise ValueError("top1 must be present exactly when status is ok")


class SyntheticBackend:
    """In-process oracle; accuracy depends only on the encoded point."""

    name = "synthetic"

    def evaluate(self, req: EvalRequest) -> EvalResult:
        if req.point is None:
            raise ValueError("synthetic backend needs the encoded point")
        return EvalResult(id=req.id, status="ok", top1=synthetic_accuracy(req.point))

    def close(self) -> None:
        pass


class SubprocessBackend:
    """Client side of the worker wire protocol.

    One worker process, one in-flight request at a time. A worker that exits
    mid-request fails that request and is respawned, at most `max_respawns`
    times per run; a timed-out worker is killed and respawned likewise.
    """

    name = "subprocess"

    def __init__(self, command: str, timeout: float = 3600.0, max_respawns: int = 3):
        if not command.strip():
            raise WorkerError("empty worker command")
        self.command = command
        self.timeout = timeout
        self.max_respawns = max_respawns
        self.respawns = 0
        self.proc: subprocess.Popen | None = None
        self._lines: queue.Queue = queue.Queue()
        self._spawn()

    def _spawn(self) -> None:
        try:
            self.proc = subprocess.Popen(
                shlex.split(self.command), stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                text=True, bufsize=1)
        except OSError as exc:
            raise WorkerError(f"cannot launch worker {self.command!r}: {exc}") from None
        self._lines = queue.Queue()
        thread = threading.Thread(target=self._pump, args=(self.proc,), daemon=True)
        thread.start()
        self._handshake()

    def _pump(self, proc: subprocess.Popen) -> None:
        for line in proc.stdout:
            self._lines.put(line)
        self._lines.put(None)  # EOF sentinel

    def _handshake(self) -> None:
        reply = self._roundtrip({"hello": PROTOCOL_VERSION})
        if reply is None or not reply.get("ready"):
            raise WorkerError(f"worker handshake failed: {reply!r}")
        log.info("worker ready, capabilities=%s", reply.get("capabilities", []))

    def _roundtrip(self, message: dict) -> dict | None:
        """Send one line, read one line; None means timeout or worker exit."""
        assert self.proc is not None
        try:
            self.proc.stdin.write(json.dumps(message) + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError):
            return None
        try:
            line = self._lines.get(timeout=self.timeout)
        except queue.Empty:
            return None
        if line is None:
            return None
        try:
            return json.loads(line)
        except json.JSONDecodeError:
            return {"malformed": line.strip()}

    def _respawn_after(self, reason: str) -> None:
        log.warning("worker %s; respawning (%d/%d)", reason, self.respawns + 1,
                    self.max_respawns)
        self._kill()
        self.respawns += 1
        if self.respawns > self.max_respawns:
            raise WorkerError(f"worker {reason}; respawn limit reached")
        self._spawn()

    def evaluate(self, req: EvalRequest) -> EvalResult:
        reply = self._roundtrip(req.to_wire())
        if reply is None:
            alive = self.proc is not None and self.proc.poll() is None
            status = "timeout" if alive else "failed"
            self._respawn_after("timed out" if alive else "exited mid-request")
            return EvalResult(id=req.id, status=status, error=f"worker {status}")
        if "malformed" in reply or reply.get("id") != req.id or \
                reply.get("status") not in ("ok", "failed", "timeout"):
            return EvalResult(id=req.id, status="failed",
                              error=f"malformed worker reply: {reply!r}")
        if reply["status"] != "ok":
            return EvalResult(id=req.id, status=reply["status"],
                              error=str(reply.get("error", "")))
        top1 = reply.get("top1")
        if not isinstance(top1, (int, float)) or not 0.0 <= top1 <= 1.0:
            return EvalResult(id=req.id, status="failed",
                              error=f"worker reported invalid top1: {top1!r}")
        latency = reply.get("measured_latency")
        return EvalResult(id=req.id, status="ok", top1=float(top1),
                          measured_latency=float(latency) if latency is not None else None)

    def _kill(self) -> None:
        if self.proc is not None and self.proc.poll() is None:
            self.proc.kill()
            self.proc.wait()

    def close(self) -> None:
        if self.proc is not None and self.proc.poll() is None:
            try:
                self.proc.stdin.close()
                self.proc.wait(timeout=5)
            except (OSError, subprocess.TimeoutExpired):
                self._kill()


@dataclass(frozen=True)
class EvalOutcome:
    result: EvalResult
    metrics: Metrics | None
    score: ScoreBreakdown | None


class Evaluator:
    """Combines the cost model, an accuracy backend, and the score."""

    def __init__(self, space: SearchSpaceDef, backend, budget: TeacherBudget,
                 latency: LatencyModelConfig | None = None, epsilon: float = 0.01):
        self.space = space
        self.backend = backend
        self.budget = budget
        self.latency = latency if latency is not None else LatencyModelConfig()
        self.epsilon = epsilon
        self._seen_ids: set[int] = set()

    def evaluate(self, req: EvalRequest) -> EvalOutcome:
        if req.id in self._seen_ids:
            raise ValueError(f"request id {req.id} reused within this run")
        self._seen_ids.add(req.id)

        resources = profile(self.space, req.arch, self.latency)
        result = self.backend.evaluate(req)
        if result.status != "ok":
            return EvalOutcome(result=result, metrics=None, score=None)

        latency = result.measured_latency if result.measured_latency is not None \
            else resources.latency_proxy
        metrics = Metrics(acc_student=result.top1, np_student=resources.params,
                          flops_student=resources.flops, latency_student=latency)
        breakdown = kd_score(metrics, self.budget, self.epsilon)
        return EvalOutcome(result=result, metrics=metrics, score=breakdown)

    def close(self) -> None:
        self.backend.close()


def default_synthetic_budget(space: SearchSpaceDef,
                             latency: LatencyModelConfig | None = None) -> TeacherBudget:
    """Teacher budget for self-contained runs: the space's mid-point network.

    Resource ratios then straddle 1 across the space, and the accuracy target
    sits at the synthetic oracle's plateau.
    """
    from .space import decode, dimensionality

    mid = decode(space, np.full(dimensionality(space), 0.5))
    resources = profile(space, mid, latency)
    return TeacherBudget(np_teacher=resources.params, flops_teacher=resources.flops,
                         latency_teacher=resources.latency_proxy,
                         acc_target=SYNTHETIC_ACC_FLOOR)
