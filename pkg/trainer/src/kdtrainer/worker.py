"""The evaluation worker: line-delimited JSON over stdin/stdout.

Handshake: the engine sends {"hello": <version>}; the worker answers
{"ready": true, "capabilities": [...]}. Each following request line carries
an id, an architecture document, and proxy-task settings; the worker replies
with one result line per request and never exits on a bad request.
"""

from __future__ import annotations

import json
import logging
import sys
import time

import torch

from .data import ProxyDataset
from .losses import KDConfig
from .model import build_model
from .teacher import load_teacher
from .train import OrthConfig, TrainingDiverged, train_proxy

log = logging.getLogger(__name__)

PROTOCOL_VERSION = 1
CAPABILITIES = ["train", "measure-latency"]

_LATENCY_REPEATS = 12


def measure_latency(model: torch.nn.Module, input_res: int) -> float:
    """Median single-image forward time in seconds."""
    model.eval()
    x = torch.zeros(1, 3, input_res, input_res)
    times = []
    with torch.no_grad():
        for _ in range(_LATENCY_REPEATS):
            start = time.perf_counter()
            model(x)
            times.append(time.perf_counter() - start)
    times.sort()
    return times[len(times) // 2]


class Worker:
    def __init__(self):
        self.data = ProxyDataset.default()
        try:
            self.teacher = load_teacher()
        except (OSError, RuntimeError) as exc:
            log.warning("no teacher checkpoint (%s); running in hard-label mode", exc)
            self.teacher = None

    def handle(self, request: dict) -> dict:
        arch = request["arch"]
        proxy = request["proxy"]
        seed = int(proxy["seed"])
        torch.manual_seed(seed)

        model, counts = build_model(arch)
        kd = KDConfig(temperature=float(proxy["temperature"]), alpha=float(proxy["alpha"]))
        orth = OrthConfig(lam=float(proxy["orth_lambda"]))
        teacher = self.teacher
        if teacher is None:
            kd = KDConfig(temperature=kd.temperature, alpha=0.0)
        acc = train_proxy(model, teacher, self.data, kd, orth,
                          epochs=int(proxy["epochs"]), seed=seed,
                          data_fraction=float(proxy["data_fraction"]))
        latency = measure_latency(model, int(arch.get("input_resolution", 32)))
        return {
            "id": request["id"],
            "status": "ok",
            "top1": acc,
            "measured_latency": latency,
            "params_convention": counts["convention"],
            "params_full": counts["full"],
        }


def serve(stdin=None, stdout=None) -> int:
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout

    def emit(doc: dict) -> None:
        stdout.write(json.dumps(doc) + "\n")
        stdout.flush()

    hello_line = stdin.readline()
    try:
        hello = json.loads(hello_line)
        version = hello["hello"]
    except (json.JSONDecodeError, TypeError, KeyError):
        emit({"ready": False, "error": f"bad handshake: {hello_line.strip()!r}"})
        return 1
    if version != PROTOCOL_VERSION:
        emit({"ready": False, "error": f"unsupported protocol version {version}"})
        return 1

    worker = Worker()
    emit({"ready": True, "capabilities": CAPABILITIES})

    for line in stdin:
        if not line.strip():
            continue
        request_id = -1
        try:
            request = json.loads(line)
            request_id = int(request.get("id", -1))
            emit(worker.handle(request))
        except TrainingDiverged as exc:
            emit({"id": request_id, "status": "failed", "error": str(exc)})
        except Exception as exc:  # a bad request must never kill the worker
            log.exception("request failed")
            emit({"id": request_id, "status": "failed",
                  "error": f"{type(exc).__name__}: {exc}"})
    return 0
