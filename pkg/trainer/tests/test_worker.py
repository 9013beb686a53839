"""Worker protocol: handshake, robustness, one real training round trip."""

import io
import json

import pytest
import torch

from kdtrainer.data import ProxyDataset
from kdtrainer.losses import KDConfig
from kdtrainer.model import build_model
from kdtrainer.train import OrthConfig, train_proxy
from kdtrainer.worker import PROTOCOL_VERSION, serve

TINY_ARCH = {
    "stem": {"out_channels": 8, "kernel": 3, "stride": 2},
    "conv_slots": [
        {"kind": "fused_mbconv", "layers": 1, "kernel": 3, "se_ratio": 0.0,
         "skip": "none", "expansion": 1, "out_channels": 8, "stride": 1},
    ] + [
        {"kind": "fused_mbconv", "layers": 0, "kernel": 3, "se_ratio": 0.0,
         "skip": "none", "expansion": 1, "out_channels": 8, "stride": s}
        for s in (2, 1, 2, 1, 2, 1)
    ],
    "tail": {"depth": 0, "embed_dim": 48, "heads": 4, "mlp_ratio": 2},
    "head": {"hidden": 8, "num_classes": 10},
    "input_resolution": 32,
}


def run_session(lines: list[str]) -> list[dict]:
    stdin = io.StringIO("".join(line + "\n" for line in lines))
    stdout = io.StringIO()
    serve(stdin=stdin, stdout=stdout)
    return [json.loads(line) for line in stdout.getvalue().splitlines()]


def request_line(rid: int, epochs: int = 1, fraction: float = 0.05) -> str:
    return json.dumps({
        "id": rid,
        "arch": TINY_ARCH,
        "proxy": {"data_fraction": fraction, "epochs": epochs, "temperature": 1.0,
                  "alpha": 0.7, "orth_lambda": 1e-4, "seed": 11},
    })


class TestHandshake:
    def test_round_trip(self):
        replies = run_session([json.dumps({"hello": PROTOCOL_VERSION})])
        assert replies == [{"ready": True, "capabilities": ["train", "measure-latency"]}]

    def test_wrong_version_not_ready(self):
        replies = run_session([json.dumps({"hello": 99})])
        assert replies[0]["ready"] is False

    def test_garbage_handshake_not_ready(self):
        replies = run_session(["not json at all"])
        assert replies[0]["ready"] is False


class TestRequests:
    def test_real_request_round_trip(self):
        replies = run_session([json.dumps({"hello": PROTOCOL_VERSION}), request_line(5)])
        ready, result = replies
        assert ready["ready"] is True
        assert result["id"] == 5 and result["status"] == "ok"
        assert 0.0 <= result["top1"] <= 1.0
        assert result["measured_latency"] > 0.0
        assert result["params_convention"] > 0

    def test_malformed_request_fails_but_worker_survives(self):
        replies = run_session([
            json.dumps({"hello": PROTOCOL_VERSION}),
            "{{{ broken json",
            request_line(7),
        ])
        assert replies[1]["status"] == "failed" and replies[1]["id"] == -1
        assert replies[2]["status"] == "ok" and replies[2]["id"] == 7

    def test_bad_arch_fails_that_request_only(self):
        bad = json.dumps({"id": 3, "arch": {"stem": {}}, "proxy": {}})
        replies = run_session([json.dumps({"hello": PROTOCOL_VERSION}), bad,
                               request_line(4)])
        assert replies[1]["status"] == "failed" and replies[1]["id"] == 3
        assert replies[2]["status"] == "ok"

    def test_same_seed_same_result(self):
        a = run_session([json.dumps({"hello": PROTOCOL_VERSION}), request_line(1)])
        b = run_session([json.dumps({"hello": PROTOCOL_VERSION}), request_line(1)])
        assert a[1]["top1"] == b[1]["top1"]


class TestTrainProxy:
    def test_zero_epochs_is_chance_level(self):
        torch.manual_seed(0)
        model, _ = build_model(TINY_ARCH)
        data = ProxyDataset.default()
        acc = train_proxy(model, None, data, KDConfig(alpha=0.0), OrthConfig(0.0),
                          epochs=0, seed=0)
        assert abs(acc - 0.1) < 0.08

    def test_hard_label_mode_without_teacher(self):
        torch.manual_seed(0)
        model, _ = build_model(TINY_ARCH)
        data = ProxyDataset.default()
        acc = train_proxy(model, None, data, KDConfig(alpha=0.0), OrthConfig(0.0),
                          epochs=1, seed=0, data_fraction=0.05)
        assert 0.0 <= acc <= 1.0
