"""Secondary acceptance gate: trainer-side criteria, one pass/fail line each.

The cross-component checks import the search engine package; the end-to-end
criterion drives the real CLI with this trainer as the subprocess worker.
"""

import csv
import json
import math
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest
import torch

kdnas = pytest.importorskip("kdnas", reason="acceptance needs the search engine installed")
from scipy.stats import spearmanr  # noqa: E402

from kdnas.cli import main as kdnas_main  # noqa: E402
from kdnas.costs import profile  # noqa: E402
from kdnas.records import read_history, validate_record  # noqa: E402
from kdnas.space import default_space, random_arch  # noqa: E402

from kdtrainer.data import ProxyDataset
from kdtrainer.losses import KDConfig, kd_loss, orth_penalty
from kdtrainer.model import build_model
from kdtrainer.teacher import load_teacher
from kdtrainer.train import OrthConfig, train_proxy

REPO_ROOT = Path(__file__).resolve().parents[2]
SPACE_SMALL = REPO_ROOT / "configs" / "space_small.cfg"

# Frozen proxy-rank protocol: five distinct small-space candidates spanning
# ~20k..180k parameters, equal sample budgets per regime.
RANK_ARCH_SEEDS = [40, 31, 18, 49, 15]
RANK_TRAIN_SEEDS = [777, 778, 779, 780, 781]


@contextmanager
def criterion(name: str):
    try:
        yield
    except BaseException:
        print(f"FAIL  {name}")
        raise
    print(f"PASS  {name}")


def test_parameter_count_boundary():
    with criterion("trainer parameter count equals cost model on 20 archs, exact"):
        space = default_space()
        for seed in range(20):
            arch = random_arch(space, seed)
            doc = arch.to_dict()
            doc["input_resolution"] = space.input_resolution
            torch.manual_seed(0)
            _, counts = build_model(doc)
            assert counts["convention"] == profile(space, arch).params, f"seed {seed}"


def test_gradient_checks():
    with criterion("kd-loss and orth-penalty gradients within 1e-4 of differences"):
        torch.manual_seed(3)
        student = torch.randn(6, 5, dtype=torch.double, requires_grad=True)
        teacher = torch.randn(6, 5, dtype=torch.double)
        labels = torch.randint(0, 5, (6,))
        cfg = KDConfig(temperature=1.5, alpha=0.7)
        kd_loss(student, teacher, labels, cfg).backward()
        analytic = student.grad.clone()
        numeric = torch.zeros_like(student)
        eps = 1e-6
        with torch.no_grad():
            for i in range(student.shape[0]):
                for j in range(student.shape[1]):
                    for sign in (1.0, -1.0):
                        student[i, j] += sign * eps
                        numeric[i, j] += sign * float(
                            kd_loss(student, teacher, labels, cfg)) / (2 * eps)
                        student[i, j] -= sign * eps
        assert float((analytic - numeric).norm() / numeric.norm()) <= 1e-4

        w = torch.randn(5, 8, dtype=torch.double, requires_grad=True)
        orth_penalty([w], 0.7).backward()
        analytic = w.grad.clone()
        numeric = torch.zeros_like(w)
        with torch.no_grad():
            for i in range(w.shape[0]):
                for j in range(w.shape[1]):
                    for sign in (1.0, -1.0):
                        w[i, j] += sign * eps
                        numeric[i, j] += sign * float(orth_penalty([w], 0.7)) / (2 * eps)
                        w[i, j] -= sign * eps
        assert float((analytic - numeric).norm() / numeric.norm()) <= 1e-4


def test_kd_reductions():
    with criterion("alpha=0 reduces to CE; identical logits zero the KL term"):
        torch.manual_seed(4)
        student, teacher = torch.randn(10, 7), torch.randn(10, 7)
        labels = torch.randint(0, 7, (10,))
        ce = torch.nn.functional.cross_entropy(student, labels)
        reduced = kd_loss(student, teacher, labels, KDConfig(alpha=0.0))
        assert abs(float(reduced) - float(ce)) <= 1e-6
        kl_only = kd_loss(student, student.clone(), labels, KDConfig(alpha=1.0))
        assert abs(float(kl_only)) <= 1e-6


def test_orthogonality_descent_effect():
    with criterion("200 penalty-descent steps halve the orthogonality gap"):
        torch.manual_seed(9)
        w = (torch.randn(64, 128) * math.sqrt(2.0 / 64)).requires_grad_(True)
        optimizer = torch.optim.Adam([w], lr=1e-2)

        def gap():
            with torch.no_grad():
                return float(torch.linalg.norm(w.T @ w - torch.eye(128)))

        before = gap()
        for _ in range(200):
            optimizer.zero_grad()
            orth_penalty([w], lam=1.0).backward()
            optimizer.step()
        after = gap()
        assert after <= 0.5 * before, f"{before:.2f} -> {after:.2f}"


def test_proxy_rank_smoke():
    with criterion("10% and 100% data fractions rank candidates consistently"):
        t0 = time.time()
        from kdnas.config import load_space
        space = load_space(SPACE_SMALL)
        data = ProxyDataset.default()
        teacher = load_teacher()
        accs = {}
        for fraction, epochs in ((1.0, 1), (0.1, 10)):  # equal sample budgets
            row = []
            for arch_seed, train_seed in zip(RANK_ARCH_SEEDS, RANK_TRAIN_SEEDS):
                doc = random_arch(space, arch_seed).to_dict()
                doc["input_resolution"] = 32
                torch.manual_seed(train_seed)
                model, _ = build_model(doc)
                row.append(train_proxy(model, teacher, data, KDConfig(),
                                       OrthConfig(1e-4), epochs=epochs,
                                       seed=train_seed, data_fraction=fraction))
            accs[fraction] = row
        rho = spearmanr(accs[0.1], accs[1.0]).statistic
        elapsed = time.time() - t0
        assert rho > 0, f"spearman {rho} (10%: {accs[0.1]}, 100%: {accs[1.0]})"
        assert elapsed < 1800, f"took {elapsed:.0f}s"


def test_end_to_end_search_with_trainer_worker(tmp_path):
    with criterion("40-evaluation search over the wire completes and validates"):
        out = tmp_path / "run"
        cfg = tmp_path / "run.cfg"
        cfg.write_text(f"""
backend = subprocess
worker.command = {sys.executable} -m kdtrainer serve
worker.timeout = 600
budget = 40
seed = 0
space = {SPACE_SMALL}
out = {out}
optimizer.n_init = 4
optimizer.n_regions = 2
optimizer.batch_size = 4
optimizer.candidates_per_proposal = 64
teacher.params = 94314
teacher.flops = 5163530
teacher.latency = 0.0003
teacher.acc_target = 0.25
proxy.data_fraction = 0.25
proxy.epochs = 2
proxy.temperature = 1.0
proxy.alpha = 0.7
proxy.orth_lambda = 1e-4
""")
        assert kdnas_main(["search", str(cfg)]) == 0
        assert kdnas_main(["report", str(out / "history.jsonl")]) == 0

        with open(out / "history.jsonl") as fh:
            lines = fh.read().splitlines()
        assert json.loads(lines[0])["type"] == "header"
        records = lines[1:]
        assert len(records) == 40
        for line in records:
            validate_record(json.loads(line))

        _, parsed, corrupt = read_history(out / "history.jsonl")
        assert corrupt == 0
        ok = [r for r in parsed if r.status == "ok"]
        assert ok, "no successful evaluations"
        # worker-measured latency overrides the analytic proxy
        assert all(r.metrics.latency_student < 1.0 for r in ok)

        rows = list(csv.reader(open(out / "pareto.csv")))
        assert len(rows) >= 2, "pareto csv is empty"
