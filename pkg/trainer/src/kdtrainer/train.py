"""Proxy-task training: short distillation runs that score one candidate."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .data import ProxyDataset
from .losses import KDConfig, kd_loss, orth_penalty
from .model import StudentNet

log = logging.getLogger(__name__)

BATCH_SIZE = 32
BASE_LR = 2e-3


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; the candidate is reported as failed."""


@dataclass(frozen=True)
class OrthConfig:
    """Penalty strength; targets are fixed by rule: every 1x1 convolution
    kernel and Transformer FFN weight matrix, nothing else."""

    lam: float = 1e-4

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")


def _lr_at(step: int, total_steps: int, warmup_steps: int) -> float:
    if warmup_steps > 0 and step < warmup_steps:
        return BASE_LR * (step + 1) / warmup_steps
    if total_steps <= warmup_steps:
        return BASE_LR
    progress = (step - warmup_steps) / (total_steps - warmup_steps)
    return BASE_LR * 0.5 * (1.0 + math.cos(math.pi * progress))


def top1(model: nn.Module, x: torch.Tensor, y: torch.Tensor, batch: int = 256) -> float:
    model.eval()
    hits = 0
    with torch.no_grad():
        for i in range(0, len(x), batch):
            hits += int((model(x[i:i + batch]).argmax(dim=1) == y[i:i + batch]).sum())
    return hits / len(x)


def train_proxy(model: StudentNet, teacher: nn.Module | None, data: ProxyDataset,
                kd: KDConfig, orth: OrthConfig, epochs: int, seed: int,
                data_fraction: float = 1.0) -> float:
    """Distill for a few epochs on a data fraction; returns proxy-val top-1.

    The first two epochs warm the learning rate up linearly (fewer when the
    run is shorter than three epochs), then cosine decay. Without a teacher
    the KD term is dropped (hard labels only).
    """
    if epochs < 0:
        raise ValueError("epochs must be >= 0")
    x, y = data.subsample(data_fraction, seed)
    if epochs == 0:
        return top1(model, data.val_x, data.val_y)

    if teacher is not None:
        teacher.eval()
    orth_views = model.orth_weight_views()
    use_orth = orth.lam > 0 and orth_views

    rng = np.random.default_rng(seed)
    optimizer = torch.optim.Adam(model.parameters(), lr=BASE_LR)
    steps_per_epoch = math.ceil(len(x) / BATCH_SIZE)
    total_steps = epochs * steps_per_epoch
    warmup_steps = min(2, max(0, epochs - 1)) * steps_per_epoch

    step = 0
    for _ in range(epochs):
        model.train()
        order = rng.permutation(len(x))
        for i in range(0, len(x), BATCH_SIZE):
            idx = order[i:i + BATCH_SIZE]
            xb, yb = x[idx], y[idx]
            lr = _lr_at(step, total_steps, warmup_steps)
            for group in optimizer.param_groups:
                group["lr"] = lr
            optimizer.zero_grad()
            logits = model(xb)
            if teacher is not None:
                with torch.no_grad():
                    teacher_logits = teacher(xb)
                loss = kd_loss(logits, teacher_logits, yb, kd)
            else:
                loss = nn.functional.cross_entropy(logits, yb)
            if use_orth:
                loss = loss + orth_penalty(model.orth_weight_views(), orth.lam)
            if not torch.isfinite(loss):
                raise TrainingDiverged(f"loss became {float(loss)} at step {step}")
            loss.backward()
            optimizer.step()
            step += 1
    return top1(model, data.val_x, data.val_y)
