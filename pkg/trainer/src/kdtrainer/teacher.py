"""The shipped reference teacher: a small CNN pretrained on the proxy data.

The checkpoint lives in the package assets; `kdtrainer train-teacher`
regenerates it deterministically.
"""

from __future__ import annotations

import importlib.resources
import logging
from pathlib import Path

import torch
from torch import nn

from .data import NUM_CLASSES, ProxyDataset

log = logging.getLogger(__name__)

CHECKPOINT_NAME = "teacher.pt"
TEACHER_SEED = 7
TEACHER_EPOCHS = 8
TEACHER_BATCH = 128
TEACHER_LR = 2e-3


class TeacherNet(nn.Module):
    def __init__(self, num_classes: int = NUM_CLASSES):
        super().__init__()
        def block(c_in, c_out):
            return nn.Sequential(
                nn.Conv2d(c_in, c_out, 3, stride=2, padding=1, bias=False),
                nn.BatchNorm2d(c_out), nn.SiLU())
        self.features = nn.Sequential(block(3, 32), block(32, 64), block(64, 128))
        self.head = nn.Linear(128, num_classes)

    def forward(self, x):
        return self.head(self.features(x).mean(dim=(2, 3)))


def checkpoint_path() -> Path:
    return Path(importlib.resources.files("kdtrainer") / "assets" / CHECKPOINT_NAME)


def load_teacher() -> TeacherNet:
    model = TeacherNet()
    state = torch.load(checkpoint_path(), map_location="cpu", weights_only=True)
    model.load_state_dict(state)
    model.eval()
    return model


def evaluate(model: nn.Module, x: torch.Tensor, y: torch.Tensor,
             batch: int = 256) -> float:
    model.eval()
    hits = 0
    with torch.no_grad():
        for i in range(0, len(x), batch):
            hits += int((model(x[i:i + batch]).argmax(dim=1) == y[i:i + batch]).sum())
    return hits / len(x)


def train_teacher(out_path: Path | None = None) -> float:
    """Train the reference teacher from scratch and save its checkpoint."""
    torch.manual_seed(TEACHER_SEED)
    data = ProxyDataset.default()
    model = TeacherNet()
    optimizer = torch.optim.Adam(model.parameters(), lr=TEACHER_LR)
    n = len(data.train_x)
    for epoch in range(TEACHER_EPOCHS):
        model.train()
        order = torch.randperm(n)
        for i in range(0, n, TEACHER_BATCH):
            idx = order[i:i + TEACHER_BATCH]
            optimizer.zero_grad()
            loss = nn.functional.cross_entropy(model(data.train_x[idx]), data.train_y[idx])
            loss.backward()
            optimizer.step()
        acc = evaluate(model, data.val_x, data.val_y)
        log.info("teacher epoch %d: val top-1 %.3f", epoch + 1, acc)
    out_path = out_path if out_path is not None else checkpoint_path()
    out_path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(model.state_dict(), out_path)
    final = evaluate(model, data.val_x, data.val_y)
    log.info("saved teacher to %s (val top-1 %.3f)", out_path, final)
    return final
