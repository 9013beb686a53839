"""Deterministic synthetic proxy dataset.

Ten classes of oriented sinusoidal gratings (five orientations at two spatial
frequencies), with random phase, small translations, per-channel phase
offsets, and heavy additive noise. Hard enough that capacity and training
budget both matter, cheap enough to regenerate on the fly from a seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

NUM_CLASSES = 10
RESOLUTION = 32
NOISE_SCALE = 2.5
DISTRACTOR_AMPLITUDE = 0.6

TRAIN_SIZE = 4000
VAL_SIZE = 1000
TRAIN_SEED = 20240
VAL_SEED = 20241


def _wave(label: int, res: int, rng: np.random.Generator) -> np.ndarray:
    angle = math.pi * (label % 5) / 5.0
    freq = 2.5 + 2.0 * (label // 5)
    ux, uy = math.cos(angle), math.sin(angle)
    dx, dy = rng.integers(-3, 4, size=2)
    phase = rng.uniform(0.0, 2.0 * math.pi)
    yy, xx = np.meshgrid(np.arange(res) + dy, np.arange(res) + dx, indexing="ij")
    arg = 2.0 * math.pi * freq * (ux * xx + uy * yy) / res
    return np.stack([np.sin(arg + phase + shift) for shift in (0.0, 2.1, 4.2)])


def _render(label: int, rng: np.random.Generator, res: int) -> np.ndarray:
    amplitude = rng.uniform(0.5, 1.0)
    img = amplitude * _wave(label, res, rng)
    distractor = int((label + rng.integers(1, NUM_CLASSES)) % NUM_CLASSES)
    img += DISTRACTOR_AMPLITUDE * amplitude * _wave(distractor, res, rng)
    img += NOISE_SCALE * rng.standard_normal(img.shape)
    return img.astype(np.float32)


def make_split(n: int, seed: int, res: int = RESOLUTION) -> tuple[torch.Tensor, torch.Tensor]:
    """n labelled images, classes balanced, fully determined by the seed."""
    rng = np.random.default_rng(seed)
    labels = rng.permutation(np.arange(n) % NUM_CLASSES)
    images = np.stack([_render(int(label), rng, res) for label in labels])
    images = (images - images.mean()) / (images.std() + 1e-8)
    return torch.from_numpy(images), torch.from_numpy(labels.astype(np.int64))


@dataclass
class ProxyDataset:
    """Training pool plus a disjoint validation split.

    The two splits come from independent seed streams; a per-request fraction
    of the pool is selected deterministically via `subsample`.
    """

    train_x: torch.Tensor
    train_y: torch.Tensor
    val_x: torch.Tensor
    val_y: torch.Tensor

    @classmethod
    def default(cls) -> "ProxyDataset":
        train_x, train_y = make_split(TRAIN_SIZE, TRAIN_SEED)
        val_x, val_y = make_split(VAL_SIZE, VAL_SEED)
        return cls(train_x, train_y, val_x, val_y)

    def subsample(self, fraction: float, seed: int) -> tuple[torch.Tensor, torch.Tensor]:
        if not 0.0 < fraction <= 1.0:
            raise ValueError("fraction must be in (0, 1]")
        n = max(1, int(round(fraction * len(self.train_x))))
        idx = np.random.default_rng(seed).permutation(len(self.train_x))[:n]
        idx = np.sort(idx)
        return self.train_x[idx], self.train_y[idx]
