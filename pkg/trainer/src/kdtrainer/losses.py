"""Distillation loss and the selective orthogonality penalty."""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F


@dataclass(frozen=True)
class KDConfig:
    """Temperature-softened blending of hard-label and teacher losses."""

    temperature: float = 1.0
    alpha: float = 0.7

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")


def kd_loss(student_logits: torch.Tensor, teacher_logits: torch.Tensor,
            labels: torch.Tensor, cfg: KDConfig) -> torch.Tensor:
    """(1 - alpha) * CE(student, labels) + alpha * tau^2 * KL(p_t(tau) || p_s(tau)).

    The KL term is averaged over the batch; tau^2 keeps its gradient scale
    comparable to the hard-label term.
    """
    if student_logits.shape != teacher_logits.shape:
        raise ValueError(f"logit shapes differ: {tuple(student_logits.shape)} vs "
                         f"{tuple(teacher_logits.shape)}")
    if not (torch.isfinite(student_logits).all() and torch.isfinite(teacher_logits).all()):
        raise ValueError("non-finite logits")
    tau = cfg.temperature
    ce = F.cross_entropy(student_logits, labels)
    log_p_student = F.log_softmax(student_logits / tau, dim=1)
    p_teacher = F.softmax(teacher_logits / tau, dim=1)
    kl = (p_teacher * (torch.log(p_teacher.clamp_min(1e-30)) - log_p_student)).sum(dim=1)
    return (1.0 - cfg.alpha) * ce + cfg.alpha * tau * tau * kl.mean()


def orth_penalty(weights: list[torch.Tensor], lam: float) -> torch.Tensor:
    """(lam / |W|) * sum over W of ||W^T W - I_n||_F^2.

    Each entry is the 2-D view of a weight with rows as inputs: a 1x1
    convolution kernel appears as (C_in, C_out), a linear layer as
    (in_features, out_features).
    """
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    if not weights:
        if lam > 0:
            raise ValueError("orthogonality penalty requested but no target weights")
        return torch.tensor(0.0)
    total = None
    for w in weights:
        if w.dim() != 2:
            raise ValueError(f"expected 2-D weight views, got shape {tuple(w.shape)}")
        gram = w.T @ w
        eye = torch.eye(gram.shape[0], dtype=w.dtype, device=w.device)
        term = ((gram - eye) ** 2).sum()
        total = term if total is None else total + term
    return (lam / len(weights)) * total


def conv1x1_view(weight: torch.Tensor) -> torch.Tensor:
    """(C_out, C_in, 1, 1) kernel as the (C_in, C_out) matrix the penalty uses."""
    c_out, c_in = weight.shape[0], weight.shape[1]
    return weight.reshape(c_out, c_in).T


def linear_view(weight: torch.Tensor) -> torch.Tensor:
    """(out_features, in_features) as (in_features, out_features)."""
    return weight.T
