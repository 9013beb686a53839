"""Distillation evaluation worker for the architecture search engine."""

from .data import ProxyDataset
from .losses import KDConfig, kd_loss, orth_penalty
from .metrics import confusion_metrics
from .model import build_model, param_counts
from .train import OrthConfig, train_proxy

__version__ = "0.1.0"
