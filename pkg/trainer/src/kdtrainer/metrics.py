"""Output-distribution comparison between two models: agreement and divergence."""

from __future__ import annotations

import numpy as np

ROW_SUM_TOLERANCE = 1e-6


def confusion_metrics(probs_a: np.ndarray, probs_b: np.ndarray) -> dict[str, float]:
    """Top-1 matching ratio and mean row-wise KL(a || b).

    Rows must be probability vectors; zero entries contribute nothing where
    p is zero and infinity where p > 0 meets q = 0, as the divergence demands.
    """
    a = np.asarray(probs_a, dtype=float)
    b = np.asarray(probs_b, dtype=float)
    if a.shape != b.shape or a.ndim != 2:
        raise ValueError(f"need matching 2-D shapes, got {a.shape} and {b.shape}")
    for name, m in (("a", a), ("b", b)):
        if np.any(m < 0) or np.any(np.abs(m.sum(axis=1) - 1.0) > ROW_SUM_TOLERANCE):
            raise ValueError(f"rows of {name} are not normalized probability vectors")

    match_ratio = float(np.mean(a.argmax(axis=1) == b.argmax(axis=1)))
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(a > 0, a * (np.log(a) - np.log(b)), 0.0)
    kl = float(np.mean(terms.sum(axis=1)))
    return {"match_ratio": match_ratio, "kl": kl}
