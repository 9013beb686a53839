"""Space-filling point generators: Latin hypercube seeds and Sobol candidates."""

from __future__ import annotations

import warnings

import numpy as np
from scipy.stats import qmc


def lhs_init(n: int, d: int, rng_seed) -> np.ndarray:
    """n Latin-hypercube points in [0, 1]^d, one per stratum in each dimension.

    Each dimension independently permutes the n strata [i/n, (i+1)/n) and
    jitters uniformly inside them. `rng_seed` is any numpy seed material.
    """
    if n < 1 or d < 1:
        raise ValueError("lhs_init requires n >= 1 and d >= 1")
    rng = np.random.default_rng(rng_seed)
    jitter = rng.random((n, d))
    points = np.empty((n, d))
    for j in range(d):
        points[:, j] = (rng.permutation(n) + jitter[:, j]) / n
    return points


def sobol_points(d: int, n: int, skip: int = 1) -> np.ndarray:
    """First n points of the base-2 Sobol sequence in d dims, after `skip`.

    Unscrambled Joe-Kuo direction numbers; the default skip drops index 0,
    the all-zeros point.
    """
    if d < 1 or n < 1:
        raise ValueError("sobol_points requires d >= 1 and n >= 1")
    if d > qmc.Sobol.MAXDIM:
        raise ValueError(f"no Sobol direction numbers beyond {qmc.Sobol.MAXDIM} dims")
    engine = qmc.Sobol(d, scramble=False)
    if skip:
        engine.fast_forward(skip)
    with warnings.catch_warnings():
        # Arbitrary n is fine here; we are not relying on balance properties.
        warnings.simplefilter("ignore", UserWarning)
        return engine.random(n)


def scrambled_sobol(d: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Owen-scrambled Sobol points for candidate generation inside regions."""
    engine = qmc.Sobol(d, scramble=True, seed=int(rng.integers(2**63)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        return engine.random(n)
