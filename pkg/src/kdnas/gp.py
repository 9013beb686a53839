"""Exact Gaussian-process regression with an ARD Matern-5/2 kernel.

Targets are standardized internally; hyperparameters (per-dimension
lengthscales, signal variance, noise variance) are set by maximizing the log
marginal likelihood with L-BFGS in log space, restarted from jittered
defaults. Everything is dense numpy/scipy: the optimizer only ever fits a few
hundred local observations per region, where exact inference is cheap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, cholesky, LinAlgError, solve_triangular
from scipy.optimize import minimize
from threadpoolctl import threadpool_limits

SQRT5 = np.sqrt(5.0)

LENGTHSCALE_BOUNDS = (0.005, 2.0)
SIGNAL_VAR_BOUNDS = (1e-3, 1e2)
NOISE_VAR_CEILING = 1.0
STD_FLOOR = 1e-8

_DEFAULT_LENGTHSCALE = 0.3
_DEFAULT_SIGNAL_VAR = 1.0
_DEFAULT_NOISE_VAR = 1e-4
_FAILED_NLL = 1e25


@dataclass
class GPModel:
    """A fitted GP: training data, kernel hyperparameters, cached factorization."""

    x_train: np.ndarray          # (n, d)
    y_raw: np.ndarray            # (n,) unstandardized targets
    y_mean: float
    y_std: float
    lengthscales: np.ndarray     # (d,)
    signal_var: float
    noise_var: float
    chol: np.ndarray             # lower Cholesky factor of K + noise * I
    alpha: np.ndarray            # (K + noise * I)^-1 y_standardized

    @property
    def noise_std(self) -> float:
        return float(np.sqrt(self.noise_var)) * self.y_std

    def _cross_kernel(self, x: np.ndarray) -> np.ndarray:
        return _matern52(_scaled_sqdist(x, self.x_train, self.lengthscales), self.signal_var)

    def predict(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and variance (unstandardized) at query points."""
        x = np.atleast_2d(x)
        k_star = self._cross_kernel(x)
        mean_std = k_star @ self.alpha
        v = solve_triangular(self.chol, k_star.T, lower=True)
        var_std = np.maximum(self.signal_var - np.sum(v * v, axis=0), 0.0)
        return self.y_mean + self.y_std * mean_std, (self.y_std ** 2) * var_std

    def sample_joint(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """One draw from the joint posterior over the query points."""
        x = np.atleast_2d(x)
        k_star = self._cross_kernel(x)
        k_xx = _matern52(_scaled_sqdist(x, x, self.lengthscales), self.signal_var)
        v = solve_triangular(self.chol, k_star.T, lower=True)
        cov = k_xx - v.T @ v
        mean = self.y_mean + self.y_std * (k_star @ self.alpha)
        z = rng.standard_normal(len(x))
        jitter = 1e-10
        while jitter <= 1e-3:
            try:
                factor = cholesky(cov + jitter * np.eye(len(x)), lower=True)
                return mean + self.y_std * (factor @ z)
            except LinAlgError:
                jitter *= 10.0
        # Covariance is numerically degenerate; fall back to independent draws.
        std = np.sqrt(np.maximum(np.diag(cov), 0.0))
        return mean + self.y_std * std * z


def _scaled_sqdist(xa: np.ndarray, xb: np.ndarray, lengthscales: np.ndarray) -> np.ndarray:
    a = xa / lengthscales
    b = xb / lengthscales
    sq = (np.sum(a * a, axis=1)[:, None] + np.sum(b * b, axis=1)[None, :]
          - 2.0 * (a @ b.T))
    return np.maximum(sq, 0.0)


def _matern52(sqdist: np.ndarray, signal_var: float) -> np.ndarray:
    r = np.sqrt(sqdist)
    return signal_var * (1.0 + SQRT5 * r + (5.0 / 3.0) * sqdist) * np.exp(-SQRT5 * r)


def dedupe_observations(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Collapse exactly duplicated inputs, keeping the best (lowest) value."""
    best: dict[bytes, int] = {}
    for i, row in enumerate(x):
        key = row.tobytes()
        j = best.get(key)
        if j is None or y[i] < y[j]:
            best[key] = i
    if len(best) == len(x):
        return x, y
    keep = sorted(best.values())
    return x[keep], y[keep]


def _neg_lml_and_grad(theta: np.ndarray, d: int, n: int, y: np.ndarray,
                      sqdist_flat: np.ndarray) -> tuple[float, np.ndarray]:
    """Negative log marginal likelihood and its gradient in log-parameters.

    `sqdist_flat` holds the per-dimension pairwise squared distances as a
    (d, n*n) matrix so the scaled distances and the lengthscale gradient are
    single GEMV calls.
    """
    lengthscales = np.exp(theta[:d])
    signal_var = np.exp(theta[d])
    noise_var = np.exp(theta[d + 1])

    inv_sq = 1.0 / (lengthscales ** 2)
    s = (inv_sq @ sqdist_flat).reshape(n, n)
    k = _matern52(s, signal_var)
    try:
        factor = cho_factor(k + noise_var * np.eye(n), lower=True)
    except LinAlgError:
        return _FAILED_NLL, np.zeros_like(theta)
    alpha = cho_solve(factor, y)
    nll = 0.5 * float(y @ alpha) + float(np.sum(np.log(np.diag(factor[0])))) \
        + 0.5 * n * np.log(2.0 * np.pi)

    # dL/dtheta_j = 0.5 tr((alpha alpha^T - K^-1) dK/dtheta_j), in log space.
    k_inv = cho_solve(factor, np.eye(n))
    a = np.outer(alpha, alpha) - k_inv
    r = np.sqrt(s)
    # dK/d(s) = -(5/6) sv (1 + sqrt5 r) exp(-sqrt5 r); ds/dlog(l_i) = -2 s_i
    dk_ds = -(5.0 / 6.0) * signal_var * (1.0 + SQRT5 * r) * np.exp(-SQRT5 * r)
    m = a * dk_ds
    grad = np.empty_like(theta)
    grad[:d] = (sqdist_flat @ m.ravel()) * inv_sq
    grad[d] = -0.5 * float(np.sum(a * k))
    grad[d + 1] = -0.5 * noise_var * float(np.trace(a))
    return nll, grad


def fit_gp(x: np.ndarray, y: np.ndarray, noise_floor: float = 1e-8,
           restarts: int = 4, max_iter: int = 50,
           rng: np.random.Generator | None = None,
           fix_noise: bool = False) -> GPModel:
    """Fit kernel hyperparameters by multi-restart marginal-likelihood ascent.

    With `fix_noise` the noise variance is pinned at `noise_floor` (exact
    interpolation of noise-free data) instead of being learned. Duplicated
    inputs are collapsed first and a singular final factorization escalates
    the noise level.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float)
    if len(x) < 2:
        raise ValueError("gp fit requires at least 2 observations")
    if not np.all(np.isfinite(y)):
        raise ValueError("non-finite observation value")
    x, y = dedupe_observations(x, y)
    n, d = x.shape
    rng = rng if rng is not None else np.random.default_rng(0)

    y_mean = float(np.mean(y))
    y_std = max(float(np.std(y)), STD_FLOOR)
    y_standardized = (y - y_mean) / y_std

    diffs = x[:, None, :] - x[None, :, :]
    sqdist_flat = np.ascontiguousarray(np.moveaxis(diffs ** 2, 2, 0).reshape(d, n * n))

    noise_bounds = (np.log(noise_floor),
                    np.log(noise_floor) if fix_noise else np.log(NOISE_VAR_CEILING))
    bounds = ([(np.log(LENGTHSCALE_BOUNDS[0]), np.log(LENGTHSCALE_BOUNDS[1]))] * d
              + [(np.log(SIGNAL_VAR_BOUNDS[0]), np.log(SIGNAL_VAR_BOUNDS[1]))]
              + [noise_bounds])

    def start_theta(i: int) -> np.ndarray:
        theta = np.concatenate([
            np.full(d, np.log(_DEFAULT_LENGTHSCALE)),
            [np.log(_DEFAULT_SIGNAL_VAR)],
            [np.log(max(_DEFAULT_NOISE_VAR, noise_floor))],
        ])
        if i > 0:
            theta = theta + 0.5 * rng.standard_normal(theta.shape)
        return np.clip(theta, [b[0] for b in bounds], [b[1] for b in bounds])

    best_theta, best_nll = None, np.inf
    # Threaded BLAS is counterproductive at these matrix sizes.
    with threadpool_limits(limits=1):
        for i in range(max(restarts, 1)):
            res = minimize(_neg_lml_and_grad, start_theta(i), jac=True, method="L-BFGS-B",
                           bounds=bounds,
                           options={"maxiter": max_iter, "ftol": 1e-6, "gtol": 1e-3},
                           args=(d, n, y_standardized, sqdist_flat))
            if res.fun < best_nll:
                best_nll, best_theta = res.fun, res.x
    if best_theta is None or best_nll >= _FAILED_NLL:
        best_theta = start_theta(0)

    lengthscales = np.exp(best_theta[:d])
    signal_var = float(np.exp(best_theta[d]))
    noise_var = float(np.exp(best_theta[d + 1]))

    k = _matern52(((1.0 / lengthscales**2) @ sqdist_flat).reshape(n, n), signal_var)
    for attempt in range(4):
        try:
            factor = cholesky(k + noise_var * np.eye(n), lower=True)
            break
        except LinAlgError:
            if attempt == 3:
                raise
            noise_var *= 10.0
    alpha = cho_solve((factor, True), y_standardized)

    return GPModel(x_train=x, y_raw=y, y_mean=y_mean, y_std=y_std,
                   lengthscales=lengthscales, signal_var=signal_var, noise_var=noise_var,
                   chol=factor, alpha=alpha)
