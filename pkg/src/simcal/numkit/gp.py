"""Gaussian-process regression with a fixed squared-exponential kernel."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, cholesky, LinAlgError

from simcal.errors import ConditioningError, EmptyInputError, ShapeError

JITTER_LADDER = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)


def se_kernel(a: np.ndarray, b: np.ndarray, lengthscale: float, signal_var: float) -> np.ndarray:
    d2 = np.sum(a * a, 1)[:, None] + np.sum(b * b, 1)[None, :] - 2.0 * a @ b.T
    return signal_var * np.exp(-0.5 * np.maximum(d2, 0.0) / lengthscale**2)


@dataclass
class GpState:
    X: np.ndarray
    y: np.ndarray
    lengthscale: float = 0.2
    signal_var: float = 1.0
    noise_var: float = 1e-8
    _chol: np.ndarray | None = field(default=None, repr=False)
    _alpha: np.ndarray | None = field(default=None, repr=False)
    jitter: float = 0.0

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.y = np.asarray(self.y, dtype=float).reshape(-1)
        if self.X.shape[0] != self.y.shape[0]:
            raise ShapeError(f"{self.X.shape[0]} inputs but {self.y.shape[0]} targets")

    def add(self, x, y: float) -> "GpState":
        """Return a new state with one more observation."""
        X = np.vstack([self.X, np.asarray(x, dtype=float)[None]]) if self.X.size else np.asarray(x, dtype=float)[None]
        return GpState(X, np.append(self.y, y), self.lengthscale, self.signal_var, self.noise_var)

    def factorize(self) -> None:
        if self._chol is not None:
            return
        if self.y.size == 0:
            raise EmptyInputError("GP has no observations")
        K = se_kernel(self.X, self.X, self.lengthscale, self.signal_var)
        K[np.diag_indices_from(K)] += self.noise_var
        for jitter in JITTER_LADDER:
            try:
                L = cholesky(K + jitter * np.eye(K.shape[0]), lower=True)
            except LinAlgError:
                continue
            if np.all(np.isfinite(L)) and np.all(np.diag(L) > 0):
                self._chol, self.jitter = L, jitter
                self._alpha = cho_solve((L, True), self.y)
                return
        raise ConditioningError(f"kernel matrix not positive definite with jitter up to {JITTER_LADDER[-1]}")


def gp_posterior(gp: GpState, x_star) -> tuple:
    """Posterior mean and variance at one query point, or arrays for a batch of rows."""
    gp.factorize()
    xs = np.asarray(x_star, dtype=float)
    single = xs.ndim == 1
    xs = np.atleast_2d(xs)
    if xs.shape[1] != gp.X.shape[1]:
        raise ShapeError(f"query dim {xs.shape[1]} does not match GP input dim {gp.X.shape[1]}")
    k_star = se_kernel(xs, gp.X, gp.lengthscale, gp.signal_var)
    mu = k_star @ gp._alpha
    v = cho_solve((gp._chol, True), k_star.T)
    var = gp.signal_var - np.sum(k_star * v.T, axis=1)
    var = np.maximum(var, 0.0)
    if single:
        return float(mu[0]), float(var[0])
    return mu, var


def ucb(gp: GpState, x_star, kappa: float = 2.5) -> np.ndarray:
    mu, var = gp_posterior(gp, np.atleast_2d(x_star))
    return mu + kappa * np.sqrt(var)
