"""Diagonal Gaussian mixtures and the mixture-density network head that produces them."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from scipy.special import logsumexp

from simcal.errors import DomainError, ShapeError
from simcal.numkit.mlp import Mlp

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True, eq=False)
class MixtureDensity:
    """``K`` diagonal Gaussian components over ``R^N``."""

    weights: np.ndarray
    means: np.ndarray
    stds: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        mu = np.atleast_2d(np.asarray(self.means, dtype=float))
        sd = np.atleast_2d(np.asarray(self.stds, dtype=float))
        if mu.shape != sd.shape or mu.shape[0] != w.shape[0]:
            raise ShapeError(f"weights {w.shape}, means {mu.shape} and stds {sd.shape} disagree")
        if np.any(w < 0) or not np.isclose(w.sum(), 1.0, atol=1e-9):
            raise DomainError(f"mixture weights must be non-negative and sum to 1, got {w}")
        if not np.all(sd > 0):
            raise DomainError("component standard deviations must be strictly positive")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "stds", sd)

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def mean(self) -> np.ndarray:
        return self.weights @ self.means

    def covariance(self) -> np.ndarray:
        """Covariance of the full mixture (law of total variance)."""
        m = self.mean()
        cov = np.zeros((self.dim, self.dim))
        for w, mu, sd in zip(self.weights, self.means, self.stds):
            d = mu - m
            cov += w * (np.diag(sd**2) + np.outer(d, d))
        return cov


def mdn_log_density(mix: MixtureDensity, theta) -> np.ndarray:
    x = np.atleast_2d(np.asarray(theta, dtype=float))
    if x.shape[1] != mix.dim:
        raise ShapeError(f"theta dim {x.shape[1]} does not match mixture dim {mix.dim}")
    z = (x[:, None, :] - mix.means[None]) / mix.stds[None]
    comp = -0.5 * np.sum(z * z, axis=2) - np.sum(np.log(mix.stds), axis=1)[None] - 0.5 * mix.dim * LOG_2PI
    with np.errstate(divide="ignore"):
        logw = np.log(mix.weights)
    return logsumexp(comp + logw[None], axis=1)


def mdn_nll(mix: MixtureDensity, theta) -> float:
    """Negative log density of one point under the mixture."""
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 1:
        raise ShapeError("mdn_nll takes a single parameter vector")
    return float(-mdn_log_density(mix, theta)[0])


def mdn_sample(mix: MixtureDensity, n: int, seed=0) -> np.ndarray:
    """Ancestral samples clamped to the unit cube, shape ``(n, N)``."""
    if n < 1:
        raise ValueError("need n >= 1 samples")
    rng = np.random.default_rng(seed)
    comp = rng.choice(mix.n_components, size=n, p=mix.weights)
    eps = rng.standard_normal((n, mix.dim))
    return np.clip(mix.means[comp] + mix.stds[comp] * eps, 0.0, 1.0)


class MdnHead:
    """Mlp whose output parameterizes a ``K``-component diagonal mixture over ``R^N``.

    Output layout: ``K`` weight logits, ``K*N`` means, ``K*N`` log standard deviations.
    """

    def __init__(self, in_dim: int, out_dim: int, hidden=(64, 64), n_components: int = 5, seed: int = 0,
                 min_log_std: float = -7.0):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.n_components = n_components
        self.min_log_std = min_log_std
        k, n = n_components, out_dim
        self.net = Mlp([in_dim, *hidden, k + 2 * k * n], activation="tanh", seed=seed)
        with torch.no_grad():
            # spread initial component means over the unit cube
            gen = torch.Generator().manual_seed(seed + 1)
            self.net.params[-1][k : k + k * n] = torch.rand(k * n, generator=gen, dtype=torch.float64)
            self.net.params[-1][k + k * n :] = math.log(0.3)
            self.net.params[-2][k:] *= 0.1

    def split(self, out: torch.Tensor):
        k, n = self.n_components, self.out_dim
        logits = out[..., :k]
        means = out[..., k : k + k * n].reshape(*out.shape[:-1], k, n)
        log_std = out[..., k + k * n :].reshape(*out.shape[:-1], k, n)
        log_std = self.min_log_std + torch.nn.functional.softplus(log_std - self.min_log_std)
        return torch.log_softmax(logits, dim=-1), means, log_std

    def nll(self, params, x: torch.Tensor, theta: torch.Tensor) -> torch.Tensor:
        """Mean negative log-likelihood of targets ``theta (B, N)`` given inputs ``x (B, D)``."""
        log_w, means, log_std = self.split(self.net.forward(x, params))
        z = (theta[:, None, :] - means) / torch.exp(log_std)
        comp = -0.5 * (z * z).sum(-1) - log_std.sum(-1) - 0.5 * self.out_dim * LOG_2PI
        return -torch.logsumexp(comp + log_w, dim=-1).mean()

    def mixture(self, x) -> MixtureDensity:
        with torch.no_grad():
            log_w, means, log_std = self.split(self.net.forward(torch.as_tensor(np.asarray(x, dtype=float))))
        w = torch.exp(log_w).numpy()
        return MixtureDensity(w / w.sum(), means.numpy(), torch.exp(log_std).numpy())
