"""ADR-style calibration: Stein variational particles driven by perturbation gradients of a reward."""

from __future__ import annotations

import numpy as np

from simcal.errors import NumericError, ShapeError
from simcal.estimators.costs import ReplayCost
from simcal.estimators.particles import ParticleSet
from simcal.simenv import get_spec

COINCIDENT_TOL = 1e-12
JITTER = 1e-6
FAILED_REWARD = -1e6


def _separate_coincident(x: np.ndarray) -> np.ndarray:
    """Nudge exactly coincident particles apart by a tiny index-dependent offset.

    The kernel gradient between identical points is zero, so without this
    repulsion could never split them.
    """
    m, n = x.shape
    out = x.copy()
    for i in range(1, m):
        if np.any(np.max(np.abs(out[:i] - out[i]), axis=1) <= COINCIDENT_TOL):
            direction = np.random.default_rng(i).standard_normal(n)
            out[i] += JITTER * direction / np.linalg.norm(direction)
    return out


def median_bandwidth(x: np.ndarray) -> float:
    m = x.shape[0]
    if m < 2:
        return 1.0
    d2 = np.sum((x[:, None, :] - x[None, :, :]) ** 2, axis=2)
    med = np.median(d2[np.triu_indices(m, 1)])
    if not med > 0:
        return 1.0
    return float(med / np.log(m + 1.0))


def svgd_step(particles, score_grads, step_size: float, kernel_bandwidth="median-heuristic") -> np.ndarray:
    """One Stein variational update with RBF kernel ``exp(-|x - y|^2 / h)``, clamped to the unit cube.

    ``kernel_bandwidth`` is ``"median-heuristic"`` or a fixed positive ``h``.
    """
    x = np.atleast_2d(np.asarray(particles.particles if isinstance(particles, ParticleSet) else particles, dtype=float))
    g = np.atleast_2d(np.asarray(score_grads, dtype=float))
    if g.shape != x.shape:
        raise ShapeError(f"{g.shape} gradients for particles of shape {x.shape}")
    if not np.all(np.isfinite(g)):
        raise NumericError("non-finite score gradients")
    m = x.shape[0]
    if m > 1:
        x = _separate_coincident(x)
    h = median_bandwidth(x) if kernel_bandwidth == "median-heuristic" else float(kernel_bandwidth)
    if not h > 0:
        raise ValueError("kernel bandwidth must be positive")
    diff = x[:, None, :] - x[None, :, :]  # diff[j, i] = x_j - x_i
    k = np.exp(-np.sum(diff * diff, axis=2) / h)  # k[j, i]
    drive = k.T @ g
    repulse = np.einsum("ji,jid->id", k, -2.0 * diff / h)
    return np.clip(x + step_size / m * (drive + repulse), 0.0, 1.0)


def perturbation_gradients(reward_fn, x: np.ndarray, rng: np.random.Generator, n_pairs: int = 8,
                           sigma: float = 0.05, temperature: float = 1.0,
                           standardize: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Antithetic Gaussian-perturbation gradient of ``reward / temperature`` for every particle.

    With ``standardize`` the reward differences are divided by their standard
    deviation over the whole batch, making step sizes independent of the
    reward's scale. Returns ``(gradients, rewards at the particles)``.
    """
    m, n = x.shape
    eps = rng.standard_normal((m, n_pairs, n))
    plus = (x[:, None, :] + sigma * eps).reshape(-1, n)
    minus = (x[:, None, :] - sigma * eps).reshape(-1, n)
    r = np.asarray(reward_fn(np.vstack([x, plus, minus])), dtype=float)
    r = np.where(np.isfinite(r), r, FAILED_REWARD)
    r_x = r[:m]
    delta = (r[m : m + m * n_pairs] - r[m + m * n_pairs :]).reshape(m, n_pairs)
    if standardize:
        sd = delta.std()
        if not sd > 0:
            return np.zeros_like(x), r_x
        delta = delta / sd
    else:
        delta = delta / sigma
    grads = np.einsum("mk,mkn->mn", delta / temperature, eps) / (2.0 * n_pairs)
    return grads, r_x


def log_cost_reward(cost, floor: float = 1e-12):
    def reward(thetas):
        with np.errstate(divide="ignore"):
            return -np.log(np.asarray(cost(thetas), dtype=float) + floor)

    return reward


def adr_calibrate(
    env_id: str,
    tau_ref,
    iters: int = 40,
    n_particles: int = 10,
    reward_fn=None,
    seed: int = 0,
    *,
    step_size: float = 0.05,
    sigma: float = 0.05,
    n_pairs: int = 8,
    temperature: float = 1.0,
    kernel_bandwidth="median-heuristic",
    standardize: bool = False,
) -> ParticleSet:
    """Evolve uniformly initialized particles toward high reward.

    ``reward_fn`` maps ``(M, N)`` parameters to ``M`` rewards; the default is
    the negative log replay cost against ``tau_ref``. The log makes the
    reward invariant to the cost's units and sharpens it near a zero-cost
    fit, so particles can settle against kernel repulsion. Each particle's
    final value is the reward of its final position.
    """
    if reward_fn is None:
        reward_fn = log_cost_reward(ReplayCost(env_id, tau_ref))

    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 1.0, size=(n_particles, get_spec(env_id).dim))
    log = []
    for _ in range(iters):
        grads, r = perturbation_gradients(reward_fn, x, rng, n_pairs, sigma, temperature, standardize)
        log.append(float(np.mean(r)))
        x = svgd_step(x, grads, step_size, kernel_bandwidth)
    values = np.asarray(reward_fn(x), dtype=float) if iters > 0 else None
    out = ParticleSet(x, values, seed=seed, higher_is_better=True)
    out.history = log
    return out
