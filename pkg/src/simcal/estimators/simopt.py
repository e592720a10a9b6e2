"""SimOpt: a diagonal Gaussian over parameters reweighted by a KL-bounded exponential of costs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from simcal.errors import EmptyInputError, NumericError, ShapeError
from simcal.estimators.costs import ReplayCost
from simcal.estimators.particles import ParticleSet
from simcal.simenv import get_spec

VAR_FLOOR = 1e-4
LOG_ETA_SPAN = 18.0  # search over eta in scale * [e^-18, e^18]


def logsumexp(z: np.ndarray) -> float:
    m = z.max()
    return float(m + np.log(np.sum(np.exp(z - m))))


def _log_weights(costs: np.ndarray, eta: float) -> np.ndarray:
    z = -costs / eta
    return z - logsumexp(z)


def kl_to_uniform(weights) -> float:
    w = np.asarray(weights, dtype=float)
    nz = w > 0
    return float(np.sum(w[nz] * np.log(w[nz] * w.size)))


def reps_dual(costs, eta: float, epsilon: float) -> float:
    """``eta * eps + eta * log(mean(exp(-c / eta)))``."""
    c = np.asarray(costs, dtype=float)
    return float(eta * epsilon + eta * (logsumexp(-c / eta) - np.log(c.size)))


def reps_weights(costs, epsilon: float = 0.5) -> tuple[np.ndarray, float]:
    """Exponential weights ``w_i ∝ exp(-c_i / eta)`` with ``eta`` minimizing the dual.

    The dual is minimized in ``log eta`` over a bracket scaled to the cost
    range. If the minimizer's realized KL to uniform still exceeds
    ``epsilon`` (bracket edge or roundoff), ``eta`` is raised by bisection
    until the bound holds.
    """
    c = np.asarray(costs, dtype=float).reshape(-1)
    if c.size < 2:
        raise EmptyInputError("REPS needs at least two costs")
    if not np.all(np.isfinite(c)):
        raise NumericError("REPS costs must be finite")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    c = c - c.min()
    scale = c.max()
    hi_eta = np.exp(LOG_ETA_SPAN) * (scale if scale > 0 else 1.0)
    if scale == 0.0:
        return np.full(c.size, 1.0 / c.size), float(hi_eta)
    lo_log, hi_log = np.log(scale) - LOG_ETA_SPAN, np.log(scale) + LOG_ETA_SPAN
    res = minimize_scalar(
        lambda le: reps_dual(c, np.exp(le), epsilon),
        bounds=(lo_log, hi_log),
        method="bounded",
        options={"xatol": 1e-12, "maxiter": 500},
    )
    log_eta = float(res.x)
    w = np.exp(_log_weights(c, np.exp(log_eta)))
    if kl_to_uniform(w) > epsilon:
        # KL falls monotonically as eta grows
        a, b = log_eta, hi_log
        while b - a > 1e-13:
            mid = 0.5 * (a + b)
            if kl_to_uniform(np.exp(_log_weights(c, np.exp(mid)))) > epsilon:
                a = mid
            else:
                b = mid
        log_eta = b
        w = np.exp(_log_weights(c, np.exp(log_eta)))
    return w / w.sum(), float(np.exp(log_eta))


@dataclass
class SimOptDist:
    mean: np.ndarray
    var: np.ndarray
    epsilon: float = 0.5

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float).copy()
        self.var = np.asarray(self.var, dtype=float).copy()
        if self.mean.shape != self.var.shape or self.mean.ndim != 1:
            raise ShapeError("mean and variance must be equal-length vectors")
        if not np.all(self.var > 0):
            raise ValueError("variances must be positive")

    @classmethod
    def initial(cls, dim: int, rng: np.random.Generator, epsilon: float = 0.5,
                mean_high: float = 0.5, var: float = 0.2) -> "SimOptDist":
        return cls(rng.uniform(0.0, mean_high, size=dim), np.full(dim, var), epsilon)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        x = self.mean + np.sqrt(self.var) * rng.standard_normal((n, self.mean.size))
        return np.clip(x, 0.0, 1.0)


def simopt_update(dist: SimOptDist, samples: ParticleSet, costs=None) -> SimOptDist:
    """Weighted mean and variance of the samples under REPS weights.

    Particles whose cost is infinite (failed rollouts) get zero weight.
    """
    x = samples.particles
    c = np.asarray(samples.values if costs is None else costs, dtype=float).reshape(-1)
    if c.shape[0] != x.shape[0]:
        raise ShapeError(f"{x.shape[0]} particles but {c.shape[0]} costs")
    finite = np.isfinite(c)
    w = np.zeros(c.size)
    if finite.sum() >= 2:
        w[finite] = reps_weights(c[finite], dist.epsilon)[0]
    elif finite.sum() == 1:
        w[finite] = 1.0
    else:
        return SimOptDist(dist.mean, dist.var, dist.epsilon)
    mean = w @ x
    var = np.maximum(w @ (x - mean) ** 2, VAR_FLOOR)
    return SimOptDist(mean, var, dist.epsilon)


def simopt_calibrate(
    env_id: str,
    tau_ref,
    iters: int = 12,
    n_particles: int = 6,
    cost_fn=None,
    seed: int = 0,
    *,
    epsilon: float = 0.5,
    init_mean_high: float = 0.5,
    init_var: float = 0.2,
) -> tuple[ParticleSet, SimOptDist]:
    """Sample, score and refit ``iters`` times; returns the last particles and the final distribution.

    ``cost_fn`` maps an ``(M, N)`` array of parameters to ``M`` costs and
    defaults to the replay cost against ``tau_ref``. ``history`` on the
    returned particle set logs the per-iteration mean finite cost.
    """
    cost = cost_fn if cost_fn is not None else ReplayCost(env_id, tau_ref)
    rng = np.random.default_rng(seed)
    dim = get_spec(env_id).dim
    dist = SimOptDist.initial(dim, rng, epsilon, init_mean_high, init_var)
    particles = ParticleSet(dist.sample(n_particles, rng), seed=seed)
    log = []
    for _ in range(iters):
        particles = ParticleSet(dist.sample(n_particles, rng), seed=seed)
        particles.values = np.asarray(cost(particles.particles), dtype=float)
        finite = particles.values[np.isfinite(particles.values)]
        log.append(float(finite.mean()) if finite.size else float("inf"))
        dist = simopt_update(dist, particles)
    particles.history = log
    return particles, dist
