"""Gaussian-process Bayesian optimization of the replay cost with a UCB acquisition."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from simcal.errors import EmptyInputError, RangeError
from simcal.estimators.costs import ReplayCost
from simcal.numkit.gp import GpState, ucb

COST_FLOOR = 1e-10


@dataclass
class BayesOptState:
    """Observed ``(theta, cost)`` pairs and the incumbent minimizer."""

    dim: int
    kappa: float = 2.5
    xi: float = 0.0
    lengthscale: float = 0.2
    noise_var: float = 1e-8
    X: list = field(default_factory=list)
    costs: list = field(default_factory=list)
    best_theta: np.ndarray | None = None
    best_cost: float = float("inf")
    incumbent_trace: list = field(default_factory=list)

    def observe(self, theta, cost: float) -> None:
        theta = np.asarray(theta, dtype=float)
        self.X.append(theta)
        self.costs.append(float(cost))
        if cost < self.best_cost or self.best_theta is None:
            self.best_cost, self.best_theta = float(cost), theta.copy()
        self.incumbent_trace.append(self.best_cost)

    def targets(self) -> np.ndarray:
        """Standardized ``-log cost``; failed evaluations count as the worst finite one."""
        c = np.asarray(self.costs, dtype=float)
        finite = np.isfinite(c)
        worst = c[finite].max() if finite.any() else 1.0
        c = np.where(finite, c, worst)
        y = -np.log(c + COST_FLOOR)
        sd = y.std()
        return (y - y.mean()) / (sd if sd > 0 else 1.0)

    def gp(self) -> GpState:
        return GpState(np.array(self.X), self.targets(), self.lengthscale, 1.0, self.noise_var)


def _lattice(dim: int, max_points: int = 2000) -> np.ndarray:
    per_axis = int(np.floor(max_points ** (1.0 / dim)))
    if per_axis < 3:
        return np.empty((0, dim))
    ticks = np.linspace(0.0, 1.0, per_axis)
    return np.array(list(itertools.product(ticks, repeat=dim)))


def candidates(state: BayesOptState, rng: np.random.Generator, n_random: int = 512, n_local: int = 128) -> np.ndarray:
    """Lattice (low dimensions), uniform random points and perturbations of the incumbent."""
    parts = [_lattice(state.dim), rng.uniform(0.0, 1.0, size=(n_random, state.dim))]
    if state.best_theta is not None and n_local:
        scales = np.geomspace(0.003, 0.1, n_local)[:, None]
        parts.append(np.clip(state.best_theta + scales * rng.standard_normal((n_local, state.dim)), 0.0, 1.0))
    return np.vstack(parts)


def incumbent_trace(history) -> list[float]:
    """Best cost seen after each evaluation."""
    return list(np.minimum.accumulate([c for _, c in history]))


def propose(state: BayesOptState, rng: np.random.Generator) -> np.ndarray:
    cand = candidates(state, rng)
    scores = ucb(state.gp(), cand, state.kappa)
    return cand[int(np.argmax(scores))]


def bayesopt_calibrate(
    env_id: str,
    tau_ref,
    budget: int,
    seed: int = 0,
    *,
    kappa: float = 2.5,
    xi: float = 0.0,
    n_init: int = 5,
    cost_fn=None,
):
    """Minimize the replay cost with ``budget`` evaluations.

    Returns ``(theta_hat, history)`` where ``history`` lists every evaluated
    ``(theta, cost)`` in order and ``theta_hat`` is the incumbent.
    """
    if budget < 2:
        raise RangeError("bayesopt needs a budget of at least 2 evaluations")
    if not tau_ref:
        raise EmptyInputError("bayesopt needs reference trajectories")
    cost = cost_fn if cost_fn is not None else ReplayCost(env_id, tau_ref)
    rng = np.random.default_rng(seed)
    state = BayesOptState(cost.dim, kappa=kappa, xi=xi)
    history = []
    n_init = max(1, min(n_init, budget))
    init = rng.uniform(0.0, 1.0, size=(n_init, cost.dim))
    for theta, c in zip(init, cost(init)):
        state.observe(theta, c)
        history.append((theta, float(c)))
    for _ in range(budget - n_init):
        theta = propose(state, rng)
        c = float(cost(theta[None])[0])
        state.observe(theta, c)
        history.append((theta, c))
    return state.best_theta.copy(), history
