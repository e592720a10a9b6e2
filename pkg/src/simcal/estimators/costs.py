"""Trajectory-discrepancy objectives over candidate parameter vectors."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from simcal.core import START_STATE_TOL, Trajectory
from simcal.errors import EmptyInputError, ShapeError
from simcal.simenv import get_spec, rollout_batch


class ReplayCost:
    """Mean trajectory MSE between references and their replays under candidate parameters.

    With ``policy=None`` each reference's recorded actions are replayed open
    loop from its start state. With a linear ``policy`` the actions are
    generated in closed loop instead, holding only the start state fixed.
    """

    def __init__(self, env_id: str, tau_ref: Sequence[Trajectory], policy=None):
        if not tau_ref:
            raise EmptyInputError("need at least one reference trajectory")
        self.env_id = env_id
        self.spec = get_spec(env_id)
        self.tau_ref = list(tau_ref)
        self.policy = policy
        shapes = {t.states.shape for t in self.tau_ref}
        if len(shapes) != 1:
            raise ShapeError(f"reference trajectories have mixed shapes {shapes}")
        self.ref_states = np.stack([t.states for t in self.tau_ref])
        self.ref_actions = np.stack([t.actions for t in self.tau_ref])
        self.starts = np.stack([t.start_state for t in self.tau_ref])
        self.n_evals = 0

    @property
    def dim(self) -> int:
        return self.spec.dim

    @property
    def rollouts_per_eval(self) -> int:
        return len(self.tau_ref)

    def simulate(self, thetas) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Replays for every ``(theta, reference)`` pair: arrays shaped ``(M, R, ...)``."""
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        m, r = thetas.shape[0], len(self.tau_ref)
        rep_theta = np.repeat(thetas, r, axis=0)
        starts = np.tile(self.starts, (m, 1))
        if self.policy is None:
            ff = np.tile(self.ref_actions, (m, 1, 1))
            gains = None
        else:
            horizon = self.ref_actions.shape[1]
            ff = np.broadcast_to(self.policy.bias, (m * r, horizon, self.spec.action_dim))
            gains = self.policy.gain
        states, actions, finite = rollout_batch(self.spec, rep_theta, starts, ff, gains)
        self.n_evals += m
        shape = (m, r) + states.shape[1:]
        return states.reshape(shape), actions.reshape((m, r) + actions.shape[1:]), finite.reshape(m, r)

    def __call__(self, thetas) -> np.ndarray:
        states, _, finite = self.simulate(thetas)
        diff = states - self.ref_states[None]
        with np.errstate(invalid="ignore", over="ignore"):
            per_ref = np.mean(diff * diff, axis=(2, 3))
        per_ref[~finite] = np.inf
        return per_ref.mean(axis=1)

    def trajectories(self, theta) -> list[Trajectory]:
        states, actions, _ = self.simulate(theta)
        return [
            Trajectory(self.env_id, self.starts[j], states[0, j], actions[0, j], "simulated")
            for j in range(states.shape[1])
        ]

    def fd_gradient(self, theta, h: float = 1e-3) -> tuple[float, np.ndarray]:
        """Central finite-difference gradient of the cost at ``theta`` (one batched evaluation)."""
        theta = np.asarray(theta, dtype=float)
        n = theta.size
        eye = np.eye(n) * h
        pts = np.vstack([theta[None], theta + eye, theta - eye])
        costs = self(pts)
        grad = (costs[1 : n + 1] - costs[n + 1 :]) / (2 * h)
        return float(costs[0]), grad


def starts_match(a: Trajectory, b: Trajectory) -> bool:
    return bool(np.max(np.abs(a.start_state - b.start_state), initial=0.0) <= START_STATE_TOL)
