"""Simulated training data for the learned estimators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from simcal.core import Trajectory
from simcal.errors import EmptyInputError
from simcal.simenv import exciter_actions, get_spec, rollout_batch


@dataclass
class SimBatch:
    """Rollouts at known normalized parameters; diverged rows already dropped."""

    env_id: str
    thetas: np.ndarray
    states: np.ndarray
    actions: np.ndarray
    n_failed: int = 0

    def __len__(self) -> int:
        return self.thetas.shape[0]

    def trajectories(self) -> list[Trajectory]:
        return [
            Trajectory(self.env_id, s[0], s, a, "simulated")
            for s, a in zip(self.states, self.actions)
        ]

    def pairs(self) -> list[tuple[Trajectory, np.ndarray]]:
        return list(zip(self.trajectories(), self.thetas))


def simulate_thetas(env_id: str, thetas, seed: int = 0, source="exciter") -> SimBatch:
    """Roll out each row of ``thetas`` under ``source``.

    ``source`` is ``"exciter"`` (scripted excitation from canonical random
    starts), a linear policy (closed loop from canonical random starts) or a
    list of trajectories, whose start states and actions are replayed in turn.
    """
    spec = get_spec(env_id)
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    n = thetas.shape[0]
    rng = np.random.default_rng([seed, 7])
    gains = None
    if isinstance(source, str):
        if source != "exciter":
            raise ValueError(f"unknown action source {source!r}")
        starts = rng.uniform(spec.start_low, spec.start_high, size=(n, spec.state_dim))
        ff = exciter_actions(env_id)[None]
    elif hasattr(source, "gain"):
        starts = rng.uniform(spec.start_low, spec.start_high, size=(n, spec.state_dim))
        ff = np.broadcast_to(np.asarray(source.bias, dtype=float), (1, spec.horizon, spec.action_dim))
        gains = source.gain
    else:
        refs = list(source)
        if not refs:
            raise EmptyInputError("replay source needs at least one trajectory")
        idx = np.arange(n) % len(refs)
        starts = np.stack([refs[i].start_state for i in idx])
        ff = np.stack([refs[i].actions for i in idx])
    states, actions, finite = rollout_batch(spec, thetas, starts, ff, gains)
    return SimBatch(env_id, thetas[finite], states[finite], actions[finite], int(np.sum(~finite)))


def simulate_prior(env_id: str, n: int, seed: int = 0, source="exciter") -> SimBatch:
    """``n`` rollouts at parameters drawn uniformly from the unit cube."""
    if n < 1:
        raise EmptyInputError("need at least one simulation")
    spec = get_spec(env_id)
    thetas = np.random.default_rng([seed, 3]).uniform(0.0, 1.0, size=(n, spec.dim))
    return simulate_thetas(env_id, thetas, seed, source)
