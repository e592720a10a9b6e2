"""Fixed-length trajectory summaries shared by the learned estimators and the discriminator."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from simcal.core import Trajectory
from simcal.errors import ShapeError


@dataclass(frozen=True)
class FeatureSpec:
    state_dim: int
    action_dim: int
    n_subsamples: int = 10

    @property
    def length(self) -> int:
        return self.n_subsamples * (self.state_dim + self.action_dim) + 2 * self.state_dim

    @classmethod
    def for_env(cls, spec, n_subsamples: int = 10) -> "FeatureSpec":
        return cls(spec.state_dim, spec.action_dim, n_subsamples)


def subsample_indices(horizon: int, n: int) -> np.ndarray:
    return np.rint(np.linspace(0, horizon - 1, n)).astype(int)


def featurize_arrays(states: np.ndarray, actions: np.ndarray, spec: FeatureSpec) -> np.ndarray:
    """Features for batched ``states (B, H+1, S)`` and ``actions (B, H, A)``; returns ``(B, F)``."""
    states = np.asarray(states, dtype=float)
    actions = np.asarray(actions, dtype=float)
    if states.ndim == 2:
        return featurize_arrays(states[None], actions[None], spec)[0]
    if states.shape[-1] != spec.state_dim or actions.shape[-1] != spec.action_dim:
        raise ShapeError(
            f"feature spec expects state/action dims ({spec.state_dim}, {spec.action_dim}), "
            f"got ({states.shape[-1]}, {actions.shape[-1]})"
        )
    horizon = actions.shape[1]
    if horizon < 1:
        raise ShapeError("featurize needs at least one action")
    idx = subsample_indices(horizon, spec.n_subsamples)
    pairs = np.concatenate([states[:, idx, :], actions[:, idx, :]], axis=2)
    batch = states.shape[0]
    return np.concatenate(
        [pairs.reshape(batch, -1), states.mean(axis=1), states.std(axis=1)],
        axis=1,
    )


def featurize(tau: Trajectory, spec: FeatureSpec) -> np.ndarray:
    """Subsampled ``(s, a)`` pairs followed by per-dimension state mean and std."""
    return featurize_arrays(tau.states, tau.actions, spec)


def stack(taus) -> tuple[np.ndarray, np.ndarray]:
    return np.stack([t.states for t in taus]), np.stack([t.actions for t in taus])
