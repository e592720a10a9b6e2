"""Parameterized simulators, rollouts, rewards and the central rollout ledger."""

from __future__ import annotations

import contextvars
import threading
import zlib
from dataclasses import dataclass

import numpy as np

from simcal.core import Trajectory, denormalize, param_vector
from simcal.errors import BudgetExceeded, CatalogError, NumericError, ShapeError
from simcal.simenv.backend import kernel
from simcal.simenv.catalog import EnvSpec, get_spec


class RolloutLedger:
    """Thread-safe count of simulator rollouts and steps, with an optional cap."""

    def __init__(self, budget: int | None = None):
        self.budget = budget
        self.rollouts = 0
        self.steps = 0
        self._lock = threading.Lock()
        self._token = None

    def charge(self, rollouts: int, steps: int) -> None:
        with self._lock:
            if self.budget is not None and self.rollouts + rollouts > self.budget:
                raise BudgetExceeded(
                    f"rollout budget {self.budget} exceeded ({self.rollouts} used, {rollouts} requested)"
                )
            self.rollouts += rollouts
            self.steps += steps

    @property
    def remaining(self) -> float:
        return float("inf") if self.budget is None else self.budget - self.rollouts

    def __enter__(self):
        self._token = _LEDGER.set(self)
        return self

    def __exit__(self, *exc):
        _LEDGER.reset(self._token)
        return False


_LEDGER: contextvars.ContextVar[RolloutLedger | None] = contextvars.ContextVar("rollout_ledger", default=None)


def current_ledger() -> RolloutLedger | None:
    return _LEDGER.get()


@dataclass(frozen=True, eq=False)
class SimModel:
    """A simulator instance: environment spec, normalized parameters and start-state seed."""

    spec: EnvSpec
    theta: np.ndarray
    rng_seed: int = 0

    @property
    def env_id(self) -> str:
        return self.spec.env_id

    @property
    def physical(self) -> np.ndarray:
        return denormalize(self.theta, self.spec.space)

    def start_state(self, index: int = 0) -> np.ndarray:
        """Start state drawn from the canonical distribution; ``index`` selects the episode."""
        rng = np.random.default_rng([self.rng_seed, index])
        return rng.uniform(self.spec.start_low, self.spec.start_high)


def make_env(env_id: str, theta, seed: int = 0, *, physical=None) -> SimModel:
    """Build a simulator for ``env_id`` at normalized parameters ``theta``.

    ``physical`` overrides the parameter values in physical units, which is how
    out-of-distribution variants outside the estimation range are simulated.
    """
    spec = get_spec(env_id)
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (spec.dim,):
        raise ShapeError(f"{env_id} has {spec.dim} parameters, got theta of shape {theta.shape}")
    if physical is None:
        theta = param_vector(theta, spec.dim).copy()
    else:
        physical = np.asarray(physical, dtype=float)
        theta = (physical - spec.space.low) / (spec.space.high - spec.space.low)
    theta.setflags(write=False)
    return SimModel(spec, theta, int(seed))


def _physical_batch(spec: EnvSpec, thetas) -> np.ndarray:
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    if thetas.shape[1] != spec.dim:
        raise ShapeError(f"{spec.env_id} needs {spec.dim} parameters per row, got {thetas.shape[1]}")
    return np.ascontiguousarray(spec.space.low + thetas * (spec.space.high - spec.space.low))


def rollout_batch(
    spec: EnvSpec,
    thetas,
    starts,
    feedforward,
    gains=None,
    *,
    physical: bool = False,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Roll out ``B`` episodes at once.

    Actions are ``clip(feedforward[t] + gains @ s_t)``; pass ``gains=None`` for
    open-loop replay. ``thetas`` are normalized unless ``physical`` is set.
    Returns ``(states, actions, finite)`` where ``finite`` flags rows whose
    states stayed finite. Every row is charged to the active ledger.
    """
    params = (
        np.ascontiguousarray(np.atleast_2d(np.asarray(thetas, dtype=float)))
        if physical
        else _physical_batch(spec, thetas)
    )
    starts = np.ascontiguousarray(np.atleast_2d(np.asarray(starts, dtype=float)))
    ff = np.asarray(feedforward, dtype=float)
    if ff.ndim == 2:
        ff = ff[None]
    batch = params.shape[0]
    if starts.shape[0] == 1 and batch > 1:
        starts = np.repeat(starts, batch, axis=0)
    if ff.shape[0] == 1 and batch > 1:
        ff = np.repeat(ff, batch, axis=0)
    if starts.shape != (batch, spec.state_dim):
        raise ShapeError(f"starts must be ({batch}, {spec.state_dim}), got {starts.shape}")
    if ff.ndim != 3 or ff.shape[0] != batch or ff.shape[2] != spec.action_dim:
        raise ShapeError(f"feedforward must be ({batch}, H, {spec.action_dim}), got {ff.shape}")
    # the compiled kernel takes writable C buffers; trajectories hand out read-only views
    ff = np.require(ff, np.float64, ["C", "W"])
    starts = np.require(starts, np.float64, ["C", "W"])
    params = np.require(params, np.float64, ["C", "W"])
    if gains is not None:
        gains = np.asarray(gains, dtype=float)
        if gains.ndim == 2:
            gains = np.broadcast_to(gains, (batch,) + gains.shape)
        if gains.shape != (batch, spec.action_dim, spec.state_dim):
            raise ShapeError(f"gains must be ({batch}, {spec.action_dim}, {spec.state_dim}), got {gains.shape}")
        gains = np.require(gains, np.float64, ["C", "W"])
    ledger = current_ledger()
    if ledger is not None:
        ledger.charge(batch, batch * ff.shape[1])
    lo, hi = spec.action_bounds
    with np.errstate(all="ignore"):
        states, actions = kernel.rollout(spec.dynamics_code, params, starts, ff, gains, lo, hi, spec.dt)
    finite = np.all(np.isfinite(states.reshape(batch, -1)), axis=1)
    return states, actions, finite


def step(model: SimModel, state, action) -> np.ndarray:
    """One RK4 step of ``model`` from ``state`` under ``action`` (clamped to bounds)."""
    spec = model.spec
    s = np.asarray(state, dtype=float)
    a = np.asarray(action, dtype=float)
    if s.shape != (spec.state_dim,) or a.shape != (spec.action_dim,):
        raise ShapeError(
            f"{spec.env_id} expects state ({spec.state_dim},) and action ({spec.action_dim},), "
            f"got {s.shape} and {a.shape}"
        )
    if not (np.all(np.isfinite(s)) and np.all(np.isfinite(a))):
        raise NumericError("step received non-finite state or action")
    lo, hi = spec.action_bounds
    params = np.ascontiguousarray(model.physical[None])
    states, _ = kernel.rollout(spec.dynamics_code, params, s[None].copy(), a[None, None].copy(), None, lo, hi, spec.dt)
    nxt = states[0, 1]
    if not np.all(np.isfinite(nxt)):
        raise NumericError(f"{spec.env_id} step produced a non-finite state")
    return nxt


def _driver_arrays(spec: EnvSpec, driver, horizon: int):
    if hasattr(driver, "gain") and hasattr(driver, "bias"):
        ff = np.broadcast_to(np.asarray(driver.bias, dtype=float), (horizon, spec.action_dim))
        return ff, np.asarray(driver.gain, dtype=float), "policy"
    actions = np.asarray(driver, dtype=float)
    if actions.size == 0 and horizon == 0:
        actions = actions.reshape(0, spec.action_dim)
    if actions.ndim != 2 or actions.shape != (horizon, spec.action_dim):
        raise ShapeError(f"action sequence must have shape ({horizon}, {spec.action_dim}), got {actions.shape}")
    return actions, None, "simulated"


def rollout(model: SimModel, start, driver, horizon: int | None = None, *, source: str | None = None) -> Trajectory:
    """Execute ``driver`` (an ``(H, A)`` action array or a linear policy) from ``start``."""
    spec = model.spec
    if horizon is None:
        horizon = len(driver) if not hasattr(driver, "gain") else spec.horizon
    if horizon < 0 or horizon > spec.horizon:
        raise ShapeError(f"horizon {horizon} outside [0, {spec.horizon}] for {spec.env_id}")
    start = np.asarray(start, dtype=float)
    if start.shape != (spec.state_dim,):
        raise ShapeError(f"start state must have shape ({spec.state_dim},), got {start.shape}")
    if not np.all(np.isfinite(start)):
        raise NumericError("non-finite start state")
    ff, gains, kind = _driver_arrays(spec, driver, horizon)
    states, actions, finite = rollout_batch(spec, model.physical, start, ff, gains, physical=True)
    if not finite[0]:
        raise NumericError(f"{spec.env_id} rollout diverged")
    return Trajectory(spec.env_id, start, states[0], actions[0], source or kind)


def exciter_actions(env_id: str, horizon: int | None = None) -> np.ndarray:
    """Scripted multi-sine excitation used for raw system-identification data.

    The signal is fixed per environment so trajectories differ only through
    their start states and parameters.
    """
    spec = get_spec(env_id)
    horizon = spec.horizon if horizon is None else horizon
    rng = np.random.default_rng(zlib.crc32(("exciter:" + env_id).encode()))
    t = np.arange(horizon) * spec.dt
    freqs = np.array([0.3, 0.7, 1.3, 2.1])
    phases = rng.uniform(0, 2 * np.pi, size=(spec.action_dim, freqs.size))
    signal = np.sin(2 * np.pi * freqs[None, :, None] * t[None, None, :] + phases[:, :, None]).sum(axis=1)
    # the DC offset makes static gains (masses) visible in trajectory means
    amp = 0.25 * spec.action_high
    offset = 0.3 * spec.action_high
    return np.clip(offset + amp * signal.T, spec.action_low, spec.action_high)


def step_rewards(states: np.ndarray, actions: np.ndarray, reward_fn_id: str) -> np.ndarray:
    """Per-step rewards for batched ``states (..., H+1, S)`` and ``actions (..., H, A)``."""
    s, nxt = states[..., :-1, :], states[..., 1:, :]
    effort = np.sum(actions * actions, axis=-1)
    if reward_fn_id == "quadratic-regulation":
        return -(s[..., 0] ** 2 + 0.1 * s[..., 1] ** 2 + 0.001 * effort)
    if reward_fn_id == "upright-regulation":
        angle = np.mod(s[..., 0] + np.pi, 2.0 * np.pi) - np.pi
        return -(angle**2 + 0.1 * s[..., 1] ** 2 + 0.001 * effort)
    if reward_fn_id == "hover":
        return -((s[..., 0] - 1.0) ** 2 + 0.001 * effort)
    if reward_fn_id == "forward-progress":
        n = states.shape[-1] // 2
        return nxt[..., :n].mean(axis=-1) - s[..., :n].mean(axis=-1) - 0.001 * effort
    raise CatalogError(f"unknown reward function {reward_fn_id!r}")


def env_return(tau: Trajectory, env_id: str) -> float:
    """Undiscounted return of ``tau`` under ``env_id``'s reward."""
    spec = get_spec(env_id)
    if tau.horizon == 0:
        return 0.0
    return float(np.sum(step_rewards(tau.states, tau.actions, spec.reward_fn_id)))
