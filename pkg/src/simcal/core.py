"""Domain types: parameter spaces, trajectories, discrepancy and accuracy scoring.

Parameter vectors are plain float arrays in normalized ``[0, 1]^N``
coordinates; :class:`ParameterSpace` maps them to physical units.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from simcal.errors import EmptyInputError, RangeError, ShapeError

START_STATE_TOL = 1e-9
AGGREGATE_MODES = ("mean", "min", "max")
TRAJECTORY_SOURCES = ("reference", "simulated", "policy")


@dataclass(frozen=True)
class Param:
    name: str
    low: float
    high: float
    unit: str = ""


@dataclass(frozen=True)
class ParameterSpace:
    """Ordered, named physical parameters with closed ranges."""

    params: tuple[Param, ...]

    def __post_init__(self):
        params = tuple(p if isinstance(p, Param) else Param(*p) for p in self.params)
        object.__setattr__(self, "params", params)
        if not params:
            raise EmptyInputError("parameter space needs at least one parameter")
        names = [p.name for p in params]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate parameter names in {names}")
        for p in params:
            if not p.low < p.high:
                raise RangeError(f"parameter {p.name!r}: low={p.low} must be < high={p.high}")

    @property
    def dim(self) -> int:
        return len(self.params)

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.params]

    @property
    def low(self) -> np.ndarray:
        return np.array([p.low for p in self.params], dtype=float)

    @property
    def high(self) -> np.ndarray:
        return np.array([p.high for p in self.params], dtype=float)

    def to_dict(self) -> list[dict]:
        return [{"name": p.name, "low": p.low, "high": p.high, "unit": p.unit} for p in self.params]

    @classmethod
    def from_dict(cls, entries: Sequence[dict]) -> "ParameterSpace":
        return cls(tuple(Param(e["name"], float(e["low"]), float(e["high"]), e.get("unit", "")) for e in entries))


def _check_dim(x: np.ndarray, dim: int, what: str) -> None:
    if x.ndim != 1 or x.shape[0] != dim:
        raise ShapeError(f"{what}: expected length {dim}, got shape {x.shape}")


def param_vector(values, dim: int | None = None) -> np.ndarray:
    """Validate and return a normalized parameter vector."""
    theta = np.asarray(values, dtype=float).reshape(-1) if np.ndim(values) == 0 else np.asarray(values, dtype=float)
    if dim is not None:
        _check_dim(theta, dim, "parameter vector")
    if not np.all(np.isfinite(theta)) or np.any(theta < 0.0) or np.any(theta > 1.0):
        raise RangeError(f"normalized parameters must lie in [0, 1], got {theta}")
    return theta


def normalize(theta_phys, space: ParameterSpace, *, allow_out_of_range: bool = False) -> np.ndarray:
    """Map physical values to ``[0, 1]`` coordinates, component-wise.

    ``allow_out_of_range`` is used for out-of-distribution variants whose
    true parameters deliberately leave the estimation range.
    """
    x = np.asarray(theta_phys, dtype=float)
    _check_dim(x, space.dim, "physical parameters")
    if not allow_out_of_range:
        for p, xi in zip(space.params, x):
            if not (p.low <= xi <= p.high):
                raise RangeError(f"parameter {p.name!r}={xi} outside [{p.low}, {p.high}] {p.unit}".rstrip())
    return (x - space.low) / (space.high - space.low)


def denormalize(theta, space: ParameterSpace) -> np.ndarray:
    x = np.asarray(theta, dtype=float)
    _check_dim(x, space.dim, "normalized parameters")
    return space.low + x * (space.high - space.low)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """States ``(H+1, S)`` and actions ``(H, A)`` of one episode."""

    env_id: str
    start_state: np.ndarray
    states: np.ndarray
    actions: np.ndarray
    source: str = "simulated"
    seed: int | None = field(default=None)

    def __post_init__(self):
        states = np.array(self.states, dtype=float, ndmin=2)
        actions = np.array(self.actions, dtype=float)
        if actions.ndim == 1 and actions.size == 0:
            actions = actions.reshape(0, 0)
        if actions.ndim != 2 or states.ndim != 2:
            raise ShapeError("states and actions must be 2-D")
        if states.shape[0] != actions.shape[0] + 1:
            raise ShapeError(f"{states.shape[0]} states for {actions.shape[0]} actions; need H+1 states for H actions")
        start = np.array(self.start_state, dtype=float)
        if start.shape != (states.shape[1],):
            raise ShapeError(f"start state shape {start.shape} does not match state dim {states.shape[1]}")
        if self.source not in TRAJECTORY_SOURCES:
            raise ValueError(f"unknown trajectory source {self.source!r}")
        for arr in (states, actions, start):
            arr.setflags(write=False)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "actions", actions)
        object.__setattr__(self, "start_state", start)

    @property
    def horizon(self) -> int:
        return self.actions.shape[0]

    @property
    def state_dim(self) -> int:
        return self.states.shape[1]

    @property
    def action_dim(self) -> int:
        return self.actions.shape[1]

    def same_as(self, other: "Trajectory") -> bool:
        return (
            self.env_id == other.env_id
            and self.states.shape == other.states.shape
            and self.actions.shape == other.actions.shape
            and np.array_equal(self.states, other.states)
            and np.array_equal(self.actions, other.actions)
        )


def trajectory_mse(a: Trajectory, b: Trajectory, *, check_start: bool = True) -> float:
    """Mean squared state difference over timesteps and state dimensions."""
    if a.states.shape != b.states.shape:
        raise ShapeError(f"trajectory shapes differ: {a.states.shape} vs {b.states.shape}")
    if check_start and np.max(np.abs(a.start_state - b.start_state), initial=0.0) > START_STATE_TOL:
        raise ShapeError("trajectories start from different states")
    diff = a.states - b.states
    return float(np.mean(diff * diff))


def accuracy(theta_hat, theta_true) -> np.ndarray:
    """Per-parameter accuracy ``1 - |error|`` in normalized coordinates."""
    est = np.asarray(theta_hat, dtype=float)
    true = np.asarray(theta_true, dtype=float)
    if est.shape != true.shape or est.ndim != 1:
        raise ShapeError(f"accuracy needs equal-length vectors, got {est.shape} and {true.shape}")
    return np.clip(1.0 - np.abs(est - true), 0.0, 1.0)


def aggregate(acc, mode: str = "mean") -> float:
    values = np.asarray(acc, dtype=float)
    if values.size == 0:
        raise EmptyInputError("cannot aggregate an empty accuracy vector")
    if mode == "mean":
        # rounding in the sum can push the mean an ulp past the extremes
        return float(np.clip(np.mean(values), values.min(), values.max()))
    if mode == "min":
        return float(np.min(values))
    if mode == "max":
        return float(np.max(values))
    raise ValueError(f"mode must be one of {AGGREGATE_MODES}, got {mode!r}")


def spread(acc) -> float:
    """Max minus min of per-parameter accuracies."""
    return aggregate(acc, "max") - aggregate(acc, "min")
