"""Linear regression baseline: one affine layer from per-timestep ``(s, a, s')`` to parameters."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from simcal.core import Trajectory
from simcal.errors import EmptyInputError, ShapeError
from simcal.numkit.mlp import OptimizerState, opt_step


def transitions(tau: Trajectory) -> np.ndarray:
    """Per-timestep rows ``[s_t, a_t, s_{t+1}]``."""
    return np.concatenate([tau.states[:-1], tau.actions, tau.states[1:]], axis=1)


@dataclass
class RegressionModel:
    weight: np.ndarray
    bias: np.ndarray
    in_mean: np.ndarray
    whiten: np.ndarray
    losses: list[float] = field(default_factory=list)

    @property
    def in_dim(self) -> int:
        return self.in_mean.shape[0]

    @property
    def out_dim(self) -> int:
        return self.bias.shape[0]

    def raw(self, rows: np.ndarray) -> np.ndarray:
        """Unclamped affine predictions for per-timestep rows."""
        z = (rows - self.in_mean) @ self.whiten
        return z @ self.weight.T + self.bias

    def effective_affine(self) -> tuple[np.ndarray, np.ndarray]:
        """The model as a single affine map ``rows @ A.T + c`` in raw input coordinates."""
        A = self.weight @ self.whiten.T
        return A, self.bias - A @ self.in_mean


def _whitening(X: np.ndarray, eps: float = 1e-8) -> tuple[np.ndarray, np.ndarray]:
    mean = X.mean(axis=0)
    cov = np.cov(X - mean, rowvar=False, bias=True)
    cov = np.atleast_2d(cov)
    evals, evecs = np.linalg.eigh(cov)
    scale = 1.0 / np.sqrt(np.maximum(evals, 0.0) + eps * max(1.0, float(evals.max(initial=0.0))))
    return mean, evecs * scale


def _dataset_rows(dataset) -> tuple[np.ndarray, np.ndarray]:
    rows, targets = [], []
    for tau, theta in dataset:
        r = transitions(tau)
        rows.append(r)
        targets.append(np.broadcast_to(np.asarray(theta, dtype=float), (r.shape[0], np.size(theta))))
    return np.vstack(rows), np.vstack(targets)


def mse_loss(params, Z: np.ndarray, Y: np.ndarray) -> float:
    err = Z @ params[0].T + params[1] - Y
    return float(np.mean(err * err))


def mse_gradients(params, Z: np.ndarray, Y: np.ndarray) -> list[np.ndarray]:
    """Analytic gradients of :func:`mse_loss` with respect to ``[weight, bias]``."""
    err = Z @ params[0].T + params[1] - Y
    return [2.0 * err.T @ Z / (Z.shape[0] * Y.shape[1]), 2.0 * err.mean(axis=0) / Y.shape[1]]


def regress_fit(
    dataset: Sequence[tuple[Trajectory, np.ndarray]],
    epochs: int = 100,
    batch_size: int = 320,
    lr: float = 0.001,
    seed: int = 0,
) -> RegressionModel:
    """Fit by minibatch SGD on the mean squared parameter error of per-timestep predictions.

    Inputs are whitened first (a fixed affine map folded into the model) so
    that plain SGD at small learning rates converges on strongly correlated
    ``s`` and ``s'`` columns.
    """
    if len(dataset) == 0:
        raise EmptyInputError("regression needs a non-empty dataset")
    X, Y = _dataset_rows(dataset)
    dims = {t.states.shape[1] for t, _ in dataset} | {-1}
    if len(dims) != 2:
        raise ShapeError("dataset trajectories have inconsistent state dimensions")
    mean, whiten = _whitening(X)
    Z = (X - mean) @ whiten
    n, d = Z.shape
    params = [np.zeros((Y.shape[1], d)), Y.mean(axis=0)]
    state = OptimizerState()
    rng = np.random.default_rng(seed)
    batch_size = min(batch_size, n)
    losses = []
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            params = opt_step(params, mse_gradients(params, Z[idx], Y[idx]), "sgd", lr, state)
        losses.append(mse_loss(params, Z, Y))
    return RegressionModel(params[0], params[1], mean, whiten, losses)


def regress_closed_form(dataset) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares affine map ``(A, c)`` used as a test oracle only."""
    X, Y = _dataset_rows(dataset)
    Xb = np.hstack([X, np.ones((X.shape[0], 1))])
    sol = np.linalg.lstsq(Xb, Y, rcond=None)[0]
    return sol[:-1].T, sol[-1]


def regress_predict(model: RegressionModel, tau: Trajectory) -> np.ndarray:
    rows = transitions(tau)
    if rows.shape[1] != model.in_dim:
        raise ShapeError(f"model expects {model.in_dim} inputs per timestep, trajectory gives {rows.shape[1]}")
    return np.clip(model.raw(rows).mean(axis=0), 0.0, 1.0)


def regress_predict_many(model: RegressionModel, taus: Sequence[Trajectory]) -> np.ndarray:
    raw = np.mean([model.raw(transitions(t)).mean(axis=0) for t in taus], axis=0)
    return np.clip(raw, 0.0, 1.0)


def regress_refine(model: RegressionModel, tau_ref, cost, steps: int = 30, lr: float = 0.02) -> tuple[RegressionModel, list[float]]:
    """Calibrate the output bias on the reference trajectories' replay cost.

    The prediction for a reference set is affine in the bias, so the
    replay-cost gradient with respect to the bias equals its gradient with
    respect to the (unclamped) prediction; that gradient is taken by central
    finite differences through the simulator. Adam steps keep the update
    scale independent of the cost's magnitude. Returns a new model.
    """
    refined = RegressionModel(model.weight, model.bias.copy(), model.in_mean, model.whiten, list(model.losses))
    state = OptimizerState()
    history = []
    best_cost, best_bias = np.inf, refined.bias.copy()
    for _ in range(steps):
        theta = regress_predict_many(refined, tau_ref)
        value, g = cost.fd_gradient(theta)
        history.append(value)
        if value < best_cost:
            best_cost, best_bias = value, refined.bias.copy()
        if not np.all(np.isfinite(g)):
            break
        (refined.bias,) = opt_step([refined.bias], [g], "adam", lr, state)
    refined.bias = best_bias
    return refined, history
