"""Second-order MAML regression from trajectory features to parameters."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np
import torch

from simcal.errors import NumericError, RangeError
from simcal.estimators.costs import ReplayCost
from simcal.estimators.features import FeatureSpec, featurize, featurize_arrays
from simcal.estimators.simdata import simulate_thetas
from simcal.numkit.mlp import DTYPE, Mlp, OptimizerState, opt_step
from simcal.simenv import get_spec

Task = tuple  # (x_support, y_support, x_query, y_query) as 2-D arrays


def _mse(pred: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    return torch.mean((pred - y) ** 2)


def _t(a) -> torch.Tensor:
    return torch.as_tensor(np.asarray(a, dtype=float), dtype=DTYPE)


@dataclass
class MamlModel:
    """Meta-parameters plus the fixed input standardization applied before the network."""

    net: Mlp
    in_mean: np.ndarray
    in_scale: np.ndarray
    inner_lr: float = 0.005
    outer_lr: float = 0.005
    losses: list | None = None

    def standardize(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.in_mean) / self.in_scale

    def predict_raw(self, x, params=None) -> np.ndarray:
        with torch.no_grad():
            return self.net.forward(_t(self.standardize(np.atleast_2d(x))), params).numpy()

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for p in self.net.params:
            h.update(p.detach().numpy().tobytes())
        return h.hexdigest()


def adapted_params(net: Mlp, params, x: torch.Tensor, y: torch.Tensor, k_inner: int, lr: float,
                   create_graph: bool) -> list:
    """``k_inner`` plain gradient steps on the support MSE, differentiable when ``create_graph``."""
    fast = list(params)
    for _ in range(k_inner):
        loss = _mse(net.forward(x, fast), y)
        grads = torch.autograd.grad(loss, fast, create_graph=create_graph)
        fast = [p - lr * g for p, g in zip(fast, grads)]
    return fast


def meta_loss(net: Mlp, params, tasks: Sequence[Task], k_inner: int, inner_lr: float) -> torch.Tensor:
    """Mean post-adaptation query loss over a task batch (second-order graph kept)."""
    total = 0.0
    for xs, ys, xq, yq in tasks:
        fast = adapted_params(net, params, _t(xs), _t(ys), k_inner, inner_lr, create_graph=True)
        total = total + _mse(net.forward(_t(xq), fast), _t(yq))
    return total / len(tasks)


def meta_gradient(net: Mlp, tasks: Sequence[Task], k_inner: int, inner_lr: float) -> tuple[float, list]:
    params = [p.detach().clone().requires_grad_(True) for p in net.params]
    loss = meta_loss(net, params, tasks, k_inner, inner_lr)
    if not torch.isfinite(loss):
        raise NumericError(f"meta loss is not finite: {float(loss.detach())}")
    return float(loss.detach()), list(torch.autograd.grad(loss, params))


def maml_metatrain(
    task_sampler: Callable[[np.random.Generator], Task],
    meta_iters: int,
    tasks_per_batch: int,
    k_inner: int = 1,
    *,
    in_dim: int,
    out_dim: int,
    hidden: Sequence[int] = (60, 60),
    inner_lr: float = 0.005,
    outer_lr: float = 0.005,
    outer_optimizer: str = "adam",
    seed: int = 0,
    in_mean=None,
    in_scale=None,
) -> MamlModel:
    """Meta-train an Mlp with second-order MAML.

    ``task_sampler(rng)`` returns ``(x_support, y_support, x_query, y_query)``
    with inputs already standardized. The returned model's ``losses`` hold the
    mean query loss of every outer iteration.
    """
    net = Mlp([in_dim, *hidden, out_dim], activation="tanh", seed=seed)
    rng = np.random.default_rng(seed)
    state = OptimizerState()
    losses = []
    for it in range(meta_iters):
        tasks = [task_sampler(rng) for _ in range(tasks_per_batch)]
        try:
            loss, grads = meta_gradient(net, tasks, k_inner, inner_lr)
        except NumericError as exc:
            raise NumericError(f"meta-training diverged at iteration {it}: {exc}") from exc
        losses.append(loss)
        with torch.no_grad():
            net.params = [p.detach() for p in opt_step(net.params, grads, outer_optimizer, outer_lr, state)]
    return MamlModel(
        net,
        np.zeros(in_dim) if in_mean is None else np.asarray(in_mean, dtype=float),
        np.ones(in_dim) if in_scale is None else np.asarray(in_scale, dtype=float),
        inner_lr,
        outer_lr,
        losses,
    )


class TrajectoryTasks:
    """Tasks built from simulated rollouts: each task is one parameter setting.

    Support and query sets are distinct rollouts (different start states) at
    the same parameters, with the parameters themselves as regression targets.
    """

    def __init__(self, env_id: str, n_settings: int, rollouts_per_setting: int = 4, seed: int = 0,
                 source="exciter", n_support: int = 2):
        self.spec = get_spec(env_id)
        self.fspec = FeatureSpec.for_env(self.spec)
        rng = np.random.default_rng([seed, 11])
        thetas = rng.uniform(0.0, 1.0, size=(n_settings, self.spec.dim))
        rep = np.repeat(thetas, rollouts_per_setting, axis=0)
        batch = simulate_thetas(env_id, rep, seed, source)
        feats = featurize_arrays(batch.states, batch.actions, self.fspec)
        self.in_mean = feats.mean(axis=0)
        sd = feats.std(axis=0)
        self.in_scale = np.where(sd > 1e-12, sd, 1.0)
        z = (feats - self.in_mean) / self.in_scale
        # group surviving rollouts by setting
        self.groups = []
        for theta in thetas:
            rows = np.all(batch.thetas == theta, axis=1)
            if rows.sum() >= n_support + 1:
                self.groups.append((z[rows], batch.thetas[rows]))
        self.n_support = n_support

    def __call__(self, rng: np.random.Generator) -> Task:
        x, y = self.groups[int(rng.integers(len(self.groups)))]
        order = rng.permutation(x.shape[0])
        s, q = order[: self.n_support], order[self.n_support :]
        return x[s], y[s], x[q], y[q]

    def __iter__(self) -> Iterator[Task]:
        for x, y in self.groups:
            yield x[: self.n_support], y[: self.n_support], x[self.n_support :], y[self.n_support :]


def maml_train_env(env_id: str, n_settings: int = 200, meta_iters: int = 300, tasks_per_batch: int = 10,
                   k_inner: int = 1, seed: int = 0, source="exciter", **kw) -> MamlModel:
    tasks = TrajectoryTasks(env_id, n_settings, seed=seed, source=source)
    return maml_metatrain(
        tasks, meta_iters, tasks_per_batch, k_inner,
        in_dim=tasks.fspec.length, out_dim=tasks.spec.dim, seed=seed,
        in_mean=tasks.in_mean, in_scale=tasks.in_scale, **kw,
    )


def maml_adapt_supervised(model: MamlModel, x_support, y_support, k_steps: int) -> list:
    """Adapted parameter tensors after ``k_steps`` support-set steps; the model is untouched."""
    params = [p.detach().clone().requires_grad_(True) for p in model.net.params]
    fast = adapted_params(model.net, params, _t(x_support), _t(y_support), k_steps, model.inner_lr, False)
    return [p.detach() for p in fast]


def maml_adapt(model: MamlModel, tau_ref, k_steps: int = 5, cost=None, fd_step: float = 1e-3,
               trace: list | None = None) -> np.ndarray:
    """Adapt a copy of the network on the self-supervised replay loss and predict.

    The loss is the replay cost of the network's mean prediction over the
    reference features. Its gradient with respect to the prediction comes from
    central finite differences through the simulator; backpropagating that
    through the network (straight through the unit-cube clamp) gives the
    parameter gradient for each inner step. The replay cost is rugged for
    chaotic systems, so the iterate with the lowest observed cost is returned.
    ``trace``, if given, receives the cost at every iterate.
    """
    if k_steps < 0:
        raise RangeError("k_steps must be non-negative")
    fspec = FeatureSpec(tau_ref[0].state_dim, tau_ref[0].action_dim)
    x = _t(model.standardize(np.stack([featurize(t, fspec) for t in tau_ref])))
    params = [p.detach().clone() for p in model.net.params]
    with torch.no_grad():
        best = np.clip(model.net.forward(x, params).mean(dim=0).numpy(), 0.0, 1.0)
    if k_steps == 0:
        return best
    if cost is None:
        cost = ReplayCost(tau_ref[0].env_id, tau_ref)
    best_cost = np.inf
    for step in range(k_steps + 1):
        live = [p.clone().requires_grad_(True) for p in params]
        pred = model.net.forward(x, live).mean(dim=0)
        theta = np.clip(pred.detach().numpy(), 0.0, 1.0)
        value, g = cost.fd_gradient(theta, fd_step)
        if trace is not None:
            trace.append(value)
        if value < best_cost:
            best_cost, best = value, theta
        if step == k_steps or not np.all(np.isfinite(g)):
            break
        grads = torch.autograd.grad(pred, live, grad_outputs=_t(g))
        params = [p - model.inner_lr * gr for p, gr in zip(params, grads)]
    return best
