"""Reward signals: replay discrepancy and a learned trajectory discriminator."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
import torch

from simcal.core import Trajectory
from simcal.errors import EmptyInputError, ShapeError
from simcal.estimators.costs import ReplayCost
from simcal.estimators.features import FeatureSpec, featurize
from simcal.estimators.simdata import simulate_thetas
from simcal.numkit.mlp import DTYPE, Mlp, OptimizerState, opt_step

REWARD_FORMS = ("log-d", "neg-log-one-minus-d")
INPUT_MODES = ("trajectory", "transition")


def discrepancy_reward(env_id: str, tau_ref: Sequence[Trajectory]):
    """Negative replay cost as a batched reward over parameter rows."""
    cost = ReplayCost(env_id, tau_ref)

    def reward(thetas):
        return -cost(thetas)

    return reward


class Discriminator:
    """Binary classifier giving the probability that a trajectory came from the reference source.

    ``mode="trajectory"`` classifies whole-trajectory features;
    ``mode="transition"`` classifies individual ``(s, a, s')`` rows and
    averages their log-probabilities per trajectory.
    """

    def __init__(self, state_dim: int, action_dim: int, hidden=(32, 32), lr: float = 0.001, seed: int = 0,
                 mode: str = "trajectory", reward_form: str = "log-d", label_smoothing: float = 0.0,
                 in_mean=None, in_scale=None):
        if mode not in INPUT_MODES:
            raise ValueError(f"mode must be one of {INPUT_MODES}")
        if reward_form not in REWARD_FORMS:
            raise ValueError(f"reward_form must be one of {REWARD_FORMS}")
        self.fspec = FeatureSpec(state_dim, action_dim)
        self.mode = mode
        in_dim = self.fspec.length if mode == "trajectory" else 2 * state_dim + action_dim
        self.net = Mlp([in_dim, *hidden, 1], activation="tanh", seed=seed)
        self.lr = lr
        self.reward_form = reward_form
        self.label_smoothing = label_smoothing
        self.in_mean = np.zeros(in_dim) if in_mean is None else np.asarray(in_mean, dtype=float)
        self.in_scale = np.ones(in_dim) if in_scale is None else np.asarray(in_scale, dtype=float)
        self.opt_state = OptimizerState()
        self.n_steps = 0

    @property
    def in_dim(self) -> int:
        return self.net.in_dim

    def inputs(self, taus: Sequence[Trajectory]) -> tuple[np.ndarray, np.ndarray]:
        """Standardized input rows and, per row, the index of its trajectory."""
        rows, owner = [], []
        for i, t in enumerate(taus):
            if t.state_dim != self.fspec.state_dim or t.action_dim != self.fspec.action_dim:
                raise ShapeError(
                    f"discriminator expects dims ({self.fspec.state_dim}, {self.fspec.action_dim}), "
                    f"got ({t.state_dim}, {t.action_dim})"
                )
            if self.mode == "trajectory":
                r = featurize(t, self.fspec)[None]
            else:
                r = np.concatenate([t.states[:-1], t.actions, t.states[1:]], axis=1)
            rows.append(r)
            owner.append(np.full(r.shape[0], i))
        x = (np.vstack(rows) - self.in_mean) / self.in_scale
        return x, np.concatenate(owner)

    def logits(self, x, params=None) -> torch.Tensor:
        return self.net.forward(torch.as_tensor(np.asarray(x, dtype=float), dtype=DTYPE), params)[:, 0]

    def loss(self, params, x_ref, x_sim) -> torch.Tensor:
        """Binary cross-entropy with each class weighted equally."""
        pos = 1.0 - self.label_smoothing
        neg = self.label_smoothing
        lr_ = self.logits(x_ref, params)
        ls_ = self.logits(x_sim, params)
        bce = torch.nn.functional.binary_cross_entropy_with_logits
        return 0.5 * (bce(lr_, torch.full_like(lr_, pos)) + bce(ls_, torch.full_like(ls_, neg)))

    def prob(self, taus: Sequence[Trajectory]) -> np.ndarray:
        """Per-trajectory D; in transition mode the geometric mean over rows."""
        x, owner = self.inputs(taus)
        with torch.no_grad():
            logp = torch.nn.functional.logsigmoid(self.logits(x)).numpy()
        per = np.array([logp[owner == i].mean() for i in range(len(taus))])
        return np.exp(per)

    def log_prob(self, taus: Sequence[Trajectory]) -> np.ndarray:
        x, owner = self.inputs(taus)
        with torch.no_grad():
            lg = self.logits(x)
            logp = torch.nn.functional.logsigmoid(lg).numpy()
            log1m = torch.nn.functional.logsigmoid(-lg).numpy()
        return (np.array([logp[owner == i].mean() for i in range(len(taus))]),
                np.array([log1m[owner == i].mean() for i in range(len(taus))]))


def disc_train_step(disc: Discriminator, ref_batch: Sequence[Trajectory], sim_batch: Sequence[Trajectory]) -> float:
    """One Adam step on the balanced cross-entropy; returns the loss after the step."""
    if not ref_batch or not sim_batch:
        raise EmptyInputError("both discriminator batches must be non-empty")
    x_ref, _ = disc.inputs(ref_batch)
    x_sim, _ = disc.inputs(sim_batch)
    params = [p.detach().requires_grad_(True) for p in disc.net.params]
    value = disc.loss(params, x_ref, x_sim)
    grads = torch.autograd.grad(value, params)
    with torch.no_grad():
        disc.net.params = [p.detach() for p in opt_step(params, list(grads), "adam", disc.lr, disc.opt_state)]
        disc.n_steps += 1
        return float(disc.loss(disc.net.params, x_ref, x_sim))


def reward_from_d(d: float, form: str = "log-d") -> float:
    if form == "log-d":
        return math.log(d) if d > 0 else -math.inf
    if form == "neg-log-one-minus-d":
        return -math.log1p(-d) if d < 1 else math.inf
    raise ValueError(f"reward form must be one of {REWARD_FORMS}")


def learned_reward(disc: Discriminator, tau_sim: Trajectory) -> float:
    """``log D(tau)`` (or ``-log(1 - D)`` when configured): higher when the simulated trajectory looks real."""
    if disc.n_steps < 1:
        raise EmptyInputError("discriminator must be trained at least once before giving rewards")
    logp, log1m = disc.log_prob([tau_sim])
    if disc.reward_form == "log-d":
        return float(logp[0])
    return float(-log1m[0])


class LearnedRewardFn:
    """Batched reward over parameter rows: simulate, then score with a discriminator trained online.

    Simulated trajectories start from the canonical start distribution and
    are driven by ``source`` (the exciter by default), so they need not share
    start states or actions with the references. Each call first takes
    ``disc_steps`` training steps against the latest simulated batch.
    """

    def __init__(self, env_id: str, tau_ref: Sequence[Trajectory], source="exciter", seed: int = 0,
                 disc_steps: int = 1, **disc_kw):
        self.env_id = env_id
        self.tau_ref = list(tau_ref)
        self.source = source
        self.seed = seed
        self.calls = 0
        self.disc_steps = disc_steps
        t0 = self.tau_ref[0]
        feats = np.stack([featurize(t, FeatureSpec(t0.state_dim, t0.action_dim)) for t in self.tau_ref])
        scale = np.maximum(feats.std(axis=0), 1e-3 * (np.abs(feats).mean(axis=0) + 1.0))
        kw = dict(in_mean=feats.mean(axis=0), in_scale=scale) if disc_kw.get("mode", "trajectory") == "trajectory" else {}
        kw.update(disc_kw)
        self.disc = Discriminator(t0.state_dim, t0.action_dim, seed=seed, **kw)

    def __call__(self, thetas) -> np.ndarray:
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        batch = simulate_thetas(self.env_id, thetas, seed=self.seed * 100003 + self.calls, source=self.source)
        self.calls += 1
        sims = batch.trajectories()
        if sims:
            for _ in range(self.disc_steps):
                disc_train_step(self.disc, self.tau_ref, sims)
        out = np.full(thetas.shape[0], -np.inf)
        if sims:
            alive = np.ones(thetas.shape[0], bool) if batch.n_failed == 0 else _alive_rows(thetas, batch.thetas)
            logp, log1m = self.disc.log_prob(sims)
            out[alive] = logp if self.disc.reward_form == "log-d" else -log1m
        return out


def _alive_rows(requested: np.ndarray, kept: np.ndarray) -> np.ndarray:
    alive = np.zeros(requested.shape[0], bool)
    j = 0
    for i, row in enumerate(requested):
        if j < kept.shape[0] and np.array_equal(row, kept[j]):
            alive[i] = True
            j += 1
    return alive
