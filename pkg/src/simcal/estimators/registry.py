"""Uniform entry point over every calibrator, used by the harness."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from simcal.errors import ConfigError
from simcal.estimators.adr import adr_calibrate, log_cost_reward
from simcal.estimators.bayesopt import bayesopt_calibrate
from simcal.estimators.bayessim import bayessim_train, posterior
from simcal.estimators.costs import ReplayCost
from simcal.estimators.maml import maml_adapt, maml_train_env
from simcal.estimators.regression import regress_fit, regress_predict_many, regress_refine
from simcal.estimators.simdata import simulate_prior
from simcal.estimators.simopt import simopt_calibrate
from simcal.numkit.mdn import MixtureDensity
from simcal.rewardlab import LearnedRewardFn
from simcal.simenv import get_spec

POINT, PARTICLES, POSTERIOR = "point", "particles", "posterior"


@dataclass
class Estimate:
    """What a calibrator proposes.

    ``theta`` is the point estimate (for particle sets, the best particle).
    Particle estimators also fill ``mean_theta`` and ``particles``; posterior
    estimators fill ``mixture``.
    """

    kind: str
    theta: np.ndarray
    mean_theta: np.ndarray | None = None
    particles: np.ndarray | None = None
    mixture: MixtureDensity | None = None
    diagnostics: dict = field(default_factory=dict)

    def transfer_source(self):
        if self.kind == PARTICLES:
            return self.particles
        if self.kind == POSTERIOR:
            return self.mixture
        return self.theta


@dataclass(frozen=True)
class EstimatorInfo:
    run: Callable
    defaults: dict
    kind: str
    learned_rewards: bool = False
    needs_truth: bool = False


def _source(tau_ref, name: str):
    if name == "replay":
        return tau_ref
    if name == "exciter":
        return "exciter"
    raise ConfigError(f"training source must be 'replay' or 'exciter', got {name!r}")


def run_regression(env_id, tau_ref, seed, cfg, **_):
    data = simulate_prior(env_id, cfg["n_sims"], seed, _source(tau_ref, cfg["source"]))
    model = regress_fit(data.pairs(), cfg["epochs"], cfg["batch_size"], cfg["lr"], seed)
    supervised = regress_predict_many(model, tau_ref)
    history = []
    if cfg["refine_steps"] > 0:
        model, history = regress_refine(model, tau_ref, ReplayCost(env_id, tau_ref), cfg["refine_steps"], cfg["refine_lr"])
    theta = regress_predict_many(model, tau_ref)
    return Estimate(POINT, theta, diagnostics={
        "train_loss": model.losses[-1] if model.losses else None,
        "supervised_theta": supervised.tolist(),
        "refine_costs": history,
    })


def run_bayesopt(env_id, tau_ref, seed, cfg, **_):
    theta, history = bayesopt_calibrate(env_id, tau_ref, cfg["evaluations"], seed, kappa=cfg["kappa"],
                                        xi=cfg["xi"], n_init=cfg["n_init"])
    costs = [c for _, c in history]
    return Estimate(POINT, theta, diagnostics={"incumbent": np.minimum.accumulate(costs).tolist()})


def run_maml(env_id, tau_ref, seed, cfg, **_):
    model = maml_train_env(env_id, cfg["n_settings"], cfg["meta_iters"], cfg["tasks_per_batch"], cfg["k_inner"],
                           seed, _source(tau_ref, cfg["source"]), inner_lr=cfg["lr"], outer_lr=cfg["lr"],
                           hidden=tuple(cfg["hidden"]))
    trace: list = []
    theta = maml_adapt(model, tau_ref, cfg["adapt_steps"], trace=trace)
    return Estimate(POINT, theta, diagnostics={"meta_loss_last": model.losses[-1] if model.losses else None,
                                               "adapt_costs": trace})


def _learned_reward(env_id, tau_ref, seed, cfg):
    return LearnedRewardFn(env_id, tau_ref, seed=seed, disc_steps=cfg["disc_steps"], lr=cfg["disc_lr"],
                           reward_form=cfg["reward_form"], mode=cfg["disc_mode"])


def run_simopt(env_id, tau_ref, seed, cfg, reward_mode="mse", **_):
    cost_fn = None
    if reward_mode == "learned":
        reward = _learned_reward(env_id, tau_ref, seed, cfg)
        cost_fn = lambda th: -reward(th)  # noqa: E731
    ps, dist = simopt_calibrate(env_id, tau_ref, cfg["iters"], cfg["n_particles"], cost_fn, seed,
                                epsilon=cfg["epsilon"], init_mean_high=cfg["init_mean_high"], init_var=cfg["init_var"])
    return Estimate(PARTICLES, ps.best(), ps.mean(), ps.particles.copy(), diagnostics={
        "mean_costs": ps.history, "dist_mean": dist.mean.tolist(), "dist_var": dist.var.tolist(),
    })


def run_adr(env_id, tau_ref, seed, cfg, reward_mode="mse", **_):
    if reward_mode == "learned":
        reward = _learned_reward(env_id, tau_ref, seed, cfg)
    else:
        reward = log_cost_reward(ReplayCost(env_id, tau_ref))
    ps = adr_calibrate(env_id, tau_ref, cfg["iters"], cfg["n_particles"], reward, seed, step_size=cfg["step_size"],
                       sigma=cfg["sigma"], n_pairs=cfg["n_pairs"], temperature=cfg["temperature"],
                       standardize=cfg["standardize"])
    return Estimate(PARTICLES, ps.best(), ps.mean(), ps.particles.copy(), diagnostics={"mean_rewards": ps.history})


def run_bayessim(env_id, tau_ref, seed, cfg, **_):
    model = bayessim_train(env_id, cfg["n_sims"], _source(tau_ref, cfg["source"]), seed,
                           n_components=cfg["n_components"], hidden=tuple(cfg["hidden"]), epochs=cfg["epochs"],
                           lr=cfg["lr"])
    mix = posterior(model, tau_ref, cfg["pooling"])
    mean = np.clip(mix.mean(), 0.0, 1.0)
    return Estimate(POSTERIOR, mean, mean, mixture=mix, diagnostics={"nll": [model.losses[0], model.losses[-1]],
                                                                     "n_failed": model.n_failed})


def run_true_theta(env_id, tau_ref, seed, cfg, truth=None, **_):
    return Estimate(POINT, np.clip(np.asarray(truth, dtype=float), 0.0, 1.0))


def run_uniform_random(env_id, tau_ref, seed, cfg, **_):
    rng = np.random.default_rng([seed, 41])
    dim = get_spec(env_id).dim
    if cfg["particles"] > 0:
        parts = rng.uniform(0.0, 1.0, size=(cfg["particles"], dim))
        return Estimate(PARTICLES, parts[0], parts.mean(axis=0), parts)
    return Estimate(POINT, rng.uniform(0.0, 1.0, size=dim))


def run_constant(env_id, tau_ref, seed, cfg, **_):
    return Estimate(POINT, np.full(get_spec(env_id).dim, float(cfg["value"])))


ESTIMATORS: dict[str, EstimatorInfo] = {
    "regression": EstimatorInfo(run_regression, {
        "n_sims": 200, "epochs": 100, "batch_size": 320, "lr": 0.001, "source": "replay",
        "refine_steps": 30, "refine_lr": 0.02,
    }, POINT),
    "bayesopt": EstimatorInfo(run_bayesopt, {"evaluations": 60, "kappa": 2.5, "xi": 0.0, "n_init": 5}, POINT),
    "maml": EstimatorInfo(run_maml, {
        "n_settings": 200, "meta_iters": 300, "tasks_per_batch": 10, "k_inner": 1, "lr": 0.005,
        "hidden": [60, 60], "adapt_steps": 5, "source": "replay",
    }, POINT),
    "simopt": EstimatorInfo(run_simopt, {
        "iters": 12, "n_particles": 6, "epsilon": 0.5, "init_mean_high": 0.5, "init_var": 0.2,
        "disc_steps": 1, "disc_lr": 0.001, "reward_form": "log-d", "disc_mode": "trajectory",
    }, PARTICLES, learned_rewards=True),
    "adr": EstimatorInfo(run_adr, {
        "iters": 40, "n_particles": 10, "step_size": 0.05, "sigma": 0.05, "n_pairs": 8, "temperature": 1.0,
        "standardize": False, "disc_steps": 1, "disc_lr": 0.001, "reward_form": "log-d", "disc_mode": "trajectory",
    }, PARTICLES, learned_rewards=True),
    "bayessim": EstimatorInfo(run_bayessim, {
        "n_sims": 1000, "n_components": 5, "hidden": [64, 64], "epochs": 1500, "lr": 0.005,
        "source": "replay", "pooling": "mean-feature",
    }, POSTERIOR),
    "true-theta": EstimatorInfo(run_true_theta, {}, POINT, needs_truth=True),
    "uniform-random": EstimatorInfo(run_uniform_random, {"particles": 0}, POINT),
    "constant": EstimatorInfo(run_constant, {"value": 0.5}, POINT),
}

BENCHMARK_ESTIMATORS = ("regression", "bayesopt", "maml", "simopt", "adr")


def estimator_config(name: str, overrides: dict | None = None) -> dict:
    if name not in ESTIMATORS:
        raise ConfigError(f"unknown estimator {name!r}; known: {sorted(ESTIMATORS)}")
    cfg = dict(ESTIMATORS[name].defaults)
    for key, value in (overrides or {}).items():
        if key not in cfg:
            raise ConfigError(f"estimator {name!r} has no setting {key!r}; valid: {sorted(cfg)}")
        cfg[key] = value
    return cfg


def run_estimator(name: str, env_id: str, tau_ref, seed: int, overrides: dict | None = None, *,
                  reward_mode: str = "mse", truth=None) -> Estimate:
    info = ESTIMATORS.get(name)
    cfg = estimator_config(name, overrides)
    if reward_mode not in ("mse", "learned"):
        raise ConfigError(f"reward mode must be 'mse' or 'learned', got {reward_mode!r}")
    if reward_mode == "learned" and not info.learned_rewards:
        raise ConfigError(f"estimator {name!r} does not support learned rewards")
    return info.run(env_id, tau_ref, seed, cfg, reward_mode=reward_mode, truth=truth)
