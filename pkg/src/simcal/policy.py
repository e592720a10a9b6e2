"""Linear feedback policies trained by the cross-entropy method, and zero-shot transfer scoring."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from simcal.errors import NumericError, ShapeError
from simcal.numkit import container
from simcal.numkit.mdn import MixtureDensity, mdn_sample
from simcal.simenv import SimModel, get_spec, make_env, rollout_batch, step_rewards

DENOMINATOR_GUARD = 1e-9
CONVERGED_FRACTION = 0.8


@dataclass(frozen=True, eq=False)
class LinearPolicy:
    """``u = clip(gain @ s + bias, low, high)``."""

    gain: np.ndarray
    bias: np.ndarray
    low: float = -np.inf
    high: float = np.inf

    def __post_init__(self):
        gain = np.atleast_2d(np.asarray(self.gain, dtype=float)).copy()
        bias = np.asarray(self.bias, dtype=float).reshape(-1).copy()
        if gain.shape[0] != bias.shape[0]:
            raise ShapeError(f"gain {gain.shape} and bias {bias.shape} disagree on action dim")
        if not (np.all(np.isfinite(gain)) and np.all(np.isfinite(bias))):
            raise NumericError("policy entries must be finite")
        gain.setflags(write=False)
        bias.setflags(write=False)
        object.__setattr__(self, "gain", gain)
        object.__setattr__(self, "bias", bias)

    @property
    def action_dim(self) -> int:
        return self.gain.shape[0]

    @property
    def state_dim(self) -> int:
        return self.gain.shape[1]

    def act(self, state) -> np.ndarray:
        return np.clip(self.gain @ np.asarray(state, dtype=float) + self.bias, self.low, self.high)

    def flat(self) -> np.ndarray:
        return np.concatenate([self.gain.ravel(), self.bias])

    @classmethod
    def from_flat(cls, vec, action_dim: int, state_dim: int, low=-np.inf, high=np.inf) -> "LinearPolicy":
        vec = np.asarray(vec, dtype=float)
        n = action_dim * state_dim
        return cls(vec[:n].reshape(action_dim, state_dim), vec[n:], low, high)

    @classmethod
    def zeros(cls, env_id: str) -> "LinearPolicy":
        spec = get_spec(env_id)
        return cls(np.zeros((spec.action_dim, spec.state_dim)), np.zeros(spec.action_dim), *spec.action_bounds)

    def save(self, path, meta: dict | None = None) -> None:
        container.save(path, {"gain": self.gain, "bias": self.bias},
                       {"kind": "linear-policy", "low": self.low, "high": self.high, **(meta or {})})

    @classmethod
    def load(cls, path) -> "LinearPolicy":
        arrays, meta = container.load(path)
        return cls(arrays["gain"], arrays["bias"], meta["low"], meta["high"])


@dataclass(frozen=True)
class CemConfig:
    population: int = 64
    elites: int = 8
    iterations: int = 30
    init_std: float = 0.5
    std_floor: float = 0.02
    episodes_per_candidate: int = 2
    validation_episodes: int = 8
    horizon: int | None = None

    def __post_init__(self):
        if not 0 < self.elites < self.population:
            raise ValueError("need 0 < elites < population")
        if not self.std_floor > 0:
            raise ValueError("std floor must be positive")
        if self.episodes_per_candidate < 1 or self.validation_episodes < 1:
            raise ValueError("need at least one episode per evaluation")


def evaluate_policies(models: list[SimModel], episode_index: list[int], flats: np.ndarray, horizon: int) -> np.ndarray:
    """Mean return of each flat policy over the given ``(model, start index)`` episodes. Shape ``(P,)``.

    Flat vectors are ``[gain.ravel(), bias]`` in physical units.
    """
    spec = models[0].spec
    p, e = flats.shape[0], len(models)
    a_dim, s_dim = spec.action_dim, spec.state_dim
    gains = flats[:, : a_dim * s_dim].reshape(p, a_dim, s_dim)
    bias = flats[:, a_dim * s_dim :]
    params = np.stack([m.physical for m in models])
    starts = np.stack([m.start_state(i) for m, i in zip(models, episode_index)])
    rep_params = np.tile(params, (p, 1))
    rep_starts = np.tile(starts, (p, 1))
    rep_gains = np.repeat(gains, e, axis=0)
    ff = np.broadcast_to(np.repeat(bias, e, axis=0)[:, None, :], (p * e, horizon, a_dim))
    states, actions, finite = rollout_batch(spec, rep_params, rep_starts, ff, rep_gains, physical=True)
    with np.errstate(all="ignore"):
        returns = step_rewards(states, actions, spec.reward_fn_id).sum(axis=1)
    returns = np.where(finite & np.isfinite(returns), returns, -np.inf)
    return returns.reshape(p, e).mean(axis=1)


def _episodes(env_sampler: Callable[[int], SimModel], seeds) -> tuple[list[SimModel], list[int]]:
    models = [env_sampler(int(s)) for s in seeds]
    return models, [0] * len(models)


def cem_train(env_sampler: Callable[[int], SimModel], cfg: CemConfig = CemConfig(), seed: int = 0):
    """Cross-entropy search over linear policies.

    Every iteration samples ``cfg.episodes_per_candidate`` fresh environments
    shared by the whole population. The distribution mean is then scored on a
    fixed validation set; the returned policy is the best validated mean and
    the returned curve is its best-so-far validation return per iteration
    (iteration 0 is the initial mean).
    """
    probe = env_sampler(int(np.random.default_rng([seed, 99]).integers(2**31)))
    spec = probe.spec
    horizon = spec.horizon if cfg.horizon is None else cfg.horizon
    dim = spec.action_dim * (spec.state_dim + 1)
    rng = np.random.default_rng(seed)
    val_seeds = np.random.default_rng([seed, 1]).integers(0, 2**31, size=cfg.validation_episodes)
    val_models, val_idx = _episodes(env_sampler, val_seeds)
    # search in units of the action bound so one config suits every environment
    unit = spec.action_high
    mean = np.zeros(dim)
    std = np.full(dim, cfg.init_std)
    best_flat = mean.copy()
    best = float(evaluate_policies(val_models, val_idx, unit * mean[None], horizon)[0])
    curve = [best]
    for _ in range(cfg.iterations):
        cand = mean + std * rng.standard_normal((cfg.population, dim))
        ep_seeds = rng.integers(0, 2**31, size=cfg.episodes_per_candidate)
        models, idx = _episodes(env_sampler, ep_seeds)
        scores = evaluate_policies(models, idx, unit * cand, horizon)
        if not np.any(np.isfinite(scores)):
            raise NumericError("every CEM candidate produced a non-finite return")
        elite = cand[np.argsort(-scores, kind="stable")[: cfg.elites]]
        mean = elite.mean(axis=0)
        std = np.maximum(elite.std(axis=0), cfg.std_floor)
        val = float(evaluate_policies(val_models, val_idx, unit * mean[None], horizon)[0])
        if val > best:
            best, best_flat = val, mean.copy()
        curve.append(best)
    policy = LinearPolicy.from_flat(unit * best_flat, spec.action_dim, spec.state_dim, *spec.action_bounds)
    return policy, curve


def random_policy_returns(env_sampler, n: int = 100, std: float = 0.5, seed: int = 0, episodes: int = 2,
                          horizon: int | None = None) -> np.ndarray:
    probe = env_sampler(0)
    spec = probe.spec
    h = spec.horizon if horizon is None else horizon
    dim = spec.action_dim * (spec.state_dim + 1)
    rng = np.random.default_rng([seed, 17])
    flats = spec.action_high * std * rng.standard_normal((n, dim))
    models, idx = _episodes(env_sampler, rng.integers(0, 2**31, size=episodes))
    return evaluate_policies(models, idx, flats, h)


def estimate_sampler(env_id: str, estimate, physical: bool = False) -> Callable[[int], SimModel]:
    """Environment sampler for an estimate.

    A 1-D vector proposes a single environment; a 2-D array of particles is
    sampled uniformly per episode; a :class:`MixtureDensity` is sampled per
    episode. ``physical`` marks a 1-D vector given in physical units.
    """
    if isinstance(estimate, MixtureDensity):
        def sample(s: int) -> SimModel:
            return make_env(env_id, mdn_sample(estimate, 1, seed=s)[0], seed=s)
        return sample
    arr = np.asarray(estimate, dtype=float)
    if arr.ndim == 1:
        theta = np.clip(arr, 0, 1) if not physical else np.zeros_like(arr)
        return lambda s: make_env(env_id, theta, seed=s, physical=arr if physical else None)
    if arr.ndim == 2:
        def sample(s: int) -> SimModel:
            pick = np.random.default_rng([s, 23]).integers(arr.shape[0])
            return make_env(env_id, np.clip(arr[pick], 0, 1), seed=s)
        return sample
    raise ShapeError(f"cannot build an environment sampler from an estimate of shape {arr.shape}")


def policy_converged(best_return: float, reference_return: float, shift: float,
                     fraction: float = CONVERGED_FRACTION) -> bool:
    """Convergence filter for a policy-training trial.

    A trial counts as converged when its best (shifted) validation return
    reaches ``fraction`` of the shifted return that the same training
    procedure achieves on the fixed target environment.
    """
    ref = reference_return + shift
    if not ref > DENOMINATOR_GUARD:
        return False
    return bool(best_return + shift >= fraction * ref)


@dataclass
class TransferResult:
    score: float
    source_return: float
    target_return: float
    shift: float
    curves: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return policy_converged(self.curves["source"][-1], self.curves["target"][-1], self.shift)


def transfer_evaluate(env_id: str, theta_source, target_theta, cfg: CemConfig = CemConfig(), seed: int = 0,
                      *, n_eval: int = 16, target_physical: bool = False) -> TransferResult:
    """Train on the source estimate and on the target, evaluate both on the target.

    Both trainings use the same CEM seed (common random numbers) so that an
    exact estimate reproduces the target-trained policy. Returns are shifted
    by the environment's per-step shift times the horizon before the ratio.
    """
    spec = get_spec(env_id)
    horizon = spec.horizon if cfg.horizon is None else cfg.horizon
    src_policy, src_curve = cem_train(estimate_sampler(env_id, theta_source), cfg, seed)
    tgt_sampler = estimate_sampler(env_id, target_theta, physical=target_physical)
    tgt_policy, tgt_curve = cem_train(tgt_sampler, cfg, seed)
    eval_seeds = np.random.default_rng([seed, 31]).integers(0, 2**31, size=n_eval)
    models, idx = _episodes(tgt_sampler, eval_seeds)
    r_src, r_tgt = evaluate_policies(models, idx, np.stack([src_policy.flat(), tgt_policy.flat()]), horizon)
    shift = spec.return_shift / spec.horizon * horizon
    denom = r_tgt + shift
    if not denom > DENOMINATOR_GUARD:
        raise ZeroDivisionError(
            f"shifted target return {denom!r} is not positive; cannot normalize (horizon {horizon})"
        )
    return TransferResult(float((r_src + shift) / denom), float(r_src), float(r_tgt), float(shift),
                          {"source": src_curve, "target": tgt_curve})


def transfer_score(theta_source, env_id: str, target_theta, cfg: CemConfig = CemConfig(), seed: int = 0,
                   **kw) -> float:
    """Normalized return of a source-trained policy relative to a target-trained one."""
    return transfer_evaluate(env_id, theta_source, target_theta, cfg, seed, **kw).score
