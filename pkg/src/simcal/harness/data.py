"""Reference/validation/test datasets and their line-delimited file format."""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from simcal.core import ParameterSpace, Trajectory, normalize
from simcal.errors import DependencyError, ShapeError
from simcal.policy import CemConfig, LinearPolicy, cem_train, estimate_sampler
from simcal.simenv import exciter_actions, get_spec, make_env, rollout_batch

FORMAT_VERSION = 1
SPLITS = ("reference", "validation", "test")
VARIANTS = ("default", "in_distribution", "out_of_distribution")
SOURCES = ("exciter", "demonstrations", "learned_policy")
# out-of-distribution components land this far past the top of their range (normalized units)
OOD_RANGE = (1.15, 1.4)
IN_DIST_RANGE = (0.1, 0.9)
DEMO_NOISE = 0.1
MAX_TRAJ = 10_000


@dataclass
class Dataset:
    env_id: str
    split: str
    variant: str
    trajectories: list
    true_theta_physical: np.ndarray
    param_space: ParameterSpace
    source: str = "exciter"
    seeds: tuple = ()

    @property
    def true_theta(self) -> np.ndarray:
        """Normalized truth; may leave ``[0, 1]`` for the out-of-distribution variant."""
        return normalize(self.true_theta_physical, self.param_space, allow_out_of_range=True)

    def header(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "env_id": self.env_id,
            "split": self.split,
            "variant": self.variant,
            "param_space": self.param_space.to_dict(),
            "true_theta_physical": [float(x) for x in self.true_theta_physical],
            "n_traj": len(self.trajectories),
        }


def sub_seed(seed: int, split: str, variant: str, i: int) -> int:
    if not 0 <= i < MAX_TRAJ:
        raise ValueError(f"trajectory index must be in [0, {MAX_TRAJ})")
    return seed * 1_000_000 + SPLITS.index(split) * 100_000 + VARIANTS.index(variant) * 10_000 + i


def variant_theta(env_id: str, variant: str, seed: int, theta=None) -> np.ndarray:
    """True parameters of a variant in physical units.

    The draw depends only on (env, variant, seed), so all three splits of a
    variant share one environment.
    """
    spec = get_spec(env_id)
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
    rng = np.random.default_rng([seed, VARIANTS.index(variant), zlib.crc32(env_id.encode())])
    if variant == "default":
        norm = np.asarray(spec.default_theta if theta is None else theta, dtype=float)
    elif variant == "in_distribution":
        norm = rng.uniform(*IN_DIST_RANGE, size=spec.dim)
    else:
        norm = rng.uniform(*IN_DIST_RANGE, size=spec.dim)
        outside = rng.random(spec.dim) < 0.5
        outside[rng.integers(spec.dim)] = True
        norm[outside] = rng.uniform(*OOD_RANGE, size=int(outside.sum()))
    return spec.space.low + norm * (spec.space.high - spec.space.low)


def policy_path(policy_dir, env_id: str, kind: str) -> Path:
    return Path(policy_dir) / f"{env_id}.{kind}.ckpt"


def train_policies(env_id: str, policy_dir, seed: int = 0, cfg: CemConfig = CemConfig()) -> dict:
    """Train and checkpoint the expert (default parameters) and domain-randomized CEM policies."""
    spec = get_spec(env_id)
    out = {}
    expert, curve = cem_train(estimate_sampler(env_id, np.asarray(spec.default_theta)), cfg, seed)
    rng = np.random.default_rng([seed, 61])
    prior = rng.uniform(0.0, 1.0, size=(64, spec.dim))
    randomized, rcurve = cem_train(estimate_sampler(env_id, prior), cfg, seed)
    Path(policy_dir).mkdir(parents=True, exist_ok=True)
    for kind, pol, c in (("expert", expert, curve), ("randomized", randomized, rcurve)):
        path = policy_path(policy_dir, env_id, kind)
        pol.save(path, {"env_id": env_id, "seed": seed, "best_return": c[-1]})
        out[kind] = path
    return out


def _load_policy(policy_dir, env_id: str, kind: str) -> LinearPolicy:
    path = None if policy_dir is None else policy_path(policy_dir, env_id, kind)
    if path is None or not path.exists():
        raise DependencyError(
            f"no {kind} policy checkpoint for {env_id!r} (looked for {path}); run `simcal train-policy` first"
        )
    return LinearPolicy.load(path)


def gen_data(env_id: str, variant: str, split: str, n_traj: int, policy_source: str = "exciter", seed: int = 0,
             *, theta=None, policy_dir=None, path=None) -> Dataset:
    """Roll out ``n_traj`` reference trajectories of one split, each from its own sub-seed.

    ``exciter`` drives the scripted excitation signal; ``demonstrations``
    replays the expert CEM policy with small action noise; ``learned_policy``
    uses the domain-randomized CEM policy. Both policy sources need
    checkpoints from ``train-policy``.
    """
    spec = get_spec(env_id)
    if split not in SPLITS:
        raise ValueError(f"split must be one of {SPLITS}, got {split!r}")
    if policy_source not in SOURCES:
        raise ValueError(f"policy source must be one of {SOURCES}, got {policy_source!r}")
    if n_traj < 1:
        raise ValueError("n_traj must be positive")
    phys = variant_theta(env_id, variant, seed, theta)
    policy = None
    if policy_source == "demonstrations":
        policy = _load_policy(policy_dir, env_id, "expert")
    elif policy_source == "learned_policy":
        policy = _load_policy(policy_dir, env_id, "randomized")
    seeds = [sub_seed(seed, split, variant, i) for i in range(n_traj)]
    trajs = []
    for s in seeds:
        model = make_env(env_id, np.zeros(spec.dim), seed=s, physical=phys)
        start = model.start_state(0)
        if policy is None:
            ff, gains = exciter_actions(env_id), None
        else:
            noise = DEMO_NOISE * spec.action_high * np.random.default_rng([s, 13]).standard_normal(
                (spec.horizon, spec.action_dim))
            ff = policy.bias[None] + (noise if policy_source == "demonstrations" else 0.0)
            ff = np.broadcast_to(ff, (spec.horizon, spec.action_dim))
            gains = policy.gain
        states, actions, finite = rollout_batch(spec, phys, start, ff, gains, physical=True)
        if not finite[0]:
            raise ShapeError(f"{env_id} reference rollout diverged at sub-seed {s}")
        trajs.append(Trajectory(env_id, start, states[0], actions[0], "reference", s))
    ds = Dataset(env_id, split, variant, trajs, phys, spec.space, policy_source, tuple(seeds))
    if path is not None:
        write_dataset(ds, path)
    return ds


def _fmt(x) -> str:
    x = float(x)
    if not math.isfinite(x):
        raise ValueError("dataset values must be finite")
    return "%.17g" % x


def _encode(obj) -> str:
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(_encode(v) for v in obj) + "]"
    if isinstance(obj, dict):
        return "{" + ",".join(f"{json.dumps(str(k))}:{_encode(v)}" for k, v in obj.items()) + "}"
    raise TypeError(f"cannot encode {type(obj).__name__}")


def dumps_dataset(ds: Dataset) -> str:
    lines = [_encode(ds.header())]
    for t in ds.trajectories:
        lines.append(_encode({
            "start_state": t.start_state,
            "states": t.states,
            "actions": t.actions,
            "source": ds.source,
            "seed": int(t.seed),
        }))
    return "\n".join(lines) + "\n"


def write_dataset(ds: Dataset, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_dataset(ds))
    return path


def loads_dataset(text: str) -> Dataset:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty dataset file")
    head = json.loads(lines[0])
    if head.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported dataset format version {head.get('format_version')!r}")
    records = [json.loads(ln) for ln in lines[1:]]
    if len(records) != head["n_traj"]:
        raise ValueError(f"header promises {head['n_traj']} trajectories, file holds {len(records)}")
    env_id = head["env_id"]
    get_spec(env_id)
    trajs = [
        Trajectory(env_id, r["start_state"], r["states"], r["actions"], "reference", r["seed"])
        for r in records
    ]
    source = records[0]["source"] if records else "exciter"
    return Dataset(env_id, head["split"], head["variant"], trajs, np.asarray(head["true_theta_physical"], dtype=float),
                   ParameterSpace.from_dict(head["param_space"]), source, tuple(r["seed"] for r in records))


def load_dataset(path) -> Dataset:
    path = Path(path)
    if not path.exists():
        raise DependencyError(f"dataset {path} is missing; run `simcal gen-data` first")
    return loads_dataset(path.read_text())


def dataset_path(data_dir, env_id: str, variant: str, split: str, source: str) -> Path:
    return Path(data_dir) / env_id / variant / f"{split}.{source}.jsonl"
