"""Run configuration files: ``[run]``, ``[estimator.<id>]`` and ``[env.<id>]`` sections.

Unknown keys anywhere are errors, so a typo can never silently fall back to
a default.
"""

from __future__ import annotations

import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised only on 3.10
    import tomli as tomllib

from simcal.errors import ConfigError
from simcal.estimators.registry import ESTIMATORS, estimator_config
from simcal.simenv import CATALOG, get_spec

PROFILES = ("benchmark", "tuning")
TUNING_ENVS = ("pendulum", "spring-damper")
TRAJECTORY_SOURCES = ("exciter", "demonstrations", "learned_policy")
REWARD_MODES = ("mse", "learned")
SPLITS = ("reference", "validation", "test")
VARIANTS = ("default", "in_distribution", "out_of_distribution")


@dataclass
class RunSpec:
    """Everything that determines a calibration run's results."""

    estimators: list = field(default_factory=lambda: ["regression"])
    envs: list = field(default_factory=lambda: ["pendulum"])
    seeds: list = field(default_factory=lambda: [0, 1, 2])
    trajectory_source: str = "exciter"
    reward_mode: str = "mse"
    budget_rollouts: int = 50_000
    split: str = "reference"
    variant: str = "default"
    profile: str = "benchmark"
    n_traj: int = 5
    estimator_overrides: dict = field(default_factory=dict)
    env_overrides: dict = field(default_factory=dict)
    cem_iterations: int = 30
    transfer_eval_episodes: int = 16

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not self.seeds:
            raise ConfigError("need at least one seed")
        if not self.envs:
            raise ConfigError("need at least one environment")
        for env in self.envs:
            if env not in CATALOG:
                raise ConfigError(f"unknown environment {env!r}; known: {sorted(CATALOG)}")
        for name in self.estimators:
            if name not in ESTIMATORS:
                raise ConfigError(f"unknown estimator {name!r}; known: {sorted(ESTIMATORS)}")
            estimator_config(name, self.estimator_overrides.get(name))
            if self.reward_mode == "learned" and not ESTIMATORS[name].learned_rewards:
                raise ConfigError(f"reward mode 'learned' is not available for estimator {name!r}")
        for key, allowed in (
            ("trajectory_source", TRAJECTORY_SOURCES),
            ("reward_mode", REWARD_MODES),
            ("split", SPLITS),
            ("variant", VARIANTS),
            ("profile", PROFILES),
        ):
            if getattr(self, key) not in allowed:
                raise ConfigError(f"{key} must be one of {allowed}, got {getattr(self, key)!r}")
        if self.budget_rollouts < 1 or self.n_traj < 1:
            raise ConfigError("budget_rollouts and n_traj must be positive")
        if self.split == "validation":
            outside = [e for e in self.envs if e not in TUNING_ENVS]
            if self.profile != "tuning":
                raise ConfigError("validation splits are reserved for the tuning profile")
            if outside:
                raise ConfigError(f"tuning may only touch validation splits of {TUNING_ENVS}, not {outside}")
        if self.profile == "tuning" and self.split == "test":
            raise ConfigError("the tuning profile may not read test splits")
        for env, over in self.env_overrides.items():
            if env not in self.envs:
                raise ConfigError(f"[env.{env}] configured but {env!r} is not in run.envs")
            unknown = set(over) - {"theta"}
            if unknown:
                raise ConfigError(f"[env.{env}] has unknown keys {sorted(unknown)}; valid: ['theta']")
            if "theta" in over and len(over["theta"]) != get_spec(env).dim:
                raise ConfigError(f"[env.{env}] theta needs {get_spec(env).dim} values")

    def to_dict(self) -> dict:
        return asdict(self)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "RunSpec":
        return cls(**d)

    def env_theta(self, env_id: str):
        over = self.env_overrides.get(env_id, {})
        return over.get("theta")


RUN_KEYS = {
    "estimators", "envs", "seeds", "trajectory_source", "reward_mode", "budget_rollouts", "split",
    "variant", "profile", "n_traj", "cem_iterations", "transfer_eval_episodes",
}


def parse_config(doc: dict) -> RunSpec:
    unknown_sections = set(doc) - {"run", "estimator", "env"}
    if unknown_sections:
        raise ConfigError(f"unknown config sections {sorted(unknown_sections)}")
    run = dict(doc.get("run", {}))
    unknown = set(run) - RUN_KEYS
    if unknown:
        raise ConfigError(f"unknown keys in [run]: {sorted(unknown)}")
    if isinstance(run.get("seeds"), int):
        run["seeds"] = list(range(run["seeds"]))
    est = doc.get("estimator", {})
    for name, table in est.items():
        if not isinstance(table, dict):
            raise ConfigError(f"[estimator.{name}] must be a table")
        estimator_config(name, table)
    envs = doc.get("env", {})
    for name, table in envs.items():
        if not isinstance(table, dict):
            raise ConfigError(f"[env.{name}] must be a table")
    return RunSpec(**run, estimator_overrides=dict(est), env_overrides=dict(envs))


def loads_config(text: str) -> RunSpec:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid config: {exc}") from exc
    return parse_config(doc)


def load_config(path) -> RunSpec:
    return loads_config(Path(path).read_text())
