"""Deterministic analytic simulators standing in for the physics benchmark suite."""

from simcal.simenv.backend import BACKEND
from simcal.simenv.catalog import CATALOG, DT, SHIPPED_ENV_IDS, EnvSpec, catalog_document, get_spec
from simcal.simenv.model import (
    RolloutLedger,
    SimModel,
    current_ledger,
    env_return,
    exciter_actions,
    make_env,
    rollout,
    rollout_batch,
    step,
    step_rewards,
)

__all__ = [
    "BACKEND",
    "CATALOG",
    "DT",
    "SHIPPED_ENV_IDS",
    "EnvSpec",
    "RolloutLedger",
    "SimModel",
    "catalog_document",
    "current_ledger",
    "env_return",
    "exciter_actions",
    "get_spec",
    "make_env",
    "rollout",
    "rollout_batch",
    "step",
    "step_rewards",
]
