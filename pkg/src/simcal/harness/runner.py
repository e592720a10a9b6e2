"""Calibration and transfer runs over (estimator, env, seed) cells, with scoring and a results store."""

from __future__ import annotations

import hashlib
import json
import time
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from simcal.core import accuracy, aggregate, spread
from simcal.errors import DependencyError, EmptyInputError
from simcal.estimators.registry import ESTIMATORS, PARTICLES, run_estimator
from simcal.harness.config import RunSpec
from simcal.harness.data import dataset_path, load_dataset
from simcal.numkit.mdn import MixtureDensity
from simcal.policy import CemConfig, transfer_evaluate
from simcal.simenv import RolloutLedger, get_spec

MODES = ("mean", "min", "max")


@dataclass
class Cell:
    """Raw result of one (estimator, env, seed) calibration."""

    estimator: str
    env_id: str
    seed: int
    status: str
    theta_hat: list | None = None
    theta_mean: list | None = None
    particles: list | None = None
    mixture: dict | None = None
    true_theta: list | None = None
    accuracy: list | None = None
    accuracy_mean_particle: list | None = None
    converged: bool = False
    rollouts: int = 0
    steps: int = 0
    error: str | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def key(self) -> tuple:
        return (self.env_id, self.estimator, self.seed)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Cell":
        return cls(**d)

    def estimate_source(self):
        """What transfer training samples environments from."""
        if self.mixture is not None:
            return MixtureDensity(self.mixture["weights"], self.mixture["means"], self.mixture["stds"])
        if self.particles is not None:
            return np.asarray(self.particles, dtype=float)
        return np.asarray(self.theta_hat, dtype=float)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if np.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _stats(cells: list[Cell], acc_key: str) -> dict:
    """Per-mode seed averages, over all cells (failed ones score zero) and over converged cells only."""
    out = {}
    for label, group in (("all", cells), ("converged", [c for c in cells if c.converged])):
        if not group:
            out[label] = None
            continue
        accs = [getattr(c, acc_key) for c in group]
        dim = len(next((a for a in accs if a is not None), [0.0]))
        accs = [np.zeros(dim) if a is None else np.asarray(a) for a in accs]
        entry = {m: float(np.mean([aggregate(a, m) for a in accs])) for m in MODES}
        entry["spread"] = float(np.mean([spread(a) for a in accs]))
        entry["per_parameter"] = np.mean(accs, axis=0).tolist()
        entry["n"] = len(accs)
        out[label] = entry
    return out


def compute_aggregates(cells: list[Cell]) -> dict:
    """``{env: {estimator: {...}}}`` recomputable from the raw cells alone."""
    groups: dict = {}
    for c in sorted(cells, key=lambda c: c.key):
        groups.setdefault(c.env_id, {}).setdefault(c.estimator, []).append(c)
    agg = {}
    for env, by_est in groups.items():
        agg[env] = {}
        for est, group in by_est.items():
            entry = {
                "n_cells": len(group),
                "n_failed": sum(c.status != "ok" for c in group),
                "n_converged": sum(c.converged for c in group),
                "best": _stats(group, "accuracy"),
            }
            if any(c.accuracy_mean_particle is not None for c in group):
                entry["particle_mean"] = _stats(group, "accuracy_mean_particle")
                entry["particle_spread"] = float(np.mean([c.diagnostics.get("particle_spread", 0.0) for c in group]))
            agg[env][est] = entry
    return _jsonable(agg)


@dataclass
class ScoreReport:
    run_spec: dict
    cells: list
    aggregates: dict
    run_id: str = ""
    wall_times: dict = field(default_factory=dict)

    @classmethod
    def build(cls, run_spec: dict, cells: list[Cell], run_id: str = "", wall_times=None) -> "ScoreReport":
        cells = sorted(cells, key=lambda c: c.key)
        return cls(run_spec, cells, compute_aggregates(cells), run_id, dict(wall_times or {}))

    @property
    def envs(self) -> list[str]:
        return sorted(self.aggregates)

    @property
    def estimators(self) -> list[str]:
        return sorted({c.estimator for c in self.cells})

    def value(self, env: str, estimator: str, mode: str, which: str = "best", over: str = "all") -> float | None:
        entry = self.aggregates[env][estimator][which][over]
        return None if entry is None else entry[mode]

    def to_json(self) -> str:
        doc = {
            "run_id": self.run_id,
            "run_spec": self.run_spec,
            "cells": [_jsonable(c.to_dict()) for c in self.cells],
            "aggregates": self.aggregates,
        }
        return json.dumps(doc, sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ScoreReport":
        doc = json.loads(text)
        cells = [Cell.from_dict(c) for c in doc["cells"]]
        report = cls(doc["run_spec"], cells, doc["aggregates"], doc.get("run_id", ""))
        recomputed = compute_aggregates(cells)
        if recomputed != doc["aggregates"]:
            raise ValueError("stored aggregates do not match the raw cells")
        return report


def run_id_for(spec: RunSpec, data_digest: str = "") -> str:
    """Content hash of the run spec and the reference data it reads."""
    return hashlib.sha256((spec.canonical_json() + data_digest).encode()).hexdigest()[:12]


def _reference_path(spec: RunSpec, data_dir, env_id: str) -> Path:
    return dataset_path(data_dir, env_id, spec.variant, spec.split, spec.trajectory_source)


def data_digest(spec: RunSpec, data_dir) -> str:
    paths = [_reference_path(spec, data_dir, e) for e in spec.envs]
    missing = [str(p) for p in paths if not p.exists()]
    if missing:
        raise DependencyError(f"missing datasets {missing}; run `simcal gen-data` first")
    return hashlib.sha256(b"".join(p.read_bytes() for p in paths)).hexdigest()


def calibrate_cell(estimator: str, env_id: str, seed: int, dataset, spec: RunSpec) -> tuple[Cell, float]:
    """Run one estimator under its own capped rollout ledger; any exception becomes a failed cell."""
    truth_raw = dataset.true_theta
    truth = np.clip(truth_raw, 0.0, 1.0)
    cell = Cell(estimator, env_id, seed, "ok", true_theta=truth_raw.tolist())
    ledger = RolloutLedger(spec.budget_rollouts)
    t0 = time.perf_counter()
    try:
        with ledger:
            est = run_estimator(estimator, env_id, dataset.trajectories, seed, spec.estimator_overrides.get(estimator),
                                reward_mode=spec.reward_mode,
                                truth=truth if ESTIMATORS[estimator].needs_truth else None)
        cell.theta_hat = est.theta.tolist()
        cell.accuracy = accuracy(est.theta, truth).tolist()
        if est.kind == PARTICLES:
            cell.theta_mean = est.mean_theta.tolist()
            cell.particles = est.particles.tolist()
            cell.accuracy_mean_particle = accuracy(est.mean_theta, truth).tolist()
            accs = [accuracy(p, truth).mean() for p in est.particles]
            est.diagnostics["particle_spread"] = float(max(accs) - min(accs))
        if est.mixture is not None:
            cell.mixture = {"weights": est.mixture.weights.tolist(), "means": est.mixture.means.tolist(),
                            "stds": est.mixture.stds.tolist()}
        cell.converged = bool(np.all(np.isfinite(est.theta)))
        cell.diagnostics = _jsonable(est.diagnostics)
    except Exception as exc:  # noqa: BLE001 - a crashing estimator must not stop the run
        cell.status = "failed"
        cell.error = f"{type(exc).__name__}: {exc}"
        cell.diagnostics = {"traceback": traceback.format_exc(limit=6).splitlines()[-6:]}
    cell.rollouts, cell.steps = ledger.rollouts, ledger.steps
    if ledger.rollouts > spec.budget_rollouts:
        raise AssertionError(f"cell {cell.key} overran its rollout budget")
    return cell, time.perf_counter() - t0


def run_calibration(spec: RunSpec, data_dir, out_dir=None, jobs: int = 1) -> ScoreReport:
    """Calibrate every cell on a bounded thread pool and reduce into a :class:`ScoreReport`.

    With ``out_dir`` the run is persisted under ``out_dir/<run_id>``.
    """
    digest = data_digest(spec, data_dir)
    datasets = {env: load_dataset(_reference_path(spec, data_dir, env)) for env in spec.envs}
    jobs_list = [(est, env, seed) for env in spec.envs for est in spec.estimators for seed in spec.seeds]

    def work(job):
        est, env, seed = job
        return calibrate_cell(est, env, seed, datasets[env], spec)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(work, jobs_list))
    else:
        results = [work(j) for j in jobs_list]
    rid = run_id_for(spec, digest)
    walls = {f"{c.env_id}/{c.estimator}/{c.seed}": t for c, t in results}
    report = ScoreReport.build(spec.to_dict(), [c for c, _ in results], rid, walls)
    if out_dir is not None:
        save_run(report, out_dir)
    return report


def save_run(report: ScoreReport, out_dir) -> Path:
    root = Path(out_dir)
    run_dir = root / report.run_id
    run_dir.mkdir(parents=True, exist_ok=True)
    with open(run_dir / "cells.jsonl", "w") as fh:
        for c in report.cells:
            fh.write(json.dumps(_jsonable(c.to_dict()), sort_keys=True) + "\n")
    (run_dir / "report.json").write_text(report.to_json())
    (run_dir / "run_spec.json").write_text(json.dumps(report.run_spec, sort_keys=True, indent=1) + "\n")
    (run_dir / "wall_times.json").write_text(json.dumps(report.wall_times, sort_keys=True, indent=1) + "\n")
    index_path = root / "index.json"
    index = json.loads(index_path.read_text()) if index_path.exists() else {}
    index[report.run_id] = report.run_spec
    index_path.write_text(json.dumps(index, sort_keys=True, indent=1) + "\n")
    return run_dir


def load_run(run_dir) -> ScoreReport:
    run_dir = Path(run_dir)
    path = run_dir / "report.json"
    if not path.exists():
        raise DependencyError(f"no calibration report at {path}; run `simcal calibrate` first")
    report = ScoreReport.from_json(path.read_text())
    walls = run_dir / "wall_times.json"
    if walls.exists():
        report.wall_times = json.loads(walls.read_text())
    return report


def run_transfer(spec: RunSpec, calibration: ScoreReport, out_dir=None, cem: CemConfig | None = None) -> dict:
    """Zero-shot transfer score for every calibrated cell of ``spec``.

    The target is the dataset's true environment (physical units, so
    out-of-distribution truths are honoured).
    """
    cem = cem or CemConfig(iterations=spec.cem_iterations)
    by_key = {c.key: c for c in calibration.cells}
    rows = []
    for env in spec.envs:
        truth_phys = None
        for est in spec.estimators:
            for seed in spec.seeds:
                cell = by_key.get((env, est, seed))
                if cell is None or cell.status != "ok":
                    why = "missing" if cell is None else f"failed ({cell.error})"
                    raise DependencyError(f"calibration cell {env}/{est}/seed={seed} is {why}; run `simcal calibrate`")
                if truth_phys is None:
                    sp = get_spec(env)
                    truth_phys = sp.space.low + np.asarray(cell.true_theta) * (sp.space.high - sp.space.low)
                res = transfer_evaluate(env, cell.estimate_source(), truth_phys, cem, seed,
                                        n_eval=spec.transfer_eval_episodes, target_physical=True)
                rows.append({"env_id": env, "estimator": est, "seed": seed, "score": res.score,
                             "source_return": res.source_return, "target_return": res.target_return,
                             "converged": res.converged})
    summary: dict = {}
    for r in rows:
        summary.setdefault(r["env_id"], {}).setdefault(r["estimator"], []).append(r)
    agg = {
        env: {
            est: {
                "mean_all": float(np.mean([r["score"] for r in rs])),
                "mean_converged": (float(np.mean([r["score"] for r in rs if r["converged"]]))
                                   if any(r["converged"] for r in rs) else None),
                "n": len(rs),
                "n_converged": sum(r["converged"] for r in rs),
            }
            for est, rs in by_est.items()
        }
        for env, by_est in summary.items()
    }
    doc = _jsonable({"run_id": calibration.run_id, "cells": rows, "aggregates": agg})
    if out_dir is not None:
        run_dir = Path(out_dir) / calibration.run_id
        run_dir.mkdir(parents=True, exist_ok=True)
        (run_dir / "transfer.json").write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")
    return doc


def require_reports(reports) -> list:
    reports = list(reports)
    if not reports:
        raise EmptyInputError("need at least one score report")
    return reports
