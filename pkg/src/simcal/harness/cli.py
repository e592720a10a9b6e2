"""Command line: ``simcal gen-data | train-policy | calibrate | transfer | plot | report``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from simcal.errors import SimcalError
from simcal.harness.config import RunSpec, load_config
from simcal.harness.data import SPLITS, dataset_path, gen_data, train_policies
from simcal.harness.plot import radar_plot
from simcal.harness.report import make_report
from simcal.harness.runner import data_digest, load_run, run_calibration, run_id_for, run_transfer
from simcal.policy import CemConfig


def _global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--config", default=d(None), help="run configuration (TOML)")
    p.add_argument("--seed", type=int, default=d(None), help="data seed; for calibrate/transfer, a single run seed")
    p.add_argument("--out", default=d("simcal_out"), help="output root directory")
    p.add_argument("--jobs", type=int, default=d(1), help="worker threads for calibration cells")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="simcal", description="Simulator parameter calibration benchmark")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        _global_flags(p, suppress=True)
        return p

    g = add("gen-data", "generate reference/validation/test datasets")
    g.add_argument("--env", action="append", help="environment id (repeatable; default: config envs)")
    g.add_argument("--variant", default=None)
    g.add_argument("--split", choices=SPLITS, action="append")
    g.add_argument("--n-traj", type=int, default=None)
    g.add_argument("--source", default=None, help="exciter, demonstrations or learned_policy")

    t = add("train-policy", "train expert and domain-randomized CEM policies")
    t.add_argument("--env", action="append")
    t.add_argument("--iterations", type=int, default=30)

    add("calibrate", "run every configured estimator on every env and seed")
    add("transfer", "score zero-shot policy transfer for a calibrated run")

    pl = add("plot", "redraw the radar chart of one or more runs")
    pl.add_argument("runs", nargs="*", help="run directories (default: the configured run)")
    pl.add_argument("--mode", default="all", choices=("all", "mean", "min", "max"))
    pl.add_argument("--output", default=None)

    r = add("report", "write the markdown report of one or more runs")
    r.add_argument("runs", nargs="*")
    r.add_argument("--output", default=None)
    return parser


def _spec(args) -> RunSpec:
    spec = load_config(args.config) if args.config else RunSpec()
    if args.seed is not None and args.command in ("calibrate", "transfer"):
        spec = RunSpec.from_dict({**spec.to_dict(), "seeds": [args.seed]})
    return spec


def _data_seed(args) -> int:
    return 0 if args.seed is None else args.seed


def _run_dir_for(args, spec: RunSpec) -> Path:
    out = Path(args.out)
    return out / "runs" / run_id_for(spec, data_digest(spec, out / "data"))


def cmd_gen_data(args) -> int:
    spec = _spec(args)
    out = Path(args.out)
    envs = args.env or spec.envs
    variant = args.variant or spec.variant
    source = args.source or spec.trajectory_source
    n = args.n_traj or spec.n_traj
    for env in envs:
        for split in args.split or SPLITS:
            path = dataset_path(out / "data", env, variant, split, source)
            theta = spec.env_theta(env) if env in spec.envs else None
            gen_data(env, variant, split, n, source, _data_seed(args), theta=theta, policy_dir=out / "policies",
                     path=path)
            print(path)
    return 0


def cmd_train_policy(args) -> int:
    spec = _spec(args)
    for env in args.env or spec.envs:
        paths = train_policies(env, Path(args.out) / "policies", _data_seed(args), CemConfig(iterations=args.iterations))
        for p in paths.values():
            print(p)
    return 0


def _render(report, run_dir: Path) -> None:
    svg = run_dir / "radar.svg"
    radar_plot([report], "all", svg)
    make_report([report], run_dir / "report.md", {report.run_id: {"all": "radar.svg"}})


def cmd_calibrate(args) -> int:
    spec = _spec(args)
    out = Path(args.out)
    report = run_calibration(spec, out / "data", out / "runs", jobs=args.jobs)
    run_dir = out / "runs" / report.run_id
    _render(report, run_dir)
    for env in report.envs:
        for est in sorted(report.aggregates[env]):
            e = report.aggregates[env][est]
            stats = e["best"]["all"]
            print(f"{env:26s} {est:15s} mean={stats['mean']:.3f} min={stats['min']:.3f} max={stats['max']:.3f} "
                  f"failed={e['n_failed']}")
    print(run_dir)
    return 0


def cmd_transfer(args) -> int:
    spec = _spec(args)
    run_dir = _run_dir_for(args, spec)
    calib = load_run(run_dir)
    doc = run_transfer(spec, calib, Path(args.out) / "runs")
    print(json.dumps(doc["aggregates"], sort_keys=True, indent=1))
    return 0


def _runs(args) -> list[Path]:
    if args.runs:
        return [Path(r) for r in args.runs]
    return [_run_dir_for(args, _spec(args))]


def cmd_plot(args) -> int:
    dirs = _runs(args)
    reports = [load_run(d) for d in dirs]
    path = Path(args.output) if args.output else dirs[0] / f"radar-{args.mode}.svg"
    radar_plot(reports, args.mode, path)
    print(path)
    return 0


def cmd_report(args) -> int:
    dirs = _runs(args)
    reports = [load_run(d) for d in dirs]
    path = Path(args.output) if args.output else dirs[0] / "report.md"
    plots = {r.run_id: {"all": os.path.relpath(d / "radar.svg", path.parent)}
             for r, d in zip(reports, dirs) if (d / "radar.svg").exists()}
    make_report(reports, path, plots)
    print(path)
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train-policy": cmd_train_policy,
    "calibrate": cmd_calibrate,
    "transfer": cmd_transfer,
    "plot": cmd_plot,
    "report": cmd_report,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except SimcalError as exc:
        print(f"simcal: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
