"""Markdown reports of calibration runs, with a parser for their tables."""

from __future__ import annotations

import json
import re
from pathlib import Path

from simcal.errors import EmptyInputError
from simcal.simenv import get_spec

SUMMARY_COLS = ("mean", "min", "max", "spread")


def _num(x) -> str:
    # shortest round-trip repr so the tables parse back exactly
    return "n/a" if x is None else repr(float(x))


def _summary_rows(report, env: str) -> list[str]:
    rows = []
    for est in sorted(report.aggregates[env]):
        entry = report.aggregates[env][est]
        conv = f"{entry['n_converged']}/{entry['n_cells']}"
        for which in ("best", "particle_mean"):
            if which not in entry:
                continue
            for over in ("all", "converged"):
                stats = entry[which][over]
                vals = [None] * 4 if stats is None else [stats[c] for c in SUMMARY_COLS]
                rows.append(f"| {est} | {which} | {over} | " + " | ".join(_num(v) for v in vals)
                            + f" | {conv} | {entry['n_failed']} |")
    return rows


def render_report(reports, plot_paths: dict | None = None) -> str:
    """Markdown text for one or more score reports."""
    reports = list(reports)
    if not reports:
        raise EmptyInputError("make_report needs at least one score report")
    plot_paths = plot_paths or {}
    lines = ["# Calibration report", ""]
    for report in reports:
        lines += [f"## Run {report.run_id or '(unsaved)'}", ""]
        lines += ["Estimates are scored with per-parameter accuracy `1 - |theta_hat - theta*|` (normalized units).",
                  "`best` is the point estimate or best particle; `particle_mean` the particle average.",
                  "`all` averages over every seed (failed seeds score 0); `converged` over converged seeds only.", ""]
        for env in report.envs:
            lines += [f"### {env}", ""]
            lines.append("| estimator | estimate | seeds | " + " | ".join(SUMMARY_COLS) + " | converged | failed |")
            lines.append("|---" * (len(SUMMARY_COLS) + 5) + "|")
            lines += _summary_rows(report, env)
            lines.append("")
            names = get_spec(env).space.names
            lines.append("Per-parameter accuracy (best estimate, all seeds):")
            lines.append("")
            lines.append("| estimator | parameter | accuracy |")
            lines.append("|---|---|---|")
            for est in sorted(report.aggregates[env]):
                stats = report.aggregates[env][est]["best"]["all"]
                for name, acc in zip(names, stats["per_parameter"]):
                    lines.append(f"| {est} | {name} | {_num(acc)} |")
            lines.append("")
        for mode, p in sorted(plot_paths.get(report.run_id, {}).items()):
            lines += [f"![{mode} accuracy radar chart]({p})", ""]
        lines += ["Run specification:", "", "```json", json.dumps(report.run_spec, sort_keys=True, indent=1), "```", ""]
    return "\n".join(lines)


def make_report(reports, path, plot_paths: dict | None = None) -> Path:
    text = render_report(reports, plot_paths)
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"could not write report to {path}: {exc}") from exc
    return path


_ROW = re.compile(r"^\| (\S+) \| (best|particle_mean) \| (all|converged) \| (.+) \| (\d+)/(\d+) \| (\d+) \|$")


def parse_report(text: str) -> dict:
    """``{(run_id, env, estimator, estimate, over): {mean, min, max, spread}}`` from the summary tables."""
    out = {}
    run_id = env = None
    for line in text.splitlines():
        if line.startswith("## Run "):
            run_id = line[len("## Run "):]
        elif line.startswith("### "):
            env = line[4:]
        else:
            m = _ROW.match(line)
            if m and env is not None:
                vals = [None if v.strip() == "n/a" else float(v) for v in m.group(4).split(" | ")]
                out[(run_id, env, m.group(1), m.group(2), m.group(3))] = dict(zip(SUMMARY_COLS, vals))
    return out


def parse_run_spec(text: str) -> dict:
    """The run specification embedded in the first run section."""
    m = re.search(r"```json\n(.*?)\n```", text, re.S)
    if not m:
        raise ValueError("no run specification block in report")
    return json.loads(m.group(1))
