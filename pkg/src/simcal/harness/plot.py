"""Radar ("spider") charts of per-environment accuracy, written as standalone SVG."""

from __future__ import annotations

import math
import xml.etree.ElementTree as ET
from pathlib import Path
from xml.sax.saxutils import quoteattr

from simcal.errors import CoverageError, EmptyInputError

MODE_COLORS = {"min": "#1f77b4", "mean": "#2ca02c", "max": "#ff7f0e"}
DASHES = ("", "6,3", "2,3", "8,3,2,3")
SIZE = 480
RADIUS = 170
RINGS = (0.25, 0.5, 0.75, 1.0)
SVG_NS = "http://www.w3.org/2000/svg"


def _axis_angle(k: int, n: int) -> float:
    return -math.pi / 2 + 2 * math.pi * k / n


def _xy(r: float, angle: float) -> tuple[float, float]:
    c = SIZE / 2
    return c + RADIUS * r * math.cos(angle), c + RADIUS * r * math.sin(angle)


def check_coverage(reports) -> list[str]:
    """Shared env set of all reports, or :class:`CoverageError` naming the differences."""
    if not reports:
        raise EmptyInputError("need at least one report to plot")
    envs = [set(r.envs) for r in reports]
    union = set().union(*envs)
    problems = []
    for i, e in enumerate(envs):
        if e != union:
            problems.append(f"report {i} lacks {sorted(union - e)}")
    if problems:
        raise CoverageError("reports cover different environments: " + "; ".join(problems))
    return sorted(union)


def radar_plot(reports, mode="all", path=None, *, estimators=None, which: str = "best", over: str = "all") -> str:
    """Render one polygon per (report, estimator, mode) series; returns the SVG text.

    ``mode`` is ``"min"``, ``"mean"``, ``"max"``, a sequence of those, or
    ``"all"``. Colors encode the mode; dash patterns separate estimators.
    """
    reports = list(reports)
    envs = check_coverage(reports)
    modes = ("min", "mean", "max") if mode == "all" else ((mode,) if isinstance(mode, str) else tuple(mode))
    for m in modes:
        if m not in MODE_COLORS:
            raise ValueError(f"mode must be one of {tuple(MODE_COLORS)}, got {m!r}")
    n = len(envs)
    out = [
        f'<svg xmlns="{SVG_NS}" width="{SIZE}" height="{SIZE + 40}" viewBox="0 0 {SIZE} {SIZE + 40}">',
        '<rect width="100%" height="100%" fill="white"/>',
        '<g class="grid" fill="none" stroke="#cccccc">',
    ]
    for ring in RINGS:
        if n >= 3:
            pts = " ".join("%.3f,%.3f" % _xy(ring, _axis_angle(k, n)) for k in range(n))
            out.append(f'<polygon points="{pts}"/>')
        else:
            out.append(f'<circle cx="{SIZE / 2:.3f}" cy="{SIZE / 2:.3f}" r="{RADIUS * ring:.3f}"/>')
    for k, env in enumerate(envs):
        x, y = _xy(1.0, _axis_angle(k, n))
        out.append(f'<line x1="{SIZE / 2:.3f}" y1="{SIZE / 2:.3f}" x2="{x:.3f}" y2="{y:.3f}"/>')
    out.append("</g>")
    out.append('<g class="labels" font-family="sans-serif" font-size="11" text-anchor="middle">')
    for k, env in enumerate(envs):
        x, y = _xy(1.12, _axis_angle(k, n))
        out.append(f"<text x=\"{x:.3f}\" y=\"{y:.3f}\">{env}</text>")
    out.append("</g>")
    series_i = 0
    legend = []
    for ri, report in enumerate(reports):
        names = report.estimators if estimators is None else list(estimators)
        for est in names:
            dash = DASHES[series_i % len(DASHES)]
            series_i += 1
            label = est if len(reports) == 1 else f"{ri}:{est}"
            for m in modes:
                values = []
                for env in envs:
                    v = report.value(env, est, m, which, over) if est in report.aggregates[env] else None
                    values.append(0.0 if v is None else min(max(float(v), 0.0), 1.0))
                pts = [_xy(v, _axis_angle(k, n)) for k, v in enumerate(values)]
                attrs = f'data-series={quoteattr(label)} data-mode="{m}" stroke="{MODE_COLORS[m]}"'
                if dash:
                    attrs += f' stroke-dasharray="{dash}"'
                out.append(f"<g class=\"series\" {attrs}>")
                pts_s = " ".join("%.3f,%.3f" % p for p in pts)
                out.append(f'<polygon points="{pts_s}" fill="{MODE_COLORS[m]}" fill-opacity="0.08" stroke-width="2"/>')
                for env, v, (x, y) in zip(envs, values, pts):
                    out.append(
                        f'<circle class="vertex" cx="{x:.3f}" cy="{y:.3f}" r="3" fill="{MODE_COLORS[m]}" '
                        f'data-env={quoteattr(env)} data-mode="{m}" data-series={quoteattr(label)} '
                        f'data-value="{v:.6f}"/>'
                    )
                out.append("</g>")
                legend.append((label, m, dash))
    out.append('<g class="legend" font-family="sans-serif" font-size="10">')
    for i, (label, m, dash) in enumerate(legend):
        x = 10 + (i % 4) * 118
        y = SIZE + 8 + (i // 4) * 14
        d = f' stroke-dasharray="{dash}"' if dash else ""
        out.append(f'<line x1="{x}" y1="{y}" x2="{x + 16}" y2="{y}" stroke="{MODE_COLORS[m]}" stroke-width="2"{d}/>')
        out.append(f'<text x="{x + 20}" y="{y + 3}">{label} {m}</text>')
    out.append("</g>")
    out.append("</svg>")
    text = "\n".join(out) + "\n"
    if path is not None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)
    return text


def read_plot_values(svg_text: str) -> dict:
    """``{(series, env, mode): value}`` from the vertex markers of a chart."""
    root = ET.fromstring(svg_text)
    out = {}
    for el in root.iter(f"{{{SVG_NS}}}circle"):
        if el.get("class") == "vertex":
            out[(el.get("data-series"), el.get("data-env"), el.get("data-mode"))] = float(el.get("data-value"))
    return out
