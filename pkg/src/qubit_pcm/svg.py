"""Deterministic SVG output: wafer maps and histograms.

Coordinates are written with fixed precision and elements in a fixed
order, so identical input gives byte-identical documents.
"""

from __future__ import annotations

import math
from typing import Mapping, Sequence
from xml.sax.saxutils import escape

from .errors import EmptyMap
from .model import DieSite, WaferGeometry

PASS_COLOR = "#2ca02c"
FAIL_COLOR = "#d62728"
# viridis control points
_SCALE = ((0.0, (68, 1, 84)), (0.25, (59, 82, 139)), (0.5, (33, 145, 140)),
          (0.75, (94, 201, 98)), (1.0, (253, 231, 37)))

CANVAS = 600
MAP = 520
MARGIN = 40


def _f(x: float) -> str:
    return f"{x:.2f}"


def _label(x: float) -> str:
    return f"{x:.6g}"


def scale_color(t: float) -> str:
    t = min(max(t, 0.0), 1.0)
    for (t0, c0), (t1, c1) in zip(_SCALE, _SCALE[1:]):
        if t <= t1:
            u = (t - t0) / (t1 - t0)
            rgb = [round(a + (b - a) * u) for a, b in zip(c0, c1)]
            return "#{:02x}{:02x}{:02x}".format(*rgb)
    return "#{:02x}{:02x}{:02x}".format(*_SCALE[-1][1])


def _header(width: int, height: int, title: str) -> list[str]:
    return [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>',
        f'<text x="{width / 2:.0f}" y="22" text-anchor="middle" font-size="15">'
        f'{escape(title)}</text>',
    ]


def render_wafer_map(values: Mapping[DieSite, float | bool], geometry: WaferGeometry = WaferGeometry(),
                     *, title: str = "wafer map", units: str = "") -> str:
    """Wafer outline, every die outline and a fill per measured die.

    Boolean values are drawn pass/fail; numeric values on a color scale
    whose legend shows the data min and max.
    """
    if not values:
        raise EmptyMap("no sites to draw")
    sites = sorted(values)
    vals = [values[s] for s in sites]
    boolean = all(isinstance(v, bool) for v in vals)
    if not boolean:
        nums = [float(v) for v in vals]
        finite = [v for v in nums if math.isfinite(v)]
        if not finite:
            raise EmptyMap("no finite values to draw")
        lo, hi = min(finite), max(finite)

    px = MAP / geometry.diameter_mm
    cx = cy = MARGIN + MAP / 2

    def rect(site_x: float, site_y: float) -> tuple[float, float, float, float]:
        w = geometry.die_width_mm * px
        h = geometry.die_height_mm * px
        return cx + site_x * px - w / 2, cy - site_y * px - h / 2, w, h

    out = _header(CANVAS, CANVAS + 60, title)
    out.append(f'<circle cx="{_f(cx)}" cy="{_f(cy)}" r="{_f(geometry.radius_mm * px)}" '
               'fill="#f4f4f4" stroke="#333333" stroke-width="1.5"/>')
    out.append('<g fill="none" stroke="#bbbbbb" stroke-width="0.5">')
    for s in geometry.sites(complete_only=False):
        x, y, w, h = rect(s.x_mm, s.y_mm)
        out.append(f'<rect x="{_f(x)}" y="{_f(y)}" width="{_f(w)}" height="{_f(h)}"/>')
    out.append("</g>")
    out.append('<g stroke="#333333" stroke-width="0.5">')
    for s, v in zip(sites, vals):
        if boolean:
            color = PASS_COLOR if v else FAIL_COLOR
        else:
            fv = float(v)
            if not math.isfinite(fv):
                color = "#888888"
            else:
                color = scale_color(0.5 if hi == lo else (fv - lo) / (hi - lo))
        x, y, w, h = rect(s.x_mm, s.y_mm)
        out.append(f'<rect x="{_f(x)}" y="{_f(y)}" width="{_f(w)}" height="{_f(h)}" '
                   f'fill="{color}"><title>({s.row}, {s.col}) {escape(_label(float(v)))}'
                   '</title></rect>')
    out.append("</g>")

    ly = CANVAS + 10
    if boolean:
        n_pass = sum(bool(v) for v in vals)
        out.append(f'<rect x="{MARGIN}" y="{ly}" width="14" height="14" fill="{PASS_COLOR}"/>')
        out.append(f'<text x="{MARGIN + 20}" y="{ly + 12}">pass ({n_pass})</text>')
        out.append(f'<rect x="{MARGIN + 120}" y="{ly}" width="14" height="14" '
                   f'fill="{FAIL_COLOR}"/>')
        out.append(f'<text x="{MARGIN + 140}" y="{ly + 12}">fail ({len(vals) - n_pass})</text>')
    else:
        steps = 50
        bar_w = MAP / steps
        for k in range(steps):
            out.append(f'<rect x="{_f(MARGIN + k * bar_w)}" y="{ly}" width="{_f(bar_w + 0.3)}" '
                       f'height="14" fill="{scale_color(k / (steps - 1))}"/>')
        suffix = f" {escape(units)}" if units else ""
        out.append(f'<text class="legend-min" x="{MARGIN}" y="{ly + 32}">'
                   f'min {_label(lo)}{suffix}</text>')
        out.append(f'<text class="legend-max" x="{MARGIN + MAP}" y="{ly + 32}" '
                   f'text-anchor="end">max {_label(hi)}{suffix}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_histogram(edges: Sequence[float], counts: Sequence[int], *, title: str = "histogram",
                     x_label: str = "", marker: float | None = None) -> str:
    """Bar chart of a binned population; ``marker`` draws a vertical line."""
    if not counts or len(edges) != len(counts) + 1:
        raise EmptyMap("histogram needs n bins and n + 1 edges")
    width, height = 640, 400
    left, right, top, bottom = 60, 20, 40, 60
    pw, ph = width - left - right, height - top - bottom
    lo, hi = float(edges[0]), float(edges[-1])
    span = hi - lo if hi > lo else 1.0
    peak = max(max(counts), 1)

    def xpos(v: float) -> float:
        return left + (v - lo) / span * pw

    out = _header(width, height, title)
    out.append(f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" '
               'stroke="#333333"/>')
    out.append(f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="#333333"/>')
    out.append('<g fill="#4c72b0" stroke="#ffffff" stroke-width="0.5">')
    for a, b, c in zip(edges, edges[1:], counts):
        h = c / peak * ph
        out.append(f'<rect x="{_f(xpos(a))}" y="{_f(top + ph - h)}" '
                   f'width="{_f(xpos(b) - xpos(a))}" height="{_f(h)}"/>')
    out.append("</g>")
    if marker is not None and lo <= marker <= hi:
        out.append(f'<line x1="{_f(xpos(marker))}" y1="{top}" x2="{_f(xpos(marker))}" '
                   f'y2="{top + ph}" stroke="#d62728" stroke-dasharray="4 3"/>')
    out.append(f'<text x="{left}" y="{top + ph + 18}" text-anchor="middle">{_label(lo)}</text>')
    out.append(f'<text x="{left + pw}" y="{top + ph + 18}" text-anchor="middle">'
               f'{_label(hi)}</text>')
    out.append(f'<text x="{left - 6}" y="{top + 4}" text-anchor="end">{peak}</text>')
    if x_label:
        out.append(f'<text x="{left + pw / 2:.0f}" y="{height - 16}" text-anchor="middle">'
                   f'{escape(x_label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
