"""Deterministic SVG scatter plots: same input, same bytes.

Hand-rolled SVG keeps the output free of graphics-library version drift and
trivially diffable; points are shaded by word-order group and the fit line
is drawn dashed in blue.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence

from .stats import FitResult

WIDTH, HEIGHT = 640, 480
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 72, 144, 40, 56

GROUP_SHADES = {1: "#99000d", 2: "#fb6a4a", 3: "#fcbba1"}
GROUP_LABELS = {1: "Group 1 (SOV)", 2: "Group 2 (Flexible)", 3: "Group 3 (SVO)"}
FIT_COLOR = "#1d4ed8"


def _nice_step(span: float) -> float:
    if span <= 0:
        return 1.0
    raw = span / 5.0
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 5.0):
        if raw <= mult * mag:
            return mult * mag
    return 10.0 * mag


def _ticks(lo: float, hi: float) -> list[float]:
    step = _nice_step(hi - lo)
    first = math.ceil(lo / step) * step
    out = []
    t = first
    while t <= hi + 1e-9 * max(1.0, abs(hi)):
        out.append(0.0 if abs(t) < 1e-12 else t)
        t += step
    return out


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _fmt_tick(v: float) -> str:
    return f"{v:.6g}"


def plot_scatter(
    points: Sequence[tuple[float, float, int]],
    fit: Optional[FitResult],
    x_label: str,
    y_label: str,
    title: str = "",
) -> str:
    """Render (x, y, group) triples plus an optional fit line as an SVG document."""
    if not points:
        raise ValueError("plot_scatter needs at least one point")

    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    x_pad = (x_hi - x_lo) * 0.08 or max(abs(x_lo), 1.0) * 0.08
    y_pad = (y_hi - y_lo) * 0.08 or max(abs(y_lo), 1.0) * 0.08
    x_lo, x_hi = x_lo - x_pad, x_hi + x_pad
    y_lo, y_hi = y_lo - y_pad, y_hi + y_pad

    plot_w = WIDTH - MARGIN_L - MARGIN_R
    plot_h = HEIGHT - MARGIN_T - MARGIN_B

    def sx(x: float) -> float:
        return MARGIN_L + (x - x_lo) / (x_hi - x_lo) * plot_w

    def sy(y: float) -> float:
        return MARGIN_T + plot_h - (y - y_lo) / (y_hi - y_lo) * plot_h

    e: list[str] = []
    e.append(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">'
    )
    e.append(f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>')
    if title:
        e.append(
            f'<text x="{WIDTH // 2}" y="24" text-anchor="middle" '
            f'font-family="sans-serif" font-size="15">{_escape(title)}</text>'
        )

    # frame
    x0, y0 = MARGIN_L, MARGIN_T + plot_h
    x1, y1 = MARGIN_L + plot_w, MARGIN_T
    e.append(
        f'<rect x="{x0}" y="{y1}" width="{plot_w}" height="{plot_h}" '
        f'fill="none" stroke="#444444" stroke-width="1"/>'
    )

    for t in _ticks(x_lo, x_hi):
        px = sx(t)
        e.append(
            f'<line x1="{_fmt(px)}" y1="{y0}" x2="{_fmt(px)}" y2="{y0 + 5}" '
            f'stroke="#444444" stroke-width="1"/>'
        )
        e.append(
            f'<text x="{_fmt(px)}" y="{y0 + 20}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{_fmt_tick(t)}</text>'
        )
    for t in _ticks(y_lo, y_hi):
        py = sy(t)
        e.append(
            f'<line x1="{x0 - 5}" y1="{_fmt(py)}" x2="{x0}" y2="{_fmt(py)}" '
            f'stroke="#444444" stroke-width="1"/>'
        )
        e.append(
            f'<text x="{x0 - 8}" y="{_fmt(py + 4)}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{_fmt_tick(t)}</text>'
        )

    e.append(
        f'<text x="{MARGIN_L + plot_w / 2:.1f}" y="{HEIGHT - 14}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13">{_escape(x_label)}</text>'
    )
    e.append(
        f'<text x="18" y="{MARGIN_T + plot_h / 2:.1f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13" '
        f'transform="rotate(-90 18 {MARGIN_T + plot_h / 2:.1f})">{_escape(y_label)}</text>'
    )

    if fit is not None:
        fx0, fx1 = x_lo + x_pad * 0.25, x_hi - x_pad * 0.25
        fy0 = fit.slope * fx0 + fit.intercept
        fy1 = fit.slope * fx1 + fit.intercept
        e.append(
            f'<line x1="{_fmt(sx(fx0))}" y1="{_fmt(sy(fy0))}" '
            f'x2="{_fmt(sx(fx1))}" y2="{_fmt(sy(fy1))}" '
            f'stroke="{FIT_COLOR}" stroke-width="2" stroke-dasharray="7,5"/>'
        )

    for x, y, group in points:
        shade = GROUP_SHADES.get(group, "#777777")
        e.append(
            f'<circle cx="{_fmt(sx(x))}" cy="{_fmt(sy(y))}" r="5" '
            f'fill="{shade}" stroke="#333333" stroke-width="0.8"/>'
        )

    lx = MARGIN_L + plot_w + 14
    ly = MARGIN_T + 10
    e.append(
        f'<text x="{lx}" y="{ly}" font-family="sans-serif" font-size="12" '
        f'font-weight="bold">Word order</text>'
    )
    for i, group in enumerate(sorted(GROUP_SHADES)):
        gy = ly + 20 + i * 20
        # legend swatches are rects so data points are the only circles
        e.append(
            f'<rect x="{lx + 1}" y="{gy - 9}" width="10" height="10" '
            f'fill="{GROUP_SHADES[group]}" stroke="#333333" stroke-width="0.8"/>'
        )
        e.append(
            f'<text x="{lx + 18}" y="{gy}" font-family="sans-serif" '
            f'font-size="11">{GROUP_LABELS[group]}</text>'
        )

    e.append("</svg>")
    return "\n".join(e) + "\n"


def _escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
