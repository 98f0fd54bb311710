"""Minimal self-contained SVG log-log scatter plots with fitted lines."""
from __future__ import annotations

import math
from dataclasses import dataclass
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 640, 480
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 20, 40, 55


@dataclass
class Series:
    label: str
    x: list[float]
    y: list[float]
    color: str = "black"
    fit: tuple[float, float, float, float] | None = None  # slope, intercept, x_lo, x_hi


def _decades(lo: float, hi: float) -> tuple[int, int]:
    return math.floor(math.log10(lo)), math.ceil(math.log10(hi))


def loglog_svg(series: list[Series], title: str = "", xlabel: str = "", ylabel: str = "") -> str:
    xs = [v for s in series for v in s.x if v > 0]
    ys = [v for s in series for v in s.y if v > 0 and math.isfinite(v)]
    if not xs or not ys:
        raise ValueError("nothing positive to plot")
    x0, x1 = _decades(min(xs), max(xs))
    y0, y1 = _decades(min(ys), max(ys))
    x1 = max(x1, x0 + 1)
    y1 = max(y1, y0 + 1)
    pw = WIDTH - MARGIN_L - MARGIN_R
    ph = HEIGHT - MARGIN_T - MARGIN_B

    def px(v):
        return MARGIN_L + (math.log10(v) - x0) / (x1 - x0) * pw

    def py(v):
        return MARGIN_T + (y1 - math.log10(v)) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'font-family="sans-serif" font-size="12">',
        f'<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for e in range(x0, x1 + 1):
        x = px(10.0**e)
        out.append(f'<line x1="{x:.2f}" y1="{MARGIN_T + ph}" x2="{x:.2f}" y2="{MARGIN_T + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{x:.2f}" y="{MARGIN_T + ph + 20}" text-anchor="middle">1e{e}</text>')
    for e in range(y0, y1 + 1):
        y = py(10.0**e)
        out.append(f'<line x1="{MARGIN_L - 5}" y1="{y:.2f}" x2="{MARGIN_L}" y2="{y:.2f}" stroke="black"/>')
        out.append(f'<text x="{MARGIN_L - 8}" y="{y + 4:.2f}" text-anchor="end">1e{e}</text>')
    for k, s in enumerate(series):
        for xv, yv in zip(s.x, s.y):
            if xv > 0 and yv > 0 and math.isfinite(yv):
                out.append(f'<circle cx="{px(xv):.2f}" cy="{py(yv):.2f}" r="3.5" fill="{s.color}"/>')
        label = escape(s.label)
        if s.fit is not None:
            slope, icpt, lo, hi = s.fit
            ya, yb = 10 ** (icpt + slope * math.log10(lo)), 10 ** (icpt + slope * math.log10(hi))
            out.append(
                f'<line x1="{px(lo):.2f}" y1="{py(ya):.2f}" x2="{px(hi):.2f}" y2="{py(yb):.2f}" '
                f'stroke="{s.color}" stroke-dasharray="2,4" stroke-width="1.5"/>'
            )
            label += f" (slope {slope:.2f})"
        out.append(
            f'<text x="{MARGIN_L + 10}" y="{MARGIN_T + 18 + 16 * k}" fill="{s.color}">{label}</text>'
        )
    out.append(f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>')
    out.append(f'<text x="{MARGIN_L + pw / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(
        f'<text x="16" y="{MARGIN_T + ph / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {MARGIN_T + ph / 2:.1f})">{escape(ylabel)}</text>'
    )
    out.append("</svg>")
    return "\n".join(out) + "\n"
