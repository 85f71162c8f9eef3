"""Hand-written SVG forest plot: one row per study, one diamond per interval.

Positions are computed on the analysis scale, so ratio measures get a log
x-axis labelled with ratio values. All coordinates are printed with two
decimals; identical inputs give byte-identical files.
"""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

from .effects import Dataset
from .inversion import IntervalResult

WIDTH = 800
ROW_H = 40
TOP = 60
PLOT_X0, PLOT_X1 = 210.0, 600.0
WALD_Z = 1.959964

_RATIO_TICKS = (0.01, 0.02, 0.05, 0.1, 0.2, 0.25, 0.5, 1, 2, 4, 5, 10, 20, 50, 100)


def _f(x: float) -> str:
    return f"{x:.2f}"


def _linear_ticks(lo: float, hi: float, target: int = 6) -> list[float]:
    raw = (hi - lo) / target
    mag = 10 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 5, 10) if m * mag >= raw)
    first = math.ceil(lo / step)
    return [round(k * step, 12) for k in range(first, math.floor(hi / step) + 1)]


def _ratio_ticks(lo: float, hi: float) -> list[float]:
    ticks = [v for v in _RATIO_TICKS if lo <= math.log(v) <= hi]
    while len(ticks) > 9:
        ticks = ticks[::2]
    return ticks


def forest_svg(d: Dataset, intervals: list[IntervalResult], title: str = "") -> str:
    theta, sigma = d.theta, d.sigma
    lows, highs = theta - WALD_Z * sigma, theta + WALD_Z * sigma
    finite = [v for r in intervals for v in (r.lower, r.upper, r.point) if math.isfinite(v)]
    span_lo = min([0.0, *lows, *finite])
    span_hi = max([0.0, *highs, *finite])
    if span_hi == span_lo:
        span_lo, span_hi = span_lo - 1, span_hi + 1
    pad = 0.05 * (span_hi - span_lo)
    x_lo, x_hi = span_lo - pad, span_hi + pad

    def x(v: float) -> float:
        v = min(max(v, x_lo), x_hi)
        return PLOT_X0 + (v - x_lo) / (x_hi - x_lo) * (PLOT_X1 - PLOT_X0)

    m = d.measure
    rows = d.K + len(intervals)
    height = ROW_H * rows + 120
    axis_y = TOP + ROW_H * rows
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" '
        f'viewBox="0 0 {WIDTH} {height}" font-family="Helvetica,Arial,sans-serif" font-size="12">',
        f'<rect width="{WIDTH}" height="{height}" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="{WIDTH / 2:.2f}" y="30.00" text-anchor="middle" font-size="15">{escape(title)}</text>')

    ref = x(0.0)
    out.append(
        f'<line class="reference" x1="{_f(ref)}" y1="{_f(TOP - 10)}" x2="{_f(ref)}" y2="{_f(axis_y)}" '
        'stroke="#888" stroke-dasharray="4,3"/>'
    )

    for i, s in enumerate(d.studies):
        cy = TOP + ROW_H * i + ROW_H / 2
        lo, hi = lows[i], highs[i]
        est, lo_bt, hi_bt = m.back(s.theta_hat), m.back(lo), m.back(hi)
        out.append('<g class="study">')
        out.append(f'<text x="10.00" y="{_f(cy + 4)}">{escape(s.study_id)}</text>')
        out.append(f'<line x1="{_f(x(lo))}" y1="{_f(cy)}" x2="{_f(x(hi))}" y2="{_f(cy)}" stroke="black"/>')
        out.append(f'<rect x="{_f(x(s.theta_hat) - 4)}" y="{_f(cy - 4)}" width="8.00" height="8.00" fill="black"/>')
        out.append(f'<text x="{_f(PLOT_X1 + 15)}" y="{_f(cy + 4)}">{est:.2f} [{lo_bt:.2f}, {hi_bt:.2f}]</text>')
        out.append("</g>")

    for j, r in enumerate(intervals):
        cy = TOP + ROW_H * (d.K + j) + ROW_H / 2
        label = r.method if r.p is None else f"{r.method} p={r.p:g}"
        xl, xp, xu = x(r.lower), x(r.point), x(r.upper)
        pts = f"{_f(xl)},{_f(cy)} {_f(xp)},{_f(cy - 8)} {_f(xu)},{_f(cy)} {_f(xp)},{_f(cy + 8)}"
        out.append('<g class="summary">')
        out.append(f'<text x="10.00" y="{_f(cy + 4)}" font-weight="bold">{escape(label)}</text>')
        out.append(f'<polygon class="diamond" points="{pts}" fill="#3060a0"/>')
        out.append(
            f'<text x="{_f(PLOT_X1 + 15)}" y="{_f(cy + 4)}">{r.point_bt:.2f} '
            f'[{_fmt_end(r.lower_bt)}, {_fmt_end(r.upper_bt)}]</text>'
        )
        out.append("</g>")

    out.append(f'<line x1="{_f(PLOT_X0)}" y1="{_f(axis_y)}" x2="{_f(PLOT_X1)}" y2="{_f(axis_y)}" stroke="black"/>')
    ticks = _ratio_ticks(x_lo, x_hi) if m.is_ratio else _linear_ticks(x_lo, x_hi)
    for v in ticks:
        pos = x(math.log(v)) if m.is_ratio else x(v)
        out.append(f'<line x1="{_f(pos)}" y1="{_f(axis_y)}" x2="{_f(pos)}" y2="{_f(axis_y + 5)}" stroke="black"/>')
        out.append(f'<text class="tick" x="{_f(pos)}" y="{_f(axis_y + 20)}" text-anchor="middle">{v:g}</text>')
    axis_label = {"log_relative_risk": "Relative risk (log scale)", "log_hazard_ratio": "Hazard ratio (log scale)",
                  "risk_difference": "Risk difference"}[m.kind]
    out.append(
        f'<text x="{_f((PLOT_X0 + PLOT_X1) / 2)}" y="{_f(axis_y + 45)}" text-anchor="middle">{axis_label}</text>'
    )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _fmt_end(v: float) -> str:
    if np.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.2f}"
