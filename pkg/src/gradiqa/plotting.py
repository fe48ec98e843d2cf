"""Minimal dependency-free SVG line charts for training-history curves."""

from __future__ import annotations

import math
from pathlib import Path

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b")

_W, _H = 640, 400
_ML, _MR, _MT, _MB = 60, 20, 30, 40


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def line_chart_svg(
    series: dict[str, list[float]],
    path,
    title: str = "",
    x_label: str = "epoch",
    y_label: str = "",
    log_y: bool = False,
) -> None:
    """Write one SVG chart; each series is drawn over x = 1..len(series)."""
    finite = [
        v for vs in series.values() for v in vs
        if math.isfinite(v) and (not log_y or v > 0)
    ]
    if not finite:
        raise ValueError("nothing plottable in the given series")
    y_lo, y_hi = min(finite), max(finite)
    if log_y:
        y_lo, y_hi = math.log10(y_lo), math.log10(y_hi)
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    n = max(len(vs) for vs in series.values())
    x_hi = max(n, 2)

    def px(i):
        return _ML + (i - 1) / (x_hi - 1) * (_W - _ML - _MR)

    def py(v):
        if log_y:
            v = math.log10(v)
        return _H - _MB - (v - y_lo) / (y_hi - y_lo) * (_H - _MT - _MB)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="monospace" font-size="12">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W // 2}" y="18" text-anchor="middle">{title}</text>',
        f'<line x1="{_ML}" y1="{_H - _MB}" x2="{_W - _MR}" y2="{_H - _MB}" stroke="black"/>',
        f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_H - _MB}" stroke="black"/>',
        f'<text x="{_W // 2}" y="{_H - 8}" text-anchor="middle">{x_label}</text>',
        f'<text x="14" y="{_H // 2}" text-anchor="middle" '
        f'transform="rotate(-90 14 {_H // 2})">{y_label}{" (log)" if log_y else ""}</text>',
        f'<text x="{_ML - 4}" y="{_H - _MB}" text-anchor="end">'
        f'{_fmt(10 ** y_lo if log_y else y_lo)}</text>',
        f'<text x="{_ML - 4}" y="{_MT + 10}" text-anchor="end">'
        f'{_fmt(10 ** y_hi if log_y else y_hi)}</text>',
        f'<text x="{_ML}" y="{_H - _MB + 14}">1</text>',
        f'<text x="{_W - _MR}" y="{_H - _MB + 14}" text-anchor="end">{x_hi}</text>',
    ]
    for ci, (name, values) in enumerate(series.items()):
        color = _COLORS[ci % len(_COLORS)]
        points = " ".join(
            f"{px(i + 1):.2f},{py(v):.2f}"
            for i, v in enumerate(values)
            if math.isfinite(v) and (not log_y or v > 0)
        )
        if points:
            parts.append(
                f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{points}"/>'
            )
        parts.append(
            f'<text x="{_W - _MR - 8}" y="{_MT + 16 + 16 * ci}" text-anchor="end" '
            f'fill="{color}">{name}</text>'
        )
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts))
