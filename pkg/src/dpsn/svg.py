"""Minimal SVG line-chart emitter for series / shapelet overlays."""

from __future__ import annotations

from html import escape
from typing import Sequence

import numpy as np

SERIES_COLOR = "#1f77b4"
SHAPELET_COLOR = "#d62728"


def _points(xs, ys, x_map, y_map) -> str:
    return " ".join(f"{x_map(x):.2f},{y_map(y):.2f}" for x, y in zip(xs, ys))


def overlay_svg(series: Sequence[float], shapelet: Sequence[float], start: int, title: str = "",
                width: int = 640, height: int = 320, margin: int = 30) -> str:
    """Series as a blue polyline with the shapelet drawn in red at ``start``."""
    series = np.asarray(series, dtype=np.float64)
    shapelet = np.asarray(shapelet, dtype=np.float64)
    lo = float(min(series.min(), shapelet.min()))
    hi = float(max(series.max(), shapelet.max()))
    if hi == lo:
        hi, lo = hi + 1.0, lo - 1.0
    span_x = max(series.size - 1, 1)

    def x_map(i):
        return margin + (width - 2 * margin) * i / span_x

    def y_map(v):
        return height - margin - (height - 2 * margin) * (v - lo) / (hi - lo)

    base = _points(range(series.size), series, x_map, y_map)
    overlay = _points(range(start, start + shapelet.size), shapelet, x_map, y_map)
    return "\n".join([
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="{margin * 0.6:.1f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13">{escape(title)}</text>',
        f'<polyline class="series" fill="none" stroke="{SERIES_COLOR}" stroke-width="1.5" points="{base}"/>',
        f'<polyline class="shapelet" fill="none" stroke="{SHAPELET_COLOR}" stroke-width="2.5" '
        f'points="{overlay}"/>',
        "</svg>",
        "",
    ])
