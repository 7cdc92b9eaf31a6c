"""Minimal standalone SVG rendering: step/line curves and scatter plots.

No external renderer; output is a self-contained SVG with axes, ticks, and
polylines, enough for gain/lift curves and dependence scatters.
"""

from __future__ import annotations

import numpy as np

WIDTH, HEIGHT = 720, 480
MARGIN = 60
PALETTE = ("#1f6fb4", "#d1483c", "#3d9970", "#8c5aa8", "#c98a1f")


def _scale(values, lo, hi, out_lo, out_hi):
    span = hi - lo
    if span == 0:
        span = 1.0
    return out_lo + (np.asarray(values, dtype=float) - lo) * (out_hi - out_lo) / span


def _axes(lo_x, hi_x, lo_y, hi_y, title, x_label, y_label) -> list[str]:
    parts = [
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="24" text-anchor="middle" font-size="16">{title}</text>',
        f'<line x1="{MARGIN}" y1="{HEIGHT - MARGIN}" x2="{WIDTH - MARGIN}" y2="{HEIGHT - MARGIN}" stroke="black"/>',
        f'<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{HEIGHT - MARGIN}" stroke="black"/>',
        f'<text x="{WIDTH / 2}" y="{HEIGHT - 16}" text-anchor="middle" font-size="12">{x_label}</text>',
        f'<text x="18" y="{HEIGHT / 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 18 {HEIGHT / 2})">{y_label}</text>',
    ]
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        x = MARGIN + frac * (WIDTH - 2 * MARGIN)
        y = HEIGHT - MARGIN - frac * (HEIGHT - 2 * MARGIN)
        xv = lo_x + frac * (hi_x - lo_x)
        yv = lo_y + frac * (hi_y - lo_y)
        parts.append(
            f'<text x="{x:.1f}" y="{HEIGHT - MARGIN + 16}" text-anchor="middle" font-size="10">{xv:.3g}</text>'
        )
        parts.append(
            f'<text x="{MARGIN - 6}" y="{y + 3:.1f}" text-anchor="end" font-size="10">{yv:.3g}</text>'
        )
    return parts


def render_curves(series: dict[str, tuple[np.ndarray, np.ndarray]], title, x_label, y_label, path):
    """Polyline per named series; deterministic output for equal input."""
    all_x = np.concatenate([x for x, _ in series.values()])
    all_y = np.concatenate([y for _, y in series.values()])
    lo_x, hi_x = float(all_x.min()), float(all_x.max())
    lo_y, hi_y = float(min(all_y.min(), 0.0)), float(all_y.max())
    parts = _axes(lo_x, hi_x, lo_y, hi_y, title, x_label, y_label)
    for i, (name, (x, y)) in enumerate(series.items()):
        px = _scale(x, lo_x, hi_x, MARGIN, WIDTH - MARGIN)
        py = _scale(y, lo_y, hi_y, HEIGHT - MARGIN, MARGIN)
        points = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py))
        color = PALETTE[i % len(PALETTE)]
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{points}"/>')
        parts.append(
            f'<text x="{WIDTH - MARGIN}" y="{MARGIN + 16 * i}" text-anchor="end" '
            f'font-size="12" fill="{color}">{name}</text>'
        )
    _write(path, parts)


def render_scatter(x, y, title, x_label, y_label, path, band=None, flags=None):
    """Scatter with an optional horizontal band (e.g. SHAP 10-90% range)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    lo_x, hi_x = float(x.min()), float(x.max())
    lo_y, hi_y = float(y.min()), float(y.max())
    if band is not None:
        lo_y = min(lo_y, band[0])
        hi_y = max(hi_y, band[1])
    parts = _axes(lo_x, hi_x, lo_y, hi_y, title, x_label, y_label)
    if band is not None:
        y0 = _scale([band[1]], lo_y, hi_y, HEIGHT - MARGIN, MARGIN)[0]
        y1 = _scale([band[0]], lo_y, hi_y, HEIGHT - MARGIN, MARGIN)[0]
        parts.append(
            f'<rect x="{MARGIN}" y="{y0:.2f}" width="{WIDTH - 2 * MARGIN}" '
            f'height="{max(0.0, y1 - y0):.2f}" fill="#cccccc" opacity="0.45"/>'
        )
    px = _scale(x, lo_x, hi_x, MARGIN, WIDTH - MARGIN)
    py = _scale(y, lo_y, hi_y, HEIGHT - MARGIN, MARGIN)
    for i in range(len(x)):
        color = "#d1483c" if flags is not None and flags[i] else "#1f6fb4"
        parts.append(f'<circle cx="{px[i]:.2f}" cy="{py[i]:.2f}" r="2" fill="{color}" opacity="0.6"/>')
    _write(path, parts)


def _write(path, parts):
    with open(path, "w") as fh:
        fh.write(
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}">\n'
        )
        fh.write("\n".join(parts))
        fh.write("\n</svg>\n")
