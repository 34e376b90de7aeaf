"""Minimal SVG scatter plots: colour encodes the estimated group, marker the true class."""

from __future__ import annotations

from pathlib import Path

import numpy as np

__all__ = ["scatter_svg", "write_scatter_svg"]

PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")
MARKERS = ("circle", "square", "triangle", "diamond", "cross")


def _marker(kind, x, y, r, colour):
    if kind == "circle":
        return f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{r}" fill="{colour}"/>'
    if kind == "square":
        return f'<rect x="{x - r:.2f}" y="{y - r:.2f}" width="{2 * r}" height="{2 * r}" fill="{colour}"/>'
    if kind == "triangle":
        pts = f"{x:.2f},{y - r:.2f} {x - r:.2f},{y + r:.2f} {x + r:.2f},{y + r:.2f}"
        return f'<polygon points="{pts}" fill="{colour}"/>'
    if kind == "diamond":
        pts = f"{x:.2f},{y - r:.2f} {x + r:.2f},{y:.2f} {x:.2f},{y + r:.2f} {x - r:.2f},{y:.2f}"
        return f'<polygon points="{pts}" fill="{colour}"/>'
    return (f'<path d="M{x - r:.2f},{y - r:.2f}L{x + r:.2f},{y + r:.2f}'
            f'M{x - r:.2f},{y + r:.2f}L{x + r:.2f},{y - r:.2f}" stroke="{colour}" stroke-width="1.5"/>')


def scatter_svg(points, groups, truth=None, size: int = 480, radius: int = 3, title: str | None = None) -> str:
    """SVG document for a 2D scatter plot.

    Points with unobserved coordinates (NaN) are skipped.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("scatter plot needs two-dimensional points")
    groups = np.asarray(groups)
    _, gcode = np.unique(groups, return_inverse=True)
    if truth is None:
        tcode = np.zeros(len(pts), dtype=int)
    else:
        _, tcode = np.unique(np.asarray(truth).astype(str), return_inverse=True)
    ok = np.isfinite(pts).all(axis=1)
    pad = 20
    lo = pts[ok].min(axis=0) if ok.any() else np.zeros(2)
    span = np.ptp(pts[ok], axis=0) if ok.any() else np.ones(2)
    span = np.where(span > 0, span, 1.0)
    scale = (size - 2 * pad) / span.max()
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">',
           f'<rect width="{size}" height="{size}" fill="white"/>']
    if title:
        out.append(f'<title>{title}</title>')
    for i in np.flatnonzero(ok):
        x = pad + (pts[i, 0] - lo[0]) * scale
        y = size - pad - (pts[i, 1] - lo[1]) * scale
        out.append(_marker(MARKERS[tcode[i] % len(MARKERS)], x, y, radius,
                           PALETTE[gcode[i] % len(PALETTE)]))
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_scatter_svg(path, points, groups, truth=None, **kw) -> None:
    Path(path).write_text(scatter_svg(points, groups, truth, **kw))
