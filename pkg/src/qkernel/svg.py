"""Minimal SVG line charts.  CSV files are the canonical output; these are
for a quick look."""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2")
WIDTH, HEIGHT, MARGIN = 720, 440, 56


def _ticks(lo: float, hi: float, count: int = 5) -> np.ndarray:
    if hi <= lo:
        return np.array([lo])
    return np.linspace(lo, hi, count)


def line_chart(series, title: str = "", xlabel: str = "x", ylabel: str = "y",
               step: bool = False) -> str:
    """Render ``series``, a list of ``(label, x, y)``, as an SVG document.

    With ``step`` each series is drawn as vertical bars, which suits lattice
    kernels better than a polyline.
    """
    xs = np.concatenate([np.asarray(s[1], float) for s in series])
    ys = np.concatenate([np.asarray(s[2], float) for s in series])
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = min(0.0, float(ys.min())), float(ys.max())
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0
    pw, ph = WIDTH - 2 * MARGIN, HEIGHT - 2 * MARGIN

    def px(v):
        return MARGIN + (v - x0) / (x1 - x0) * pw

    def py(v):
        return HEIGHT - MARGIN - (v - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'font-family="sans-serif" font-size="11">',
           f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<text x="{WIDTH / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
           f'<rect x="{MARGIN}" y="{MARGIN}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>']
    for t in _ticks(x0, x1):
        out.append(f'<text x="{px(t):.1f}" y="{HEIGHT - MARGIN + 16}" text-anchor="middle">{t:.4g}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<text x="{MARGIN - 6}" y="{py(t) + 4:.1f}" text-anchor="end">{t:.4g}</text>')
    out.append(f'<text x="{WIDTH / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="14" y="{HEIGHT / 2:.1f}" transform="rotate(-90 14 {HEIGHT / 2:.1f})" '
               f'text-anchor="middle">{escape(ylabel)}</text>')
    for i, (label, x, y) in enumerate(series):
        colour = PALETTE[i % len(PALETTE)]
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        if step:
            bars = " ".join(f"M{px(a):.2f},{py(0.0):.2f}V{py(b):.2f}" for a, b in zip(x, y))
            out.append(f'<path d="{bars}" stroke="{colour}" stroke-width="2" fill="none"/>')
        else:
            pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, y))
            out.append(f'<polyline points="{pts}" fill="none" stroke="{colour}" stroke-width="1.5"/>')
        ly = MARGIN + 14 + 14 * i
        out.append(f'<line x1="{WIDTH - MARGIN - 110}" y1="{ly - 4}" x2="{WIDTH - MARGIN - 92}" '
                   f'y2="{ly - 4}" stroke="{colour}" stroke-width="2"/>')
        out.append(f'<text x="{WIDTH - MARGIN - 88}" y="{ly}">{escape(str(label))}</text>')
    out.append("</svg>\n")
    return "\n".join(out)


def write_chart(path, series, **kwargs) -> None:
    with open(path, "w") as fh:
        fh.write(line_chart(series, **kwargs))
