"""Minimal deterministic SVG line/bar plots.

Hand-rolled so exported plot bytes depend only on the data: no timestamps,
no generated ids, no library version drift.
"""

from __future__ import annotations

import math

WIDTH, HEIGHT = 640, 400
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 62, 16, 34, 46

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _ticks(lo: float, hi: float, n: int = 5):
    if not math.isfinite(lo) or not math.isfinite(hi):
        lo, hi = 0.0, 1.0
    if hi <= lo:
        hi = lo + 1.0
    step = (hi - lo) / (n - 1)
    return [lo + i * step for i in range(n)]


class _Canvas:
    def __init__(self, title, xlabel, ylabel):
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}">',
            f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
            f'<text x="{WIDTH / 2:.1f}" y="20" text-anchor="middle" '
            f'font-family="sans-serif" font-size="14">{title}</text>',
            f'<text x="{WIDTH / 2:.1f}" y="{HEIGHT - 8}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="12">{xlabel}</text>',
            f'<text x="14" y="{HEIGHT / 2:.1f}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="12" '
            f'transform="rotate(-90 14 {HEIGHT / 2:.1f})">{ylabel}</text>',
        ]

    def add(self, s):
        self.parts.append(s)

    def finish(self) -> str:
        self.parts.append("</svg>")
        return "\n".join(self.parts) + "\n"


def _frame(canvas, xlo, xhi, ylo, yhi, x_tick_labels=None):
    x0, x1 = MARGIN_L, WIDTH - MARGIN_R
    y0, y1 = HEIGHT - MARGIN_B, MARGIN_T

    def sx(x):
        return x0 + (x - xlo) / (xhi - xlo) * (x1 - x0)

    def sy(y):
        return y0 + (y - ylo) / (yhi - ylo) * (y1 - y0)

    canvas.add(f'<rect x="{x0}" y="{y1}" width="{x1 - x0}" height="{y0 - y1}" '
               f'fill="none" stroke="black" stroke-width="1"/>')
    for t in _ticks(ylo, yhi):
        canvas.add(f'<line x1="{x0 - 4}" y1="{sy(t):.1f}" x2="{x0}" y2="{sy(t):.1f}" stroke="black"/>')
        canvas.add(f'<text x="{x0 - 7}" y="{sy(t) + 4:.1f}" text-anchor="end" '
                   f'font-family="sans-serif" font-size="10">{_fmt(t)}</text>')
    if x_tick_labels is None:
        for t in _ticks(xlo, xhi):
            canvas.add(f'<line x1="{sx(t):.1f}" y1="{y0}" x2="{sx(t):.1f}" y2="{y0 + 4}" stroke="black"/>')
            canvas.add(f'<text x="{sx(t):.1f}" y="{y0 + 16}" text-anchor="middle" '
                       f'font-family="sans-serif" font-size="10">{_fmt(t)}</text>')
    else:
        for xv, label in x_tick_labels:
            canvas.add(f'<text x="{sx(xv):.1f}" y="{y0 + 16}" text-anchor="middle" '
                       f'font-family="sans-serif" font-size="10">{label}</text>')
    return sx, sy


def _legend(canvas, names):
    for i, name in enumerate(names):
        color = PALETTE[i % len(PALETTE)]
        y = MARGIN_T + 6 + 14 * i
        canvas.add(f'<rect x="{WIDTH - MARGIN_R - 130}" y="{y - 8}" width="10" height="10" fill="{color}"/>')
        canvas.add(f'<text x="{WIDTH - MARGIN_R - 116}" y="{y + 1}" '
                   f'font-family="sans-serif" font-size="10">{name}</text>')


def line_plot(series: dict, title: str, xlabel: str, ylabel: str) -> str:
    """series: name -> (xs, ys); NaNs break the polyline."""
    xs_all = [x for xs, _ in series.values() for x in xs]
    ys_all = [y for _, ys in series.values() for y in ys if math.isfinite(y)]
    xlo, xhi = (min(xs_all), max(xs_all)) if xs_all else (0.0, 1.0)
    ylo, yhi = (min(ys_all), max(ys_all)) if ys_all else (0.0, 1.0)
    if xhi <= xlo:
        xhi = xlo + 1.0
    if yhi <= ylo:
        yhi = ylo + 1.0
    pad = 0.05 * (yhi - ylo)
    ylo, yhi = ylo - pad, yhi + pad
    canvas = _Canvas(title, xlabel, ylabel)
    sx, sy = _frame(canvas, xlo, xhi, ylo, yhi)
    for i, (name, (xs, ys)) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        runs, current = [], []
        for x, y in zip(xs, ys):
            if math.isfinite(y):
                current.append(f"{sx(x):.1f},{sy(y):.1f}")
            elif current:
                runs.append(current)
                current = []
        if current:
            runs.append(current)
        for run in runs:
            canvas.add(f'<polyline points="{" ".join(run)}" fill="none" '
                       f'stroke="{color}" stroke-width="1.5"/>')
    _legend(canvas, list(series))
    return canvas.finish()


def bar_plot(groups: dict, categories: list, title: str, xlabel: str, ylabel: str) -> str:
    """groups: name -> list of heights aligned with categories; NaN bars are skipped."""
    heights = [h for hs in groups.values() for h in hs if math.isfinite(h)]
    ylo = min(0.0, min(heights)) if heights else 0.0
    yhi = max(heights) if heights else 1.0
    if yhi <= ylo:
        yhi = ylo + 1.0
    yhi += 0.05 * (yhi - ylo)
    n_cat, n_grp = len(categories), max(len(groups), 1)
    canvas = _Canvas(title, xlabel, ylabel)
    ticks = [(i + 0.5, str(c)) for i, c in enumerate(categories)]
    sx, sy = _frame(canvas, 0.0, float(n_cat), ylo, yhi, x_tick_labels=ticks)
    slot = 0.8 / n_grp
    for gi, (name, hs) in enumerate(groups.items()):
        color = PALETTE[gi % len(PALETTE)]
        for ci, h in enumerate(hs):
            if not math.isfinite(h):
                continue
            x_left = sx(ci + 0.1 + gi * slot)
            x_right = sx(ci + 0.1 + (gi + 1) * slot)
            y_top, y_base = sy(max(h, 0.0)), sy(max(ylo, 0.0))
            canvas.add(f'<rect x="{x_left:.1f}" y="{y_top:.1f}" '
                       f'width="{x_right - x_left:.1f}" height="{abs(y_base - y_top):.1f}" '
                       f'fill="{color}"/>')
    _legend(canvas, list(groups))
    return canvas.finish()
