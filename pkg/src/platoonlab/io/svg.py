"""Deterministic SVG line plots and heatmaps (no external plotting library)."""
from __future__ import annotations

from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np

from platoonlab.errors import ConfigError

WIDTH, HEIGHT = 720, 420
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 150, 40, 50
MAX_POINTS = 2000
COLORS = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
          "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


def _esc(s: str) -> str:
    return (s.replace("&", "&amp;").replace("<", "&lt;")
            .replace(">", "&gt;").replace('"', "&quot;"))


def _nice_range(lo, hi):
    if not np.isfinite(lo) or not np.isfinite(hi):
        return -1.0, 1.0
    if hi - lo < 1e-12:
        pad = max(abs(lo) * 0.05, 0.5)
        return lo - pad, hi + pad
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def _ticks(lo, hi, n=5):
    return [lo + (hi - lo) * k / (n - 1) for k in range(n)]


def line_plot(series: Sequence[Tuple[str, np.ndarray, np.ndarray]], title: str = "",
              xlabel: str = "Time (s)", ylabel: str = "") -> str:
    """One polyline per ``(label, x, y)`` entry, with a legend on the right."""
    if not series:
        raise ConfigError("no series to plot")
    for label, x, y in series:
        if len(x) == 0 or len(x) != len(y):
            raise ConfigError(f"series {label!r} is empty or ragged")
    xs = np.concatenate([np.asarray(s[1], float) for s in series])
    ys = np.concatenate([np.asarray(s[2], float) for s in series])
    ys_f = ys[np.isfinite(ys)]
    x0, x1 = float(xs.min()), float(xs.max())
    if x1 <= x0:
        x1 = x0 + 1.0
    y0, y1 = _nice_range(float(ys_f.min()) if ys_f.size else 0.0,
                         float(ys_f.max()) if ys_f.size else 0.0)
    pw = WIDTH - MARGIN_L - MARGIN_R
    ph = HEIGHT - MARGIN_T - MARGIN_B

    def px(x):
        return MARGIN_L + (x - x0) / (x1 - x0) * pw

    def py(y):
        return MARGIN_T + (y1 - y) / (y1 - y0) * ph

    out: List[str] = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" font-size="15">{_esc(title)}</text>',
        f'<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for tx in _ticks(x0, x1):
        out.append(f'<text x="{px(tx):.2f}" y="{HEIGHT - MARGIN_B + 16}" text-anchor="middle" '
                   f'font-size="11">{tx:.4g}</text>')
    for ty in _ticks(y0, y1):
        out.append(f'<text x="{MARGIN_L - 6}" y="{py(ty) + 4:.2f}" text-anchor="end" '
                   f'font-size="11">{ty:.4g}</text>')
    out.append(f'<text x="{MARGIN_L + pw / 2:.1f}" y="{HEIGHT - 10}" text-anchor="middle" '
               f'font-size="12">{_esc(xlabel)}</text>')
    out.append(f'<text x="16" y="{MARGIN_T + ph / 2:.1f}" text-anchor="middle" font-size="12" '
               f'transform="rotate(-90 16 {MARGIN_T + ph / 2:.1f})">{_esc(ylabel)}</text>')
    for k, (label, x, y) in enumerate(series):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        step = max(1, int(np.ceil(len(x) / MAX_POINTS)))
        idx = np.arange(0, len(x), step)
        if idx[-1] != len(x) - 1:
            idx = np.append(idx, len(x) - 1)
        pts = " ".join(f"{px(x[i]):.2f},{py(y[i]):.2f}" for i in idx if np.isfinite(y[i]))
        color = COLORS[k % len(COLORS)]
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = MARGIN_T + 14 + 18 * k
        lx = WIDTH - MARGIN_R + 12
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 20}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 26}" y="{ly + 4}" font-size="12">{_esc(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def heatmap(values: np.ndarray, x_axis: Tuple[str, float, float], y_axis: Tuple[str, float, float],
            title: str = "", max_cells: int = 100) -> str:
    """Green/red stable map of a 2D metric array ``values[ix, iy]``; NaN cells are grey."""
    v = np.asarray(values, float)
    if v.ndim != 2 or v.size == 0:
        raise ConfigError("heatmap needs a non-empty 2D array")
    sx = max(1, int(np.ceil(v.shape[0] / max_cells)))
    sy = max(1, int(np.ceil(v.shape[1] / max_cells)))
    v = v[::sx, ::sy]
    nx, ny = v.shape
    pw = WIDTH - MARGIN_L - MARGIN_R
    ph = HEIGHT - MARGIN_T - MARGIN_B
    cw, ch = pw / nx, ph / ny
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" font-size="15">{_esc(title)}</text>',
    ]
    for i in range(nx):
        for j in range(ny):
            val = v[i, j]
            fill = "#bbbbbb" if not np.isfinite(val) else ("#4daf4a" if val >= 0 else "#e41a1c")
            y = MARGIN_T + ph - (j + 1) * ch
            out.append(f'<rect x="{MARGIN_L + i * cw:.2f}" y="{y:.2f}" width="{cw:.2f}" '
                       f'height="{ch:.2f}" fill="{fill}"/>')
    xn, xlo, xhi = x_axis
    yn, ylo, yhi = y_axis
    out.append(f'<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    for k, tx in enumerate(_ticks(xlo, xhi)):
        out.append(f'<text x="{MARGIN_L + pw * k / 4:.2f}" y="{HEIGHT - MARGIN_B + 16}" '
                   f'text-anchor="middle" font-size="11">{tx:.4g}</text>')
    for k, ty in enumerate(_ticks(ylo, yhi)):
        out.append(f'<text x="{MARGIN_L - 6}" y="{MARGIN_T + ph - ph * k / 4 + 4:.2f}" '
                   f'text-anchor="end" font-size="11">{ty:.4g}</text>')
    out.append(f'<text x="{MARGIN_L + pw / 2:.1f}" y="{HEIGHT - 10}" text-anchor="middle" '
               f'font-size="12">{_esc(xn)}</text>')
    out.append(f'<text x="16" y="{MARGIN_T + ph / 2:.1f}" text-anchor="middle" font-size="12" '
               f'transform="rotate(-90 16 {MARGIN_T + ph / 2:.1f})">{_esc(yn)}</text>')
    lx = WIDTH - MARGIN_R + 12
    for k, (label, color) in enumerate((("Stable", "#4daf4a"), ("Unstable", "#e41a1c"),
                                        ("Undefined", "#bbbbbb"))):
        ly = MARGIN_T + 14 + 18 * k
        out.append(f'<rect x="{lx}" y="{ly - 8}" width="14" height="12" fill="{color}"/>')
        out.append(f'<text x="{lx + 20}" y="{ly + 3}" font-size="12">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(text: str, path) -> Path:
    path = Path(path)
    path.write_text(text, encoding="utf-8")
    return path
