"""Minimal deterministic SVG emission for traces, heatmaps, and strata maps.

No plotting library: line plots are hand-built polylines, heatmaps are
base64-embedded PNGs (Pillow), and all coordinates are formatted with a
fixed precision so identical inputs produce byte-identical files.
"""

from __future__ import annotations

import base64
import io
import math

import numpy as np

WIDTH, HEIGHT = 720, 480
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 72, 24, 36, 56
PALETTE = ("#1f6fb4", "#d1541e", "#2b8a3e", "#8a2be2", "#b8860b", "#cc2a6e")

# label -> marker color for strata maps
LABEL_COLORS = {
    "Regular": "#1f6fb4",
    "Singular": "#d1541e",
    "ambiguous": "#8a2be2",
    "skipped": "#9aa0a6",
}


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def _nice_step(span: float, n: int) -> float:
    raw = span / max(n, 1)
    mag = 10.0 ** math.floor(math.log10(raw)) if raw > 0 else 1.0
    for m in (1.0, 2.0, 5.0, 10.0):
        if m * mag >= raw:
            return m * mag
    return 10.0 * mag


def _ticks(lo: float, hi: float, n: int = 6) -> list[float]:
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        return [lo]
    step = _nice_step(hi - lo, n)
    start = math.ceil(lo / step) * step
    out = []
    t = start
    while t <= hi + 1e-12 * step:
        out.append(0.0 if abs(t) < 1e-12 * step else t)
        t += step
    return out


def _log_ticks(lo: float, hi: float) -> list[float]:
    out = []
    d = math.floor(math.log10(lo))
    while 10.0**d <= hi * (1 + 1e-12):
        if 10.0**d >= lo * (1 - 1e-12):
            out.append(10.0**d)
        d += 1
    return out or [lo]


class _Axes:
    def __init__(self, xlim, ylim, logx=False, logy=False):
        self.logx, self.logy = logx, logy
        self.x0, self.x1 = xlim
        self.y0, self.y1 = ylim
        if logx:
            self.x0, self.x1 = math.log10(self.x0), math.log10(self.x1)
        if logy:
            self.y0, self.y1 = math.log10(self.y0), math.log10(self.y1)
        if self.x1 <= self.x0:
            self.x1 = self.x0 + 1.0
        if self.y1 <= self.y0:
            self.y1 = self.y0 + 1.0

    def px(self, x: float) -> float:
        if self.logx:
            x = math.log10(max(x, 1e-300))
        t = (x - self.x0) / (self.x1 - self.x0)
        return MARGIN_L + t * (WIDTH - MARGIN_L - MARGIN_R)

    def py(self, y: float) -> float:
        if self.logy:
            y = math.log10(max(y, 1e-300))
        t = (y - self.y0) / (self.y1 - self.y0)
        return HEIGHT - MARGIN_B - t * (HEIGHT - MARGIN_T - MARGIN_B)


def _svg_header(title: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" '
        f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH // 2}" y="22" font-family="monospace" font-size="14" '
        f'text-anchor="middle">{title}</text>',
    ]


def _frame_and_ticks(ax: _Axes, xlabel: str, ylabel: str) -> list[str]:
    parts = []
    x_px0, x_px1 = MARGIN_L, WIDTH - MARGIN_R
    y_px0, y_px1 = HEIGHT - MARGIN_B, MARGIN_T
    parts.append(f'<rect x="{x_px0}" y="{y_px1}" width="{x_px1 - x_px0}" '
                 f'height="{y_px0 - y_px1}" fill="none" stroke="#444"/>')
    xticks = (_log_ticks(10**ax.x0, 10**ax.x1) if ax.logx
              else _ticks(ax.x0, ax.x1))
    yticks = (_log_ticks(10**ax.y0, 10**ax.y1) if ax.logy
              else _ticks(ax.y0, ax.y1))
    for t in xticks:
        px = ax.px(t)
        parts.append(f'<line x1="{_fmt(px)}" y1="{y_px0}" x2="{_fmt(px)}" '
                     f'y2="{y_px0 + 5}" stroke="#444"/>')
        parts.append(f'<text x="{_fmt(px)}" y="{y_px0 + 18}" font-family="monospace" '
                     f'font-size="10" text-anchor="middle">{_fmt(t)}</text>')
    for t in yticks:
        py = ax.py(t)
        parts.append(f'<line x1="{x_px0 - 5}" y1="{_fmt(py)}" x2="{x_px0}" '
                     f'y2="{_fmt(py)}" stroke="#444"/>')
        parts.append(f'<text x="{x_px0 - 8}" y="{_fmt(py + 3)}" font-family="monospace" '
                     f'font-size="10" text-anchor="end">{_fmt(t)}</text>')
    parts.append(f'<text x="{(x_px0 + x_px1) // 2}" y="{HEIGHT - 12}" '
                 f'font-family="monospace" font-size="12" text-anchor="middle">{xlabel}</text>')
    parts.append(f'<text x="16" y="{(y_px0 + y_px1) // 2}" font-family="monospace" '
                 f'font-size="12" text-anchor="middle" '
                 f'transform="rotate(-90 16 {(y_px0 + y_px1) // 2})">{ylabel}</text>')
    return parts


def line_plot(path, series, title="", xlabel="", ylabel="",
              logx=False, logy=False) -> None:
    """Write a polyline plot. series: iterable of (label, x, y) triples."""
    series = [(lab, np.asarray(x, float), np.asarray(y, float))
              for lab, x, y in series]
    xs = np.concatenate([x for _, x, _ in series]) if series else np.array([0.0, 1.0])
    ys = np.concatenate([y for _, _, y in series]) if series else np.array([0.0, 1.0])
    finite_x = xs[np.isfinite(xs)]
    finite_y = ys[np.isfinite(ys)]
    if logx:
        finite_x = finite_x[finite_x > 0]
    if logy:
        finite_y = finite_y[finite_y > 0]
    if len(finite_x) == 0:
        finite_x = np.array([0.1, 1.0])
    if len(finite_y) == 0:
        finite_y = np.array([0.1, 1.0])
    xlim = (float(finite_x.min()), float(finite_x.max()))
    ylim = (float(finite_y.min()), float(finite_y.max()))
    if not logy:
        pad = 0.05 * (ylim[1] - ylim[0] or abs(ylim[0]) or 1.0)
        ylim = (ylim[0] - pad, ylim[1] + pad)
    ax = _Axes(xlim, ylim, logx=logx, logy=logy)

    parts = _svg_header(title)
    parts += _frame_and_ticks(ax, xlabel, ylabel)
    for k, (label, x, y) in enumerate(series):
        color = PALETTE[k % len(PALETTE)]
        mask = np.isfinite(x) & np.isfinite(y)
        if logx:
            mask &= x > 0
        if logy:
            mask &= y > 0
        pts = " ".join(f"{_fmt(ax.px(a))},{_fmt(ax.py(b))}"
                       for a, b in zip(x[mask], y[mask]))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                     f'stroke-width="1.5"/>')
        ly = MARGIN_T + 14 + 14 * k
        lx = WIDTH - MARGIN_R - 150
        parts.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 18}" y2="{ly - 4}" '
                     f'stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{lx + 24}" y="{ly}" font-family="monospace" '
                     f'font-size="11">{label}</text>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")


def _colormap(t: np.ndarray) -> np.ndarray:
    """Piecewise-linear dark-blue -> teal -> yellow map on [0, 1]."""
    anchors = np.array([
        [68, 1, 84],
        [59, 82, 139],
        [33, 145, 140],
        [94, 201, 98],
        [253, 231, 37],
    ], dtype=float)
    t = np.clip(t, 0.0, 1.0) * (len(anchors) - 1)
    i = np.clip(t.astype(int), 0, len(anchors) - 2)
    frac = (t - i)[..., None]
    rgb = anchors[i] * (1 - frac) + anchors[i + 1] * frac
    return rgb.astype(np.uint8)


def heatmap(path, grid, values, title="", points=None) -> None:
    """Raster the nodal field to an embedded PNG with optional point overlay."""
    from PIL import Image

    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[None, :]
    vmin, vmax = float(np.nanmin(values)), float(np.nanmax(values))
    span = vmax - vmin if vmax > vmin else 1.0
    # image rows run top to bottom: flip the second axis (vertical coordinate)
    norm = (values - vmin) / span
    img_arr = _colormap(norm.T[::-1])
    img = Image.fromarray(img_arr, mode="RGB")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    b64 = base64.b64encode(buf.getvalue()).decode("ascii")

    dom = grid.domain
    lo = dom.lo
    hi = dom.hi
    if dom.dim == 1:
        lo = np.array([lo[0], 0.0])
        hi = np.array([hi[0], 1.0])
    ax = _Axes((float(lo[0]), float(hi[0])), (float(lo[1]), float(hi[1])))
    x_px0, y_px1 = MARGIN_L, MARGIN_T
    w_px = WIDTH - MARGIN_L - MARGIN_R
    h_px = HEIGHT - MARGIN_T - MARGIN_B

    parts = _svg_header(title)
    parts.append(f'<image x="{x_px0}" y="{y_px1}" width="{w_px}" height="{h_px}" '
                 f'preserveAspectRatio="none" '
                 f'xlink:href="data:image/png;base64,{b64}" '
                 f'href="data:image/png;base64,{b64}"/>')
    parts += _frame_and_ticks(ax, "x1", "x2" if dom.dim > 1 else "")
    if points is not None and len(points):
        pts = np.atleast_2d(points)
        for p in pts:
            y = p[1] if len(p) > 1 else 0.5
            parts.append(f'<circle cx="{_fmt(ax.px(p[0]))}" cy="{_fmt(ax.py(y))}" '
                         f'r="1.6" fill="none" stroke="#ff2222" stroke-width="0.8"/>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")


def strata_map(path, records, domain, title="") -> None:
    """Scatter Gamma points colored by classification label / stratum."""
    lo, hi = domain.lo, domain.hi
    if domain.dim == 1:
        lo = np.array([lo[0], 0.0])
        hi = np.array([hi[0], 1.0])
    ax = _Axes((float(lo[0]), float(hi[0])), (float(lo[1]), float(hi[1])))
    parts = _svg_header(title)
    parts += _frame_and_ticks(ax, "x1", "x2" if domain.dim > 1 else "")
    seen = []
    for rec in records:
        color = LABEL_COLORS.get(rec.label, "#333333")
        name = rec.label
        if rec.label == "Singular" and rec.stratum >= 0:
            name = f"Singular d={rec.stratum}"
            color = PALETTE[(1 + rec.stratum) % len(PALETTE)]
        if name not in seen:
            seen.append(name)
        x = rec.x[0]
        y = rec.x[1] if len(rec.x) > 1 else 0.5
        parts.append(f'<circle cx="{_fmt(ax.px(x))}" cy="{_fmt(ax.py(y))}" '
                     f'r="3" fill="{color}"/>')
    for k, name in enumerate(sorted(seen)):
        color = LABEL_COLORS.get(name, None)
        if color is None:
            if name.startswith("Singular d="):
                color = PALETTE[(1 + int(name.split("=")[1])) % len(PALETTE)]
            else:
                color = "#333333"
        ly = MARGIN_T + 14 + 14 * k
        lx = WIDTH - MARGIN_R - 150
        parts.append(f'<circle cx="{lx + 6}" cy="{ly - 4}" r="4" fill="{color}"/>')
        parts.append(f'<text x="{lx + 16}" y="{ly}" font-family="monospace" '
                     f'font-size="11">{name}</text>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")
