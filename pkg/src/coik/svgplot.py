"""Self-contained SVG emitters for experiment artifacts.

No rendering dependency: plots are plain SVG strings with a fixed viewport
and a fixed diverging color map, so outputs are diffable byte for byte.
"""

from __future__ import annotations

import math

import numpy as np

WIDTH = 960
HEIGHT = 600
MARGIN = {"left": 70, "right": 20, "top": 40, "bottom": 50}

# Diverging map: strong blue -> white -> strong red.
_NEG = (33, 102, 172)
_POS = (178, 24, 43)


def _fmt(x: float) -> str:
    return f"{x:.2f}".rstrip("0").rstrip(".")


def _nice_ticks(lo: float, hi: float, target: int = 6) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / target
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    start = math.ceil(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-9 * step:
        ticks.append(round(t, 12))
        t += step
    return ticks


class _Canvas:
    def __init__(self, title: str, xlabel: str, ylabel: str):
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="monospace" font-size="12">',
            f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
            f'<text x="{WIDTH / 2}" y="20" text-anchor="middle" font-size="15">{title}</text>',
            f'<text x="{WIDTH / 2}" y="{HEIGHT - 12}" text-anchor="middle">{xlabel}</text>',
            f'<text x="18" y="{HEIGHT / 2}" text-anchor="middle" '
            f'transform="rotate(-90 18 {HEIGHT / 2})">{ylabel}</text>',
        ]

    def add(self, fragment: str) -> None:
        self.parts.append(fragment)

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


class LinePlot:
    """Axis-scaled polyline plot with optional shaded band and markers."""

    def __init__(self, title: str, xlabel: str, ylabel: str,
                 xlim: tuple[float, float], ylim: tuple[float, float]):
        self.canvas = _Canvas(title, xlabel, ylabel)
        self.x0, self.x1 = float(xlim[0]), float(xlim[1])
        self.y0, self.y1 = float(ylim[0]), float(ylim[1])
        if self.x1 <= self.x0:
            self.x1 = self.x0 + 1.0
        if self.y1 <= self.y0:
            self.y1 = self.y0 + 1.0
        self._axes()

    def _sx(self, x: float) -> float:
        span = WIDTH - MARGIN["left"] - MARGIN["right"]
        return MARGIN["left"] + (x - self.x0) / (self.x1 - self.x0) * span

    def _sy(self, y: float) -> float:
        span = HEIGHT - MARGIN["top"] - MARGIN["bottom"]
        return HEIGHT - MARGIN["bottom"] - (y - self.y0) / (self.y1 - self.y0) * span

    def _axes(self) -> None:
        left, bottom = MARGIN["left"], HEIGHT - MARGIN["bottom"]
        right, top = WIDTH - MARGIN["right"], MARGIN["top"]
        self.canvas.add(
            f'<path d="M {left} {top} L {left} {bottom} L {right} {bottom}" '
            'fill="none" stroke="black" stroke-width="1"/>'
        )
        for t in _nice_ticks(self.x0, self.x1):
            x = self._sx(t)
            self.canvas.add(f'<line x1="{x:.1f}" y1="{bottom}" x2="{x:.1f}" y2="{bottom + 5}" stroke="black"/>')
            self.canvas.add(f'<text x="{x:.1f}" y="{bottom + 18}" text-anchor="middle">{_fmt(t)}</text>')
        for t in _nice_ticks(self.y0, self.y1):
            y = self._sy(t)
            self.canvas.add(f'<line x1="{left - 5}" y1="{y:.1f}" x2="{left}" y2="{y:.1f}" stroke="black"/>')
            self.canvas.add(f'<text x="{left - 8}" y="{y + 4:.1f}" text-anchor="end">{_fmt(t)}</text>')

    def band(self, xs, lo, hi, color: str = "#cccccc") -> None:
        pts = [f"{self._sx(x):.2f},{self._sy(v):.2f}" for x, v in zip(xs, hi)]
        pts += [f"{self._sx(x):.2f},{self._sy(v):.2f}" for x, v in zip(reversed(list(xs)), reversed(list(lo)))]
        self.canvas.add(f'<polygon points="{" ".join(pts)}" fill="{color}" stroke="none"/>')

    def line(self, xs, ys, color: str, width: float = 1.5, dashed: bool = False) -> None:
        pts = " ".join(f"{self._sx(x):.2f},{self._sy(y):.2f}" for x, y in zip(xs, ys))
        dash = ' stroke-dasharray="6 4"' if dashed else ""
        self.canvas.add(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="{width}"{dash}/>'
        )

    def vline(self, x: float, color: str, label: str = "") -> None:
        sx = self._sx(x)
        top, bottom = MARGIN["top"], HEIGHT - MARGIN["bottom"]
        self.canvas.add(
            f'<line x1="{sx:.1f}" y1="{top}" x2="{sx:.1f}" y2="{bottom}" '
            f'stroke="{color}" stroke-width="1.2" stroke-dasharray="5 4"/>'
        )
        if label:
            self.canvas.add(
                f'<text x="{sx + 4:.1f}" y="{top + 14}" fill="{color}">{label}</text>'
            )

    def legend(self, entries: list[tuple[str, str]]) -> None:
        x = WIDTH - MARGIN["right"] - 200
        y = MARGIN["top"] + 10
        for i, (label, color) in enumerate(entries):
            yy = y + 18 * i
            self.canvas.add(f'<rect x="{x}" y="{yy - 9}" width="14" height="10" fill="{color}"/>')
            self.canvas.add(f'<text x="{x + 20}" y="{yy}">{label}</text>')

    def render(self) -> str:
        return self.canvas.render()


def _diverging_color(value: float, vmax: float) -> str:
    if vmax <= 0.0:
        return "#ffffff"
    t = max(-1.0, min(1.0, value / vmax))
    base = _POS if t >= 0 else _NEG
    a = abs(t)
    r = round(255 + (base[0] - 255) * a)
    g = round(255 + (base[1] - 255) * a)
    b = round(255 + (base[2] - 255) * a)
    return f"#{r:02x}{g:02x}{b:02x}"


def heatmap_svg(matrix: np.ndarray, title: str, vmax: float | None = None) -> str:
    """Square heatmap with a symmetric diverging scale around zero."""
    m = np.asarray(matrix, dtype=np.float64)
    p = m.shape[0]
    if vmax is None:
        vmax = float(np.max(np.abs(m))) if m.size else 0.0
    side = 520
    cell = side / p
    x0 = (WIDTH - side) / 2
    y0 = 50
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="monospace" font-size="12">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="28" text-anchor="middle" font-size="15">{title}</text>',
    ]
    for i in range(p):
        for j in range(p):
            color = _diverging_color(m[i, j], vmax)
            if color == "#ffffff":
                continue
            parts.append(
                f'<rect x="{x0 + j * cell:.2f}" y="{y0 + i * cell:.2f}" '
                f'width="{cell:.2f}" height="{cell:.2f}" fill="{color}"/>'
            )
    parts.append(
        f'<rect x="{x0}" y="{y0}" width="{side}" height="{side}" fill="none" stroke="black"/>'
    )
    parts.append(
        f'<text x="{WIDTH / 2}" y="{y0 + side + 24}" text-anchor="middle">'
        f"scale: -{vmax:.4g} (blue) to +{vmax:.4g} (red)</text>"
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def rank_test_svg(ranks, observed, band_lo, band_hi, selected: int, true_rank: int | None) -> str:
    """Observed trace statistics with the bootstrap acceptance band."""
    ranks = list(ranks)
    finite = [v for v in list(band_lo) + list(band_hi) + list(observed) if np.isfinite(v)]
    top = max(finite) if finite else 1.0
    plot = LinePlot(
        "Sequential rank test: observed statistic vs bootstrap band",
        "tested rank",
        "trace statistic",
        (min(ranks), max(ranks) if len(ranks) > 1 else min(ranks) + 1),
        (0.0, top * 1.05),
    )
    plot.band(ranks, band_lo, band_hi)
    plot.line(ranks, observed, "#c22", 2.0)
    plot.vline(selected, "#22c", f"selected={selected}")
    if true_rank is not None:
        plot.vline(true_rank, "#777", f"true={true_rank}")
    plot.legend([("observed", "#c22"), ("bootstrap band", "#cccccc")])
    return plot.render()


def sample_paths_svg(path_matrix: np.ndarray, colors: list[str], max_points: int = 500) -> str:
    """All coordinates of a sample path, downsampled for plotting."""
    p, n = path_matrix.shape
    stride = max(1, n // max_points)
    xs = list(range(0, n, stride))
    lo = float(np.min(path_matrix))
    hi = float(np.max(path_matrix))
    plot = LinePlot("Simulated sample paths", "time", "state", (0, n), (lo, hi))
    for i in range(p):
        plot.line(xs, path_matrix[i, ::stride], colors[i], 0.8)
    return plot.render()
