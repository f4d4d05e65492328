"""Deterministic SVG rendering of multi-panel line/point plots.

Output depends only on the PlotSpec: no timestamps, no ids, and every
coordinate is printed with 6 significant digits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

from .errors import EmptyPanel, NonFiniteCoordinate

LAYER_KINDS = ("points", "line", "hline", "vline", "band")

_STYLE = """
.frame{fill:#ffffff;stroke:#444444;stroke-width:1}
.tick{stroke:#444444;stroke-width:1;fill:none}
.ticklabel{font:9px sans-serif;fill:#333333}
.title{font:bold 11px sans-serif;fill:#111111}
.axislabel{font:10px sans-serif;fill:#333333}
.points{fill:#1f4e79;fill-opacity:0.7;stroke:none}
.line{fill:none;stroke:#111111;stroke-width:1.5}
.boot{fill:none;stroke:#999999;stroke-width:0.6;stroke-opacity:0.5}
.ref{stroke:#1f77b4;stroke-width:1.2;stroke-dasharray:5,3}
.band{fill:#1f77b4;fill-opacity:0.2;stroke:none}
.series0{fill:none;stroke:#d62728;stroke-width:1.5}
.series1{fill:none;stroke:#1f77b4;stroke-width:1.5}
.series2{fill:none;stroke:#2ca02c;stroke-width:1.5}
.series3{fill:none;stroke:#9467bd;stroke-width:1.5}
.series4{fill:none;stroke:#ff7f0e;stroke-width:1.5}
.series5{fill:none;stroke:#8c564b;stroke-width:1.5}
"""


@dataclass
class Layer:
    """``points``/``line`` use x and y; ``hline`` uses y[0]; ``vline`` x[0];
    ``band`` fills between y (lower) and y2 (upper) over x."""

    kind: str
    x: Sequence[float] = ()
    y: Sequence[float] = ()
    y2: Sequence[float] = ()
    style: str = ""

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        self.x = np.asarray(self.x, dtype=np.float64).reshape(-1)
        self.y = np.asarray(self.y, dtype=np.float64).reshape(-1)
        self.y2 = np.asarray(self.y2, dtype=np.float64).reshape(-1)
        if not self.style:
            self.style = {"hline": "ref", "vline": "ref"}.get(self.kind, self.kind)


@dataclass
class PlotPanel:
    title: str = ""
    x_label: str = ""
    y_label: str = ""
    layers: list[Layer] = field(default_factory=list)


@dataclass
class PlotSpec:
    panels: list[PlotPanel]
    width_px: int = 900
    height_px: int = 600
    ncols: int | None = None


def fmt(v: float) -> str:
    s = f"{v:.6g}"
    return "0" if s == "-0" else s


def _check_layer(layer: Layer) -> None:
    if layer.kind in ("points", "line", "band"):
        if layer.x.size == 0 or layer.x.size != layer.y.size:
            raise EmptyPanel(f"{layer.kind} layer needs matching non-empty x and y")
        if layer.kind == "band" and layer.y2.size != layer.x.size:
            raise EmptyPanel("band layer needs y2 matching x")
    elif layer.kind == "hline" and layer.y.size == 0:
        raise EmptyPanel("hline layer needs y")
    elif layer.kind == "vline" and layer.x.size == 0:
        raise EmptyPanel("vline layer needs x")
    for arr in (layer.x, layer.y, layer.y2):
        if arr.size and not np.all(np.isfinite(arr)):
            raise NonFiniteCoordinate(f"{layer.kind} layer has non-finite coordinates")


def _ranges(panel: PlotPanel) -> tuple[float, float, float, float]:
    xs, ys = [], []
    for layer in panel.layers:
        if layer.kind in ("points", "line", "band"):
            xs.append(layer.x)
            ys.append(layer.y)
            if layer.kind == "band":
                ys.append(layer.y2)
        elif layer.kind == "hline":
            ys.append(layer.y[:1])
        else:
            xs.append(layer.x[:1])
    return _padded(xs) + _padded(ys)


def _padded(arrays: list[np.ndarray]) -> tuple[float, float]:
    if not arrays:
        return 0.0, 1.0
    allv = np.concatenate(arrays)
    lo, hi = float(allv.min()), float(allv.max())
    span = hi - lo
    if span <= 1e-12 * max(1.0, abs(lo), abs(hi)):
        half = 0.5 * max(abs(lo), 1.0) * 0.1
        return lo - half, hi + half
    return lo - 0.05 * span, hi + 0.05 * span


def nice_ticks(lo: float, hi: float, target: int = 5) -> list[float]:
    span = hi - lo
    raw = span / max(target, 1)
    mag = 10 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw)
    start = math.ceil(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-9 * step:
        ticks.append(0.0 if abs(t) < 1e-12 * step else t)
        t = start + len(ticks) * step
    return ticks


def _grid(n: int, ncols: int | None) -> tuple[int, int]:
    cols = ncols or math.ceil(math.sqrt(n))
    rows = math.ceil(n / cols)
    return rows, cols


def render_svg(spec: PlotSpec) -> bytes:
    if not spec.panels:
        raise EmptyPanel("plot has no panels")
    for panel in spec.panels:
        if not panel.layers:
            raise EmptyPanel(f"panel {panel.title!r} has no layers")
        for layer in panel.layers:
            _check_layer(layer)

    W, H = int(spec.width_px), int(spec.height_px)
    rows, cols = _grid(len(spec.panels), spec.ncols)
    cell_w, cell_h = W / cols, H / rows
    ml, mr, mt, mb = 52.0, 12.0, 22.0, 34.0

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f"<style>{_STYLE}</style>",
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="#ffffff"/>',
    ]
    for i, panel in enumerate(spec.panels):
        r, c = divmod(i, cols)
        x0 = c * cell_w + ml
        y0 = r * cell_h + mt
        pw = cell_w - ml - mr
        ph = cell_h - mt - mb
        xlo, xhi, ylo, yhi = _ranges(panel)

        def sx(v, xlo=xlo, xhi=xhi, x0=x0, pw=pw):
            return x0 + (v - xlo) / (xhi - xlo) * pw

        def sy(v, ylo=ylo, yhi=yhi, y0=y0, ph=ph):
            return y0 + ph - (v - ylo) / (yhi - ylo) * ph

        out.append("<g>")
        out.append(f'<rect class="frame" x="{fmt(x0)}" y="{fmt(y0)}" width="{fmt(pw)}" height="{fmt(ph)}"/>')
        tick_path = []
        labels = []
        for t in nice_ticks(xlo, xhi):
            px = sx(t)
            tick_path.append(f"M{fmt(px)},{fmt(y0 + ph)}v4")
            labels.append(f'<text class="ticklabel" x="{fmt(px)}" y="{fmt(y0 + ph + 13)}" text-anchor="middle">{fmt_tick(t)}</text>')
        for t in nice_ticks(ylo, yhi):
            py = sy(t)
            tick_path.append(f"M{fmt(x0)},{fmt(py)}h-4")
            labels.append(f'<text class="ticklabel" x="{fmt(x0 - 6)}" y="{fmt(py + 3)}" text-anchor="end">{fmt_tick(t)}</text>')
        out.append(f'<path class="tick" d="{"".join(tick_path)}"/>')
        out.extend(labels)
        if panel.title:
            out.append(f'<text class="title" x="{fmt(x0 + pw / 2)}" y="{fmt(y0 - 7)}" text-anchor="middle">{escape(panel.title)}</text>')
        if panel.x_label:
            out.append(f'<text class="axislabel" x="{fmt(x0 + pw / 2)}" y="{fmt(y0 + ph + 27)}" text-anchor="middle">{escape(panel.x_label)}</text>')
        if panel.y_label:
            ly = y0 + ph / 2
            lx = x0 - 40
            out.append(
                f'<text class="axislabel" x="{fmt(lx)}" y="{fmt(ly)}" text-anchor="middle" '
                f'transform="rotate(-90 {fmt(lx)} {fmt(ly)})">{escape(panel.y_label)}</text>'
            )
        for layer in panel.layers:
            cls = escape(layer.style, {'"': "&quot;"})
            if layer.kind == "points":
                for xv, yv in zip(layer.x, layer.y):
                    out.append(f'<circle class="{cls}" cx="{fmt(sx(xv))}" cy="{fmt(sy(yv))}" r="2"/>')
            elif layer.kind == "line":
                pts = [f"{fmt(sx(xv))},{fmt(sy(yv))}" for xv, yv in zip(layer.x, layer.y)]
                out.append(f'<path class="{cls}" d="M{"L".join(pts)}"/>')
            elif layer.kind == "band":
                upper = [f"{fmt(sx(xv))},{fmt(sy(yv))}" for xv, yv in zip(layer.x, layer.y2)]
                lower = [f"{fmt(sx(xv))},{fmt(sy(yv))}" for xv, yv in zip(layer.x[::-1], layer.y[::-1])]
                out.append(f'<path class="{cls}" d="M{"L".join(upper + lower)}Z"/>')
            elif layer.kind == "hline":
                py = fmt(sy(layer.y[0]))
                out.append(f'<line class="{cls}" x1="{fmt(x0)}" y1="{py}" x2="{fmt(x0 + pw)}" y2="{py}"/>')
            else:
                px = fmt(sx(layer.x[0]))
                out.append(f'<line class="{cls}" x1="{px}" y1="{fmt(y0)}" x2="{px}" y2="{fmt(y0 + ph)}"/>')
        out.append("</g>")
    out.append("</svg>")
    return ("\n".join(out) + "\n").encode("utf-8")


def fmt_tick(v: float) -> str:
    s = f"{v:.4g}"
    return "0" if s == "-0" else s
