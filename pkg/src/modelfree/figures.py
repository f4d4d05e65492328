"""PlotSpec builders for the diagnostic datasets."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .diagnostics import Panel, QQData, ScatterData
from .plotkit import Layer, PlotPanel, PlotSpec
from .variance import METHOD_ORDER, Method


def curve_panels_spec(panels: Sequence[Panel], width: int = 900, height: int = 600) -> PlotSpec:
    """Gray bootstrap curves, black reweighted curve, dashed unweighted estimate."""
    out = []
    for p in panels:
        layers = []
        if p.boot_curves is not None:
            layers.extend(Layer("line", p.centers, curve, style="boot") for curve in p.boot_curves)
        layers.append(Layer("line", p.centers, p.estimates))
        layers.append(Layer("hline", y=[p.reference]))
        out.append(PlotPanel(f"reweight: {p.reweighted}", f"{p.reweighted} (center)", p.coefficient, layers))
    return PlotSpec(out, width, height)


def qq_spec(qq: Sequence[QQData], width: int = 900, height: int = 600) -> PlotSpec:
    out = []
    for q in qq:
        lo, hi = float(q.theoretical_quantiles[0]), float(q.theoretical_quantiles[-1])
        out.append(
            PlotPanel(
                q.term,
                "normal quantiles",
                "standardized replicates",
                [Layer("points", q.theoretical_quantiles, q.sample_quantiles), Layer("line", [lo, hi], [lo, hi], style="ref")],
            )
        )
    return PlotSpec(out, width, height)


def ci_width_spec(records: Sequence[dict], width: int = 900, height: int = 600) -> PlotSpec:
    """One panel per term; method i drawn as a vertical interval at x = i + 1."""
    terms = list(dict.fromkeys(r["term"] for r in records))
    order = {m.value: i for i, m in enumerate(METHOD_ORDER)}
    panels = []
    for term in terms:
        recs = sorted((r for r in records if r["term"] == term), key=lambda r: order.get(r["var.type"], 99))
        layers = []
        for i, r in enumerate(recs):
            xpos = order.get(r["var.type"], i) + 1
            layers.append(Layer("line", [xpos, xpos], [r["conf.low"], r["conf.high"]], style=f"series{order.get(r['var.type'], 0) % 6}"))
            mid = (r["conf.low"] + r["conf.high"]) / 2
            layers.append(Layer("points", [xpos], [mid]))
        label = "method: " + ", ".join(f"{order[m.value] + 1}={m.value}" for m in METHOD_ORDER if any(r["var.type"] == m.value for r in recs))
        panels.append(PlotPanel(term, label, "confidence interval", layers))
    return PlotSpec(panels, width, height)


def scatter_spec(data: Sequence[ScatterData], width: int = 900, height: int = 600) -> PlotSpec:
    panels = []
    for s in data:
        keep = np.isfinite(s.x) & np.isfinite(s.y)
        layers = [Layer("points", s.x[keep], s.y[keep])]
        if s.name in ("residuals_vs_fitted", "residuals_vs_leverage"):
            layers.append(Layer("hline", y=[0.0]))
        if s.name == "normal_qq" and keep.any():
            lo, hi = float(s.x[keep].min()), float(s.x[keep].max())
            layers.append(Layer("line", [lo, hi], [lo, hi], style="ref"))
        panels.append(PlotPanel(s.name.replace("_", " "), s.x_label, s.y_label, layers))
    return PlotSpec(panels, width, height)


def coverage_spec(rows: Sequence, level: float, width: int = 900, height: int = 400) -> PlotSpec:
    """Coverage against B, one panel per coefficient, one line per method."""
    coefs = list(dict.fromkeys(r.coefficient for r in rows))
    panels = []
    for coef in coefs:
        layers = []
        for method in METHOD_ORDER:
            pts = sorted((r.B, r.coverage) for r in rows if r.coefficient == coef and r.method == method.value and r.B)
            if pts:
                xs, ys = zip(*pts)
                layers.append(Layer("line", xs, ys, style=f"series{METHOD_ORDER.index(method) % 6}"))
                layers.append(Layer("points", xs, ys))
        for method in (Method.CLASSICAL, Method.SANDWICH):
            flat = [r for r in rows if r.coefficient == coef and r.method == method.value]
            if flat and layers:
                xs = [min(l.x.min() for l in layers), max(l.x.max() for l in layers)]
                layers.append(Layer("line", xs, [flat[0].coverage] * 2, style=f"series{METHOD_ORDER.index(method)}"))
        layers.append(Layer("hline", y=[level]))
        panels.append(PlotPanel(coef, "B", "coverage", layers))
    return PlotSpec(panels, width, height)
