"""Reweighting diagnostics for misspecification, plus classical lm plot data.

If the linear model is correct, OLS coefficients do not move when the
distribution of X is reweighted. Here X is reweighted along one regressor
at a time with a Gaussian kernel centred at grid points, and the weighted
least-squares coefficients are tracked across the grid (and across
bootstrap resamples of the data, for a reference band).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import special

from . import rng as _rng
from ._parallel import map_chunks
from .errors import (
    ConstantRegressor,
    DegenerateFit,
    DegenerateReplicates,
    NonpositiveGamma,
    NoReplicates,
    RankDeficient,
    RankDeficientReplicate,
)
from .formula import INTERCEPT, DesignMatrix
from .inference import CoefRow
from .ols import FittedOls, fit_ols, is_perfect_fit, leverage_and_cooks, lstsq_batch
from .tabular import sample_sd, type1_index
from .variance import MAX_REDRAWS, VarianceEstimate

DEFAULT_DIAG_B = 300


class DiagnosticWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class ReweightGrid:
    regressor: int
    regressor_name: str
    centers: np.ndarray
    gamma: float
    estimates: np.ndarray  # K x d
    term_names: tuple[str, ...]
    beta_hat: np.ndarray
    boot_curves: np.ndarray | None = None  # B x K x d


@dataclass(frozen=True, eq=False)
class QQData:
    coefficient: int
    term: str
    sample_quantiles: np.ndarray
    theoretical_quantiles: np.ndarray


@dataclass(frozen=True, eq=False)
class Panel:
    """One curve panel: a coefficient tracked against the grid of one regressor."""

    reweighted: str
    coefficient: str
    centers: np.ndarray
    estimates: np.ndarray
    reference: float
    boot_curves: np.ndarray | None = None  # B x K

    @property
    def title(self) -> str:
        return f"{self.coefficient} | reweight {self.reweighted}"


def reweight_centers(x: np.ndarray, kind: str = "deciles", K: int = 10) -> np.ndarray:
    """Grid of reweighting centers: type-1 deciles, or K evenly spaced points."""
    x = np.asarray(x, dtype=np.float64)
    lo, hi = float(x.min()), float(x.max())
    if hi == lo:
        raise ConstantRegressor("cannot reweight along a constant regressor")
    if kind == "uniform":
        if K < 2:
            raise ValueError("K must be at least 2")
        return np.linspace(lo, hi, K)
    if kind != "deciles":
        raise ValueError(f"unknown grid kind {kind!r}")
    xs = np.sort(x)
    n = xs.size
    # k/10 exactly, via integers: ceil(k n / 10)
    centers = np.array([xs[min(max(-(-k * n // 10), 1), n) - 1] for k in range(1, 11)])
    unique = np.unique(centers)
    if unique.size < centers.size:
        warnings.warn(
            f"{centers.size - unique.size} duplicate decile(s) removed; grid has {unique.size} centers",
            DiagnosticWarning,
            stacklevel=2,
        )
    if unique.size < 2:
        raise ConstantRegressor("deciles collapse to a single value")
    return unique


def default_gamma(x: np.ndarray) -> float:
    return sample_sd(x)


def kernel_weights(x: np.ndarray, center: float, gamma: float | None = None) -> np.ndarray:
    """``exp(-(x - c)^2 / (2 gamma^2))``; gamma defaults to the sample sd of x."""
    x = np.asarray(x, dtype=np.float64)
    if gamma is None:
        gamma = default_gamma(x)
    if not gamma > 0:
        raise NonpositiveGamma(f"gamma must be positive, got {gamma}")
    return np.exp(-((x - center) ** 2) / (2.0 * gamma * gamma))


def _regressor_index(design: DesignMatrix, j: int | str) -> int:
    idx = design.index(j)
    if design.term_names[idx] == INTERCEPT:
        raise ValueError("cannot reweight along the intercept")
    return idx


def _weighted_batch(X: np.ndarray, y: np.ndarray, W: np.ndarray):
    """WLS for each row of W (K x n) on the same data."""
    sw = np.sqrt(W)
    return lstsq_batch(X[None] * sw[..., None], y[None] * sw)


def reweighted_estimates(
    design: DesignMatrix,
    j: int | str,
    centers: np.ndarray | None = None,
    gamma: float | None = None,
) -> ReweightGrid:
    """WLS coefficients at each center of the grid along regressor ``j``.

    Centers where the weighted design loses rank are dropped with a warning.
    """
    jj = _regressor_index(design, j)
    # canonical row order makes the grid exactly invariant to row permutations
    design = design.take(np.lexsort(np.column_stack([design.X, design.y]).T[::-1]))
    x = design.X[:, jj]
    centers = reweight_centers(x) if centers is None else np.asarray(centers, dtype=np.float64)
    gamma = default_gamma(x) if gamma is None else float(gamma)
    if not gamma > 0:
        raise NonpositiveGamma(f"gamma must be positive, got {gamma}")
    W = np.stack([kernel_weights(x, c, gamma) for c in centers])
    est, ok = _weighted_batch(design.X, design.y, W)
    if not ok.all():
        warnings.warn(
            f"dropped {int((~ok).sum())} center(s) where the weighted design is rank deficient",
            DiagnosticWarning,
            stacklevel=2,
        )
        centers, est = centers[ok], est[ok]
    if centers.size < 2:
        raise RankDeficient(jj, design.term_names[jj])
    beta = fit_ols(design).beta_hat
    return ReweightGrid(jj, design.term_names[jj], centers, gamma, est, design.term_names, beta)


def bootstrap_reweighted_curves(
    design: DesignMatrix,
    j: int | str,
    centers: np.ndarray | None = None,
    gamma: float | None = None,
    B: int = DEFAULT_DIAG_B,
    seed: int = 0,
    threads: int | None = None,
    indices: np.ndarray | None = None,
) -> ReweightGrid:
    """Point-estimate grid plus the same sweep on B n-out-of-n bootstrap datasets.

    The grid and gamma are fixed from the original data. ``indices`` (B x n)
    overrides the random resamples; it exists for testing.
    """
    grid = reweighted_estimates(design, j, centers, gamma)
    jj, centers, gamma = grid.regressor, grid.centers, grid.gamma
    X, y, n = design.X, design.y, design.n
    if indices is not None:
        indices = np.asarray(indices, dtype=np.intp)
        B = indices.shape[0]
    if B < 1:
        raise ValueError("B must be at least 1")

    def sweep(rows):
        W = np.exp(-((X[rows, jj][None, :] - centers[:, None]) ** 2) / (2.0 * gamma * gamma))
        return _weighted_batch(X[rows], y[rows], W)

    def run(a: int, b: int):
        out = np.empty((b - a, centers.size, design.d))
        for i in range(a, b):
            if indices is not None:
                est, ok = sweep(indices[i])
                if not ok.all():
                    raise RankDeficientReplicate(i + 1, 1)
                out[i - a] = est
                continue
            g = _rng.substream(seed, _rng.DIAG_BOOT, i)
            for _ in range(MAX_REDRAWS + 1):
                est, ok = sweep(g.integers(0, n, size=n))
                if ok.all():
                    out[i - a] = est
                    break
            else:
                raise RankDeficientReplicate(i + 1, MAX_REDRAWS + 1)
        return out

    curves = np.concatenate(map_chunks(run, B, threads, chunk=16))
    return ReweightGrid(jj, grid.regressor_name, centers, gamma, grid.estimates, grid.term_names, grid.beta_hat, curves)


def all_grids(
    design: DesignMatrix,
    kind: str = "deciles",
    K: int = 10,
    B: int = 0,
    seed: int = 0,
    threads: int | None = None,
) -> list[ReweightGrid]:
    """One grid per non-intercept regressor; bootstrap curves when B > 0."""
    grids = []
    for j, name in enumerate(design.term_names):
        if name == INTERCEPT:
            continue
        centers = reweight_centers(design.X[:, j], kind, K)
        if B > 0:
            grids.append(bootstrap_reweighted_curves(design, j, centers, None, B, seed, threads))
        else:
            grids.append(reweighted_estimates(design, j, centers))
    return grids


def _panel(grid: ReweightGrid, k: int) -> Panel:
    boot = None if grid.boot_curves is None else grid.boot_curves[:, :, k]
    return Panel(
        reweighted=grid.regressor_name,
        coefficient=grid.term_names[k],
        centers=grid.centers,
        estimates=grid.estimates[:, k],
        reference=float(grid.beta_hat[k]),
        boot_curves=boot,
    )


def _coef_index(grid: ReweightGrid, k: int | str) -> int:
    if isinstance(k, str):
        return grid.term_names.index(k)
    return int(k)


def focal_slope_data(grids: Sequence[ReweightGrid], k: int | str) -> list[Panel]:
    """Coefficient ``k`` under reweighting of each regressor in turn."""
    if not grids:
        return []
    kk = _coef_index(grids[0], k)
    return [_panel(g, kk) for g in grids]


def nonlinearity_detection_data(grids: Sequence[ReweightGrid]) -> list[Panel]:
    """Each coefficient under reweighting of its own regressor."""
    return [_panel(g, g.regressor) for g in grids]


def focal_reweighting_variable_data(grid: ReweightGrid, include_intercept: bool = False) -> list[Panel]:
    """Every coefficient under reweighting of one regressor."""
    return [
        _panel(grid, k)
        for k, name in enumerate(grid.term_names)
        if include_intercept or name != INTERCEPT
    ]


def panels_to_records(panels: Iterable[Panel]) -> list[dict]:
    """Long format: one record per (panel, center, replicate)."""
    records = []
    for p in panels:
        for c, v in zip(p.centers, p.estimates):
            records.append(
                {"panel": p.title, "reweighted": p.reweighted, "coefficient": p.coefficient,
                 "center": float(c), "replicate": None, "value": float(v)}
            )
        if p.boot_curves is not None:
            for b, curve in enumerate(p.boot_curves, start=1):
                for c, v in zip(p.centers, curve):
                    records.append(
                        {"panel": p.title, "reweighted": p.reweighted, "coefficient": p.coefficient,
                         "center": float(c), "replicate": b, "value": float(v)}
                    )
    return records


def qq_data(ve: VarianceEstimate, j: int, term: str | None = None) -> QQData:
    """Standardized, sorted replicates of coefficient j against normal quantiles."""
    if ve.replicates is None:
        raise NoReplicates(f"{ve.method.value} has no replicates")
    col = np.asarray(ve.replicates[:, j], dtype=np.float64)
    B = col.size
    if B < 10:
        raise NoReplicates(f"Q-Q data needs at least 10 replicates, got {B}")
    sd = float(np.std(col, ddof=1))
    if not sd > 0:
        raise DegenerateReplicates("replicates are constant; Q-Q plot undefined")
    sample = np.sort((col - col.mean()) / sd)
    theo = special.ndtri((np.arange(1, B + 1) - 0.5) / B)
    return QQData(j, term or str(j), sample, theo)


def ci_width_comparison(rows: Iterable[CoefRow]) -> list[dict]:
    """Long table of CI widths: one record per (term, method)."""
    rows = list(rows)
    if len({r.var_type for r in rows}) < 2:
        raise ValueError("CI width comparison needs at least two variance methods")
    return [
        {"term": r.term, "var.type": r.var_type, "conf.low": r.conf_low,
         "conf.high": r.conf_high, "width": r.conf_high - r.conf_low}
        for r in rows
    ]


@dataclass(frozen=True, eq=False)
class ScatterData:
    name: str
    x_label: str
    y_label: str
    x: np.ndarray
    y: np.ndarray


def lm_diag_data(fit: FittedOls) -> list[ScatterData]:
    """Data behind the six classical lm diagnostic plots.

    On a numerically exact fit every residual-derived series is reported as
    zero instead of raising.
    """
    e, fitted = fit.residuals, fit.fitted
    try:
        inf = leverage_and_cooks(fit)
        h, std, cooks = inf.leverage, inf.std_residuals, inf.cooks
    except DegenerateFit:
        if not is_perfect_fit(fit):
            raise
        h = np.einsum("ij,ij->i", fit.q, fit.q)
        std = np.zeros(fit.n)
        cooks = np.zeros(fit.n)
    n = fit.n
    finite = np.isfinite(std)
    sorted_std = np.sort(std[finite])
    theo = special.ndtri((np.arange(1, sorted_std.size + 1) - 0.5) / sorted_std.size)
    with np.errstate(divide="ignore"):
        lev_ratio = h / (1.0 - h)
    return [
        ScatterData("residuals_vs_fitted", "fitted values", "residuals", fitted, e),
        ScatterData("normal_qq", "theoretical quantiles", "standardized residuals", theo, sorted_std),
        ScatterData("scale_location", "fitted values", "sqrt(|standardized residuals|)", fitted, np.sqrt(np.abs(std))),
        ScatterData("cooks_distance", "observation", "Cook's distance", np.arange(1, n + 1, dtype=float), cooks),
        ScatterData("residuals_vs_leverage", "leverage", "standardized residuals", h, std),
        ScatterData("cooks_vs_leverage", "leverage / (1 - leverage)", "Cook's distance", lev_ratio, cooks),
    ]
