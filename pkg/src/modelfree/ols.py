"""Ordinary and weighted least squares on a thin QR factorization.

The normal equations are never formed: coefficients come from
``R beta = Q^T y`` and every ``(X^T X)^{-1}`` product is applied through
triangular solves with ``R``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DegenerateFit, NegativeWeight, RankDeficient, TooFewRows
from .formula import DesignMatrix

# |R_jj| below RANK_TOL * max_j |R_jj| marks column j as dependent.
RANK_TOL = 1e-10
# RSS below (PERFECT_FIT_TOL * ||y||)^2 is treated as an exact fit.
PERFECT_FIT_TOL = 1e-12


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    a.setflags(write=False)
    return a


def first_dependent_column(rdiag: np.ndarray) -> int | None:
    a = np.abs(rdiag)
    top = a.max(initial=0.0)
    if top == 0.0:
        return 0
    bad = np.flatnonzero(a <= RANK_TOL * top)
    return int(bad[0]) if bad.size else None


@dataclass(frozen=True, eq=False)
class FittedOls:
    beta_hat: np.ndarray
    residuals: np.ndarray
    fitted: np.ndarray
    sigma2_hat: float
    jhat: np.ndarray
    design: DesignMatrix
    q: np.ndarray
    r: np.ndarray
    weights: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.design.n

    @property
    def d(self) -> int:
        return self.design.d

    @property
    def term_names(self) -> tuple[str, ...]:
        return self.design.term_names

    @property
    def rss(self) -> float:
        e = self.residuals
        if self.weights is None:
            return float(e @ e)
        return float(self.weights @ (e * e))

    def xtx_inv(self) -> np.ndarray:
        """``(X^T X)^{-1}`` (weighted design for WLS fits) as ``R^{-1} R^{-T}``."""
        rinv = solve_triangular(self.r, np.eye(self.d), lower=False)
        out = rinv @ rinv.T
        return (out + out.T) / 2

    def jhat_inv(self) -> np.ndarray:
        return self.n * self.xtx_inv()

    def vhat(self) -> np.ndarray:
        return vhat(self.design, self.residuals)

    def solve(self, Y: np.ndarray) -> np.ndarray:
        """Least-squares coefficients for new response column(s) on the same X."""
        return solve_triangular(self.r, self.q.T @ Y, lower=False)


def _qr_fit(X: np.ndarray, y: np.ndarray, names: tuple[str, ...]):
    q, r = np.linalg.qr(X, mode="reduced")
    bad = first_dependent_column(np.diag(r))
    if bad is not None:
        raise RankDeficient(bad, names[bad])
    beta = solve_triangular(r, q.T @ y, lower=False)
    return q, r, beta


def fit_ols(design: DesignMatrix) -> FittedOls:
    """OLS with ``sigma2_hat = RSS / (n - d)``; requires ``n > d``."""
    n, d = design.n, design.d
    if n <= d:
        raise TooFewRows(f"need n > d to estimate the error variance (n = {n}, d = {d})")
    q, r, beta = _qr_fit(design.X, design.y, design.term_names)
    fitted = design.X @ beta
    resid = design.y - fitted
    return FittedOls(
        beta_hat=_readonly(beta),
        residuals=_readonly(resid),
        fitted=_readonly(fitted),
        sigma2_hat=float(resid @ resid) / (n - d),
        jhat=_readonly(jhat(design)),
        design=design,
        q=_readonly(q),
        r=_readonly(r),
    )


def fit_wls(design: DesignMatrix, w: np.ndarray) -> FittedOls:
    """Weighted least squares by scaling rows with ``sqrt(w)``.

    Residuals and fitted values are on the original scale; ``sigma2_hat`` is
    the weighted RSS over ``n - d`` and ``jhat`` is ``X^T W X / n``.
    """
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    if w.size != design.n:
        raise ValueError("weight vector length differs from the number of rows")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise NegativeWeight("weights must be finite and nonnegative")
    if w.sum() <= 0:
        raise NegativeWeight("weights sum to zero")
    n, d = design.n, design.d
    if n <= d:
        raise TooFewRows(f"need n > d (n = {n}, d = {d})")
    sw = np.sqrt(w)
    Xw = design.X * sw[:, None]
    q, r, beta = _qr_fit(Xw, design.y * sw, design.term_names)
    fitted = design.X @ beta
    resid = design.y - fitted
    return FittedOls(
        beta_hat=_readonly(beta),
        residuals=_readonly(resid),
        fitted=_readonly(fitted),
        sigma2_hat=float(w @ (resid * resid)) / (n - d),
        jhat=_readonly(Xw.T @ Xw / n),
        design=design,
        q=_readonly(q),
        r=_readonly(r),
        weights=_readonly(w.copy()),
    )


def jhat(design: DesignMatrix) -> np.ndarray:
    X = design.X
    J = X.T @ X / design.n
    return (J + J.T) / 2


def vhat(design: DesignMatrix, residuals: np.ndarray) -> np.ndarray:
    e = np.asarray(residuals, dtype=np.float64).reshape(-1)
    if e.size != design.n:
        raise ValueError("residual vector length differs from the number of rows")
    S = design.X * e[:, None]
    V = S.T @ S / design.n
    return (V + V.T) / 2


def is_perfect_fit(fit: FittedOls) -> bool:
    return fit.rss <= (PERFECT_FIT_TOL * float(np.linalg.norm(fit.design.y))) ** 2


@dataclass(frozen=True)
class Influence:
    leverage: np.ndarray
    std_residuals: np.ndarray
    cooks: np.ndarray


def leverage_and_cooks(fit: FittedOls) -> Influence:
    """Hat diagonal, standardized residuals and Cook's distances.

    Rows with leverage 1 get NaN standardized residual and Cook's distance.
    """
    if fit.n <= fit.d:
        raise TooFewRows("leverage diagnostics need n > d")
    if fit.sigma2_hat <= 0 or is_perfect_fit(fit):
        raise DegenerateFit("residual variance is zero; standardized residuals undefined")
    h = np.einsum("ij,ij->i", fit.q, fit.q)
    one_minus = 1.0 - h
    with np.errstate(divide="ignore", invalid="ignore"):
        std = fit.residuals / (np.sqrt(fit.sigma2_hat) * np.sqrt(one_minus))
        cooks = std**2 * h / (fit.d * one_minus)
    at_one = one_minus <= 1e-12
    std = np.where(at_one, np.nan, std)
    cooks = np.where(at_one, np.nan, cooks)
    return Influence(_readonly(h), _readonly(std), _readonly(cooks))


def lstsq_batch(Xs: np.ndarray, ys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Solve a stack of least-squares problems.

    ``Xs`` is (B, m, d) and ``ys`` (B, m). Returns (B, d) coefficients and a
    boolean mask of problems that passed the rank check; coefficients of the
    failing problems are NaN.
    """
    q, r = np.linalg.qr(Xs, mode="reduced")
    rdiag = np.abs(np.diagonal(r, axis1=1, axis2=2))
    top = rdiag.max(axis=1, keepdims=True)
    ok = np.all(rdiag > RANK_TOL * top, axis=1) & (top[:, 0] > 0)
    qty = np.einsum("bmd,bm->bd", q, ys)
    beta = np.full(qty.shape, np.nan)
    if ok.any():
        beta[ok] = np.linalg.solve(r[ok], qty[ok][..., None])[..., 0]
    return beta, ok
