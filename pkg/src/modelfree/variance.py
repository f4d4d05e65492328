"""Covariance estimators for OLS coefficients.

Two closed forms (classical and sandwich) and four resampling schemes
(empirical m-out-of-n bootstrap, multiplier bootstrap, residual bootstrap,
subsampling). Every estimate carries the assumptions it relies on.

All ``cov_beta`` matrices estimate ``Var(beta_hat)`` directly, i.e. the
asymptotic variance of ``sqrt(n) (beta_hat - beta)`` divided by ``n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Iterable, Mapping

import numpy as np
from scipy.linalg import solve_triangular

from . import rng as _rng
from ._parallel import map_chunks
from .errors import DuplicateMethod, MTooLarge, RankDeficientReplicate, SingularJ, TooFewRows
from .ols import FittedOls, first_dependent_column, lstsq_batch

DEFAULT_B = 1000
MAX_REDRAWS = 100


class Method(str, Enum):
    CLASSICAL = "classical_lm"
    SANDWICH = "sandwich"
    EMPIRICAL = "empirical_boot"
    MULTIPLIER = "multiplier_boot"
    RESIDUAL = "residual_boot"
    SUBSAMPLING = "subsampling"

    @property
    def resampling(self) -> bool:
        return self not in (Method.CLASSICAL, Method.SANDWICH)

    @property
    def label(self) -> str:
        return _LABELS[self]

    @classmethod
    def parse(cls, text: "str | Method") -> "Method":
        if isinstance(text, Method):
            return text
        key = str(text).strip().lower().replace("-", "_")
        try:
            return _ALIASES[key]
        except KeyError:
            raise ValueError(f"unknown variance method {text!r}") from None


_LABELS = {
    Method.CLASSICAL: "Well Specified Model",
    Method.SANDWICH: "Sandwich",
    Method.EMPIRICAL: "Empirical Bootstrap",
    Method.MULTIPLIER: "Multiplier Bootstrap",
    Method.RESIDUAL: "Residual Bootstrap",
    Method.SUBSAMPLING: "Subsampling",
}

_ALIASES = {m.value: m for m in Method} | {
    "lm": Method.CLASSICAL,
    "classical": Method.CLASSICAL,
    "sand": Method.SANDWICH,
    "emp": Method.EMPIRICAL,
    "empirical": Method.EMPIRICAL,
    "boot_emp": Method.EMPIRICAL,
    "mul": Method.MULTIPLIER,
    "multiplier": Method.MULTIPLIER,
    "boot_mul": Method.MULTIPLIER,
    "res": Method.RESIDUAL,
    "residual": Method.RESIDUAL,
    "boot_res": Method.RESIDUAL,
    "sub": Method.SUBSAMPLING,
    "subsample": Method.SUBSAMPLING,
}

METHOD_ORDER: tuple[Method, ...] = tuple(Method)

INDEPENDENCE = "independence of observations"
FINITE_MOMENTS = "finite moments"
LINEARITY = "linearity of the conditional mean E[Y | X]"
HOMOSCEDASTICITY = "homoscedasticity: Var(Y | X) is constant"
NORMALITY = "normality of the errors"

ASSUMPTIONS: dict[Method, tuple[str, ...]] = {
    Method.CLASSICAL: (INDEPENDENCE, LINEARITY, HOMOSCEDASTICITY, NORMALITY),
    Method.SANDWICH: (INDEPENDENCE, FINITE_MOMENTS),
    Method.EMPIRICAL: (INDEPENDENCE, FINITE_MOMENTS),
    Method.MULTIPLIER: (INDEPENDENCE, FINITE_MOMENTS),
    Method.RESIDUAL: (INDEPENDENCE, LINEARITY, HOMOSCEDASTICITY),
    Method.SUBSAMPLING: (
        "independence of observations or stationary weak dependence",
        "subsample size m = o(n)",
    ),
}


class WeightsType(str, Enum):
    RADEMACHER = "rademacher"
    MAMMEN = "mammen"
    WEBB = "webb"
    GAUSSIAN = "gaussian"


_SQRT5 = math.sqrt(5.0)
MAMMEN_VALUES = np.array([(1 - _SQRT5) / 2, (1 + _SQRT5) / 2])
MAMMEN_PROB_LOW = (_SQRT5 + 1) / (2 * _SQRT5)
WEBB_VALUES = np.array([-math.sqrt(1.5), -1.0, -math.sqrt(0.5), math.sqrt(0.5), 1.0, math.sqrt(1.5)])


def sample_weights(kind: WeightsType | str, count: int, stream: np.random.Generator) -> np.ndarray:
    """I.i.d. mean-zero, unit-variance multiplier weights."""
    kind = WeightsType(kind)
    if count < 1:
        raise ValueError("count must be at least 1")
    if kind is WeightsType.RADEMACHER:
        return stream.integers(0, 2, size=count).astype(np.float64) * 2.0 - 1.0
    if kind is WeightsType.MAMMEN:
        u = stream.random(count)
        return np.where(u < MAMMEN_PROB_LOW, MAMMEN_VALUES[0], MAMMEN_VALUES[1])
    if kind is WeightsType.WEBB:
        return WEBB_VALUES[stream.integers(0, 6, size=count)]
    return stream.standard_normal(count)


@dataclass(frozen=True, eq=False)
class VarianceEstimate:
    method: Method
    cov_beta: np.ndarray
    assumptions: tuple[str, ...]
    params: dict[str, Any] = field(default_factory=dict)
    replicates: np.ndarray | None = None

    @property
    def std_errors(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.cov_beta), 0.0, None))


def _symmetric(a: np.ndarray) -> np.ndarray:
    out = (a + a.T) / 2
    out.setflags(write=False)
    return out


def _check_j(fit: FittedOls) -> None:
    if first_dependent_column(np.diag(fit.r)) is not None:
        raise SingularJ("Jhat is singular")


def var_classical(fit: FittedOls) -> VarianceEstimate:
    """``sigma2_hat (X^T X)^{-1}``."""
    _check_j(fit)
    if fit.n <= fit.d:
        raise TooFewRows("classical variance needs n > d")
    cov = fit.sigma2_hat * fit.xtx_inv()
    return VarianceEstimate(Method.CLASSICAL, _symmetric(cov), ASSUMPTIONS[Method.CLASSICAL], {"n": fit.n})


def var_sandwich(fit: FittedOls) -> VarianceEstimate:
    """``n^{-1} J^{-1} V J^{-1}``, evaluated as ``R^{-1} (Q^T E^2 Q) R^{-T}``."""
    _check_j(fit)
    M = fit.q * fit.residuals[:, None]
    meat = M.T @ M
    a = solve_triangular(fit.r, meat, lower=False)
    cov = solve_triangular(fit.r, a.T, lower=False)
    return VarianceEstimate(Method.SANDWICH, _symmetric(cov), ASSUMPTIONS[Method.SANDWICH], {"n": fit.n})


def covariance_from_replicates(method: Method, replicates: np.ndarray, n: int, m: int | None = None) -> np.ndarray:
    """Scale the replicate sample covariance (centered at its mean) to ``Var(beta_hat)``.

    Empirical bootstrap and subsampling replicates are m-row fits, so their
    covariance is multiplied by ``m / n``; multiplier and residual replicates
    already live on the n-row scale.
    """
    reps = np.asarray(replicates, dtype=np.float64)
    if reps.ndim != 2 or reps.shape[0] < 2:
        raise ValueError("need at least 2 replicates")
    centered = reps - reps.mean(axis=0)
    cov = centered.T @ centered / (reps.shape[0] - 1)
    if method in (Method.EMPIRICAL, Method.SUBSAMPLING):
        if m is None:
            raise ValueError("m is required for empirical bootstrap and subsampling")
        cov = cov * (m / n)
    return _symmetric(cov)


def _check_b(B: int) -> int:
    B = int(B)
    if B < 2:
        raise ValueError("B must be at least 2")
    return B


def _refit_replicates(fit, B, seed, stream_id, draw, threads):
    """Refit OLS on B row-resamples; ``draw(gen)`` returns one index vector.

    A rank-deficient resample is redrawn from the same replicate stream, at
    most MAX_REDRAWS times.
    """
    X, y = fit.design.X, fit.design.y

    def run(a: int, b: int):
        gens = [_rng.substream(seed, stream_id, i) for i in range(a, b)]
        idx = np.stack([draw(g) for g in gens])
        betas, ok = lstsq_batch(X[idx], y[idx])
        redraws = 0
        for k in np.flatnonzero(~ok):
            for attempt in range(1, MAX_REDRAWS + 1):
                redraws += 1
                rows = draw(gens[k])
                beta, good = lstsq_batch(X[rows][None], y[rows][None])
                if good[0]:
                    betas[k] = beta[0]
                    break
            else:
                raise RankDeficientReplicate(a + k + 1, MAX_REDRAWS + 1)
        return betas, redraws

    parts = map_chunks(run, B, threads)
    return np.vstack([p[0] for p in parts]), sum(p[1] for p in parts)


def var_empirical_boot(
    fit: FittedOls, B: int = DEFAULT_B, m: int | None = None, seed: int = 0, threads: int | None = None
) -> VarianceEstimate:
    """m-out-of-n pairs bootstrap (rows drawn with replacement)."""
    B = _check_b(B)
    n = fit.n
    m = n if m is None else int(m)
    if m < 1:
        raise ValueError("m must be at least 1")
    if m < fit.d:
        raise TooFewRows(f"m = {m} is smaller than the number of coefficients d = {fit.d}")
    reps, redraws = _refit_replicates(fit, B, seed, _rng.EMPIRICAL, lambda g: g.integers(0, n, size=m), threads)
    cov = covariance_from_replicates(Method.EMPIRICAL, reps, n, m)
    params = {"n": n, "B": B, "m": m, "seed": seed}
    if redraws:
        params["redraws"] = redraws
    return VarianceEstimate(Method.EMPIRICAL, cov, ASSUMPTIONS[Method.EMPIRICAL], params, _readonly(reps))


def var_subsampling(
    fit: FittedOls, B: int = DEFAULT_B, m: int | None = None, seed: int = 0, threads: int | None = None
) -> VarianceEstimate:
    """m-out-of-n resampling without replacement; requires ``d <= m < n``."""
    B = _check_b(B)
    n = fit.n
    m = default_subsample_size(n) if m is None else int(m)
    if m >= n:
        raise MTooLarge(f"subsample size m = {m} must be smaller than n = {n}")
    if m < fit.d:
        raise TooFewRows(f"m = {m} is smaller than the number of coefficients d = {fit.d}")
    reps, redraws = _refit_replicates(
        fit, B, seed, _rng.SUBSAMPLING, lambda g: g.choice(n, size=m, replace=False), threads
    )
    cov = covariance_from_replicates(Method.SUBSAMPLING, reps, n, m)
    params = {"n": n, "B": B, "m": m, "seed": seed}
    if redraws:
        params["redraws"] = redraws
    return VarianceEstimate(Method.SUBSAMPLING, cov, ASSUMPTIONS[Method.SUBSAMPLING], params, _readonly(reps))


def default_subsample_size(n: int) -> int:
    return max(1, int(math.floor(n**0.7)))


def var_multiplier_boot(
    fit: FittedOls,
    B: int = DEFAULT_B,
    weights_type: WeightsType | str = WeightsType.RADEMACHER,
    seed: int = 0,
    threads: int | None = None,
) -> VarianceEstimate:
    """Perturb beta_hat by randomly weighted score sums; no refitting.

    ``beta*_b = beta_hat + n^{-1} sum_i w_ib J^{-1} X_i e_i``.
    """
    B = _check_b(B)
    _check_j(fit)
    wt = WeightsType(weights_type)
    n = fit.n
    scores = (fit.design.X * fit.residuals[:, None]) @ fit.jhat_inv()

    def run(a: int, b: int):
        W = np.stack([sample_weights(wt, n, _rng.substream(seed, _rng.MULTIPLIER, i)) for i in range(a, b)])
        return fit.beta_hat + W @ scores / n

    reps = np.vstack(map_chunks(run, B, threads))
    cov = covariance_from_replicates(Method.MULTIPLIER, reps, n)
    params = {"n": n, "B": B, "weights_type": wt.value, "seed": seed}
    return VarianceEstimate(Method.MULTIPLIER, cov, ASSUMPTIONS[Method.MULTIPLIER], params, _readonly(reps))


def var_residual_boot(
    fit: FittedOls, B: int = DEFAULT_B, seed: int = 0, threads: int | None = None
) -> VarianceEstimate:
    """Resample residuals onto the fitted values and refit on the same X."""
    B = _check_b(B)
    _check_j(fit)
    n = fit.n
    e = fit.residuals

    def run(a: int, b: int):
        idx = np.stack([_rng.substream(seed, _rng.RESIDUAL, i).integers(0, n, size=n) for i in range(a, b)])
        ystar = fit.fitted + e[idx]
        return fit.solve(ystar.T).T

    reps = np.vstack(map_chunks(run, B, threads))
    cov = covariance_from_replicates(Method.RESIDUAL, reps, n)
    params = {"n": n, "B": B, "seed": seed}
    return VarianceEstimate(Method.RESIDUAL, cov, ASSUMPTIONS[Method.RESIDUAL], params, _readonly(reps))


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class EstimatorConfig:
    """One resampling request: ``{method, B, m, weights_type, seed}``."""

    method: Method
    B: int = DEFAULT_B
    m: int | None = None
    weights_type: WeightsType = WeightsType.RADEMACHER
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "method", Method.parse(self.method))
        object.__setattr__(self, "weights_type", WeightsType(self.weights_type))
        object.__setattr__(self, "seed", _rng.check_seed(self.seed))

    @classmethod
    def from_dict(cls, cfg: Mapping[str, Any]) -> "EstimatorConfig":
        unknown = set(cfg) - {"method", "B", "m", "weights_type", "seed"}
        if unknown:
            raise ValueError(f"unknown estimator config keys: {sorted(unknown)}")
        if "method" not in cfg:
            raise ValueError("estimator config needs a 'method'")
        m = cfg.get("m")
        if m == "n":
            m = None
        return cls(
            method=cfg["method"],
            B=int(cfg.get("B", DEFAULT_B)),
            m=None if m is None else int(m),
            weights_type=cfg.get("weights_type", WeightsType.RADEMACHER),
            seed=int(cfg.get("seed", 0)),
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "method": self.method.value,
            "B": self.B,
            "m": self.m,
            "weights_type": self.weights_type.value,
            "seed": self.seed,
        }


_RUNNERS: dict[Method, Callable[..., VarianceEstimate]] = {
    Method.EMPIRICAL: lambda fit, c, t: var_empirical_boot(fit, c.B, c.m, c.seed, t),
    Method.MULTIPLIER: lambda fit, c, t: var_multiplier_boot(fit, c.B, c.weights_type, c.seed, t),
    Method.RESIDUAL: lambda fit, c, t: var_residual_boot(fit, c.B, c.seed, t),
    Method.SUBSAMPLING: lambda fit, c, t: var_subsampling(fit, c.B, c.m, c.seed, t),
}


def comp_var(
    fit: FittedOls,
    requests: Iterable[EstimatorConfig | Mapping[str, Any]] = (),
    threads: int | None = None,
) -> list[VarianceEstimate]:
    """Classical and sandwich estimates, plus one per requested resampling method.

    Output is in the fixed order of :data:`METHOD_ORDER`.
    """
    configs = [r if isinstance(r, EstimatorConfig) else EstimatorConfig.from_dict(r) for r in requests]
    seen: set[Method] = set()
    for c in configs:
        if c.method in seen:
            raise DuplicateMethod(f"{c.method.value} requested more than once")
        seen.add(c.method)
    by_method = {c.method: c for c in configs if c.method.resampling}
    out = [var_classical(fit), var_sandwich(fit)]
    for method in METHOD_ORDER:
        if method in by_method:
            out.append(_RUNNERS[method](fit, by_method[method], threads))
    return out
