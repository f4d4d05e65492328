"""Monte-Carlo coverage experiments: CI coverage and width against B.

Data are ``x ~ Uniform(-1, 2)`` with either a linear mean ``1 + x`` or a
quadratic mean ``1 + x + x^2``, and noise sd either constant or
proportional to ``|x|``. Coverage is measured for the projection parameter
(the population least-squares coefficients), which equals the true
coefficients only in the linear case.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
from scipy import special, stats

from . import rng as _rng
from ._parallel import map_chunks
from .formula import DesignMatrix, INTERCEPT
from .ols import fit_ols
from .tabular import Dataset
from .variance import (
    Method,
    WeightsType,
    covariance_from_replicates,
    default_subsample_size,
    var_classical,
    var_empirical_boot,
    var_multiplier_boot,
    var_residual_boot,
    var_sandwich,
    var_subsampling,
)

X_LOW, X_HIGH = -1.0, 2.0
TRUTHS = ("linear", "quadratic")
NOISES = ("homoscedastic", "heteroscedastic")
# mean function coefficients on (1, x, x^2)
_MEAN = {"linear": (1, 1, 0), "quadratic": (1, 1, 1)}


@dataclass(frozen=True)
class SimScenario:
    n: int = 500
    truth: str = "quadratic"
    noise: str = "heteroscedastic"
    sigma: float = 1.0
    reps: int = 1000
    B_grid: tuple[int, ...] = (25, 50, 100, 400)
    methods: tuple[str, ...] = ("classical_lm", "sandwich", "empirical_boot", "multiplier_boot")
    level: float = 0.95
    seed: int = 0
    weights_type: str = "rademacher"
    m: int | None = None

    def __post_init__(self):
        if self.truth not in TRUTHS:
            raise ValueError(f"truth must be one of {TRUTHS}")
        if self.noise not in NOISES:
            raise ValueError(f"noise must be one of {NOISES}")
        if self.reps < 1:
            raise ValueError("reps must be at least 1")
        grid = tuple(int(b) for b in self.B_grid)
        if any(b2 <= b1 for b1, b2 in zip(grid, grid[1:])):
            raise ValueError("B_grid must be strictly increasing")
        if grid and grid[0] < 2:
            raise ValueError("B values must be at least 2")
        object.__setattr__(self, "B_grid", grid)
        methods = tuple(Method.parse(m).value for m in self.methods)
        object.__setattr__(self, "methods", methods)
        if any(Method(m).resampling for m in methods) and not grid:
            raise ValueError("resampling methods need a non-empty B_grid")
        WeightsType(self.weights_type)
        _rng.check_seed(self.seed)
        if not 0 < self.level < 1:
            raise ValueError("level must lie in (0, 1)")

    @classmethod
    def from_dict(cls, cfg: Mapping[str, Any]) -> "SimScenario":
        known = set(cls.__dataclass_fields__)
        unknown = set(cfg) - known
        if unknown:
            raise ValueError(f"unknown scenario keys: {sorted(unknown)}")
        cfg = dict(cfg)
        for key in ("B_grid", "methods"):
            if key in cfg:
                cfg[key] = tuple(cfg[key])
        return cls(**cfg)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["B_grid"] = list(self.B_grid)
        d["methods"] = list(self.methods)
        return d


def load_scenario(path: str | Path) -> SimScenario:
    with open(path, encoding="utf-8") as fh:
        return SimScenario.from_dict(json.load(fh))


def mean_function(truth: str, x: np.ndarray) -> np.ndarray:
    a, b, c = _MEAN[truth]
    return a + b * x + c * x * x


def _draw(g: np.random.Generator, scenario: SimScenario, n: int):
    x = g.uniform(X_LOW, X_HIGH, size=n)
    eps = g.standard_normal(n)
    scale = scenario.sigma * np.abs(x) if scenario.noise == "heteroscedastic" else scenario.sigma
    return x, mean_function(scenario.truth, x) + scale * eps


def simulate_dataset(scenario: SimScenario, rep_index: int) -> Dataset:
    g = _rng.substream(scenario.seed, _rng.SIMULATION, rep_index)
    x, y = _draw(g, scenario, scenario.n)
    return Dataset(("y", "x"), (y, x))


def _uniform_moment(k: int) -> Fraction:
    a, b = Fraction(X_LOW).limit_denominator(), Fraction(X_HIGH).limit_denominator()
    return (b ** (k + 1) - a ** (k + 1)) / ((k + 1) * (b - a))


def projection_target(scenario: SimScenario) -> np.ndarray:
    """Population least-squares coefficients of y on (1, x), from exact moments."""
    m = [_uniform_moment(k) for k in range(5)]
    a, b, c = (Fraction(v) for v in _MEAN[scenario.truth])
    # E[y], E[x y]
    ey = a * m[0] + b * m[1] + c * m[2]
    exy = a * m[1] + b * m[2] + c * m[3]
    det = m[0] * m[2] - m[1] * m[1]
    intercept = (m[2] * ey - m[1] * exy) / det
    slope = (m[0] * exy - m[1] * ey) / det
    return np.array([float(intercept), float(slope)])


def plug_in_target(scenario: SimScenario, n: int = 10**7, seed: int = 0, chunk: int = 10**6) -> np.ndarray:
    """High-n plug-in estimate of the projection parameter.

    Accumulates the 2x2 normal equations over chunks; an oracle for
    :func:`projection_target`, deliberately on a different code path.
    """
    XtX = np.zeros((2, 2))
    Xty = np.zeros(2)
    done = 0
    part = 0
    while done < n:
        size = min(chunk, n - done)
        g = _rng.substream(seed, _rng.SIMULATION, 2**62 + part)
        x, y = _draw(g, scenario, size)
        XtX += np.array([[size, x.sum()], [x.sum(), x @ x]])
        Xty += np.array([y.sum(), x @ y])
        done += size
        part += 1
    return np.linalg.solve(XtX, Xty)


@dataclass(frozen=True)
class CoverageRow:
    method: str
    B: int | None
    coefficient: str
    coverage: float
    avg_width: float
    covered: int
    reps: int


def _configs(scenario: SimScenario) -> list[tuple[Method, int | None]]:
    out: list[tuple[Method, int | None]] = []
    for m in scenario.methods:
        method = Method(m)
        if method.resampling:
            out.extend((method, b) for b in scenario.B_grid)
        else:
            out.append((method, None))
    return out


def _one_rep(scenario: SimScenario, rep: int, target: np.ndarray, configs, z: float):
    data = simulate_dataset(scenario, rep)
    design = DesignMatrix(data.column("y"), np.column_stack([np.ones(scenario.n), data.column("x")]), (INTERCEPT, "x"))
    fit = fit_ols(design)
    n, d = fit.n, fit.d
    seed = _rng.derive_seed(scenario.seed, rep)
    bmax = max(scenario.B_grid) if scenario.B_grid else 0
    replicates: dict[Method, tuple[np.ndarray, int | None]] = {}
    closed: dict[Method, np.ndarray] = {}
    for m in scenario.methods:
        method = Method(m)
        if method is Method.CLASSICAL:
            closed[method] = var_classical(fit).std_errors
        elif method is Method.SANDWICH:
            closed[method] = var_sandwich(fit).std_errors
        elif method is Method.EMPIRICAL:
            ve = var_empirical_boot(fit, bmax, scenario.m, seed, threads=1)
            replicates[method] = (ve.replicates, ve.params["m"])
        elif method is Method.MULTIPLIER:
            ve = var_multiplier_boot(fit, bmax, scenario.weights_type, seed, threads=1)
            replicates[method] = (ve.replicates, None)
        elif method is Method.RESIDUAL:
            ve = var_residual_boot(fit, bmax, seed, threads=1)
            replicates[method] = (ve.replicates, None)
        else:
            m_sub = scenario.m if scenario.m is not None and scenario.m < n else default_subsample_size(n)
            ve = var_subsampling(fit, bmax, m_sub, seed, threads=1)
            replicates[method] = (ve.replicates, ve.params["m"])

    covered = np.zeros((len(configs), d), dtype=bool)
    width = np.zeros((len(configs), d))
    tcrit = float(stats.t.ppf(1 - (1 - scenario.level) / 2, n - d))
    for i, (method, B) in enumerate(configs):
        if B is None:
            se = closed[method]
            crit = tcrit if method is Method.CLASSICAL else z
        else:
            reps, m = replicates[method]
            cov = covariance_from_replicates(method, reps[:B], n, m)
            se = np.sqrt(np.clip(np.diag(cov), 0, None))
            crit = z
        lo, hi = fit.beta_hat - crit * se, fit.beta_hat + crit * se
        covered[i] = (lo <= target) & (target <= hi)
        width[i] = hi - lo
    return covered, width


def coverage_experiment(scenario: SimScenario, threads: int | None = None) -> list[CoverageRow]:
    """Coverage of the projection parameter and mean CI width, per (method, B, coefficient)."""
    target = projection_target(scenario)
    configs = _configs(scenario)
    z = float(special.ndtri(1 - (1 - scenario.level) / 2))

    def run(a: int, b: int):
        return [_one_rep(scenario, r, target, configs, z) for r in range(a, b)]

    results = [res for part in map_chunks(run, scenario.reps, threads, chunk=8) for res in part]
    covered = np.sum([c for c, _ in results], axis=0)
    widths = np.mean([w for _, w in results], axis=0)
    names = (INTERCEPT, "x")
    rows = []
    for i, (method, B) in enumerate(configs):
        for j, name in enumerate(names):
            k = int(covered[i, j])
            rows.append(CoverageRow(method.value, B, name, k / scenario.reps, float(widths[i, j]), k, scenario.reps))
    return rows


COVERAGE_COLUMNS = ("method", "B", "coefficient", "coverage", "avg_width", "covered", "reps")


def coverage_to_csv(rows: Sequence[CoverageRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COVERAGE_COLUMNS)
    for r in rows:
        w.writerow([r.method, "" if r.B is None else r.B, r.coefficient,
                    repr(float(r.coverage)), repr(float(r.avg_width)), r.covered, r.reps])
    return buf.getvalue()
