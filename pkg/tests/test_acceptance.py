"""Acceptance criteria, one test each, at the stated tolerances.

Every test prints a single ``PASS``/``FAIL`` line with the measured values.
Run standalone with ``python tests/test_acceptance.py``.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
import sys
import time
from pathlib import Path

import mpmath
import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))
from conftest import hetero_design, make_design, rel_frob  # noqa: E402

from modelfree import rng as _rng
from modelfree.cli import run as cli_run
from modelfree.diagnostics import bootstrap_reweighted_curves, reweight_centers, reweighted_estimates
from modelfree.formula import INTERCEPT, DesignMatrix
from modelfree.inference import chi2_cdf, global_restriction, normal_two_sided_p, render_summary, wald_test
from modelfree.ols import fit_ols
from modelfree.simharness import SimScenario, coverage_experiment
from modelfree.variance import (
    MAMMEN_VALUES,
    Method,
    WeightsType,
    comp_var,
    sample_weights,
    var_classical,
    var_empirical_boot,
    var_multiplier_boot,
    var_residual_boot,
    var_sandwich,
)


class Criterion:
    """Collects named checks and prints one verdict line."""

    def __init__(self, number: int, title: str):
        self.number, self.title = number, title
        self.failures: list[str] = []
        self.notes: list[str] = []
        self.start = time.perf_counter()

    def check(self, ok: bool, what: str) -> None:
        self.notes.append(what)
        if not ok:
            self.failures.append(what)

    def elapsed(self) -> float:
        return time.perf_counter() - self.start

    def runtime(self, limit: float) -> None:
        t = self.elapsed()
        self.check(t < limit, f"runtime {t:.2f}s < {limit:g}s")

    def finish(self, capsys) -> None:
        verdict = "FAIL" if self.failures else "PASS"
        line = f"{verdict} criterion {self.number}: {self.title}"
        detail = self.failures if self.failures else self.notes
        with capsys.disabled():
            print(f"\n{line} | " + "; ".join(detail))
        assert not self.failures, "; ".join(self.failures)


# -- 1 --------------------------------------------------------------------


def test_criterion_1_tiny_n_oracles(capsys):
    c = Criterion(1, "tiny-n closed forms and normal equations")
    fit = fit_ols(DesignMatrix(np.array([1.0, 2.0, 3.0, 4.0]), np.ones((4, 1)), (INTERCEPT,)))
    cl = float(var_classical(fit).cov_beta[0, 0])
    sw = float(var_sandwich(fit).cov_beta[0, 0])
    c.check(abs(cl - 5 / 12) <= 1e-12, f"classical |{cl!r} - 5/12| <= 1e-12")
    c.check(abs(sw - 0.3125) <= 1e-12, f"sandwich |{sw!r} - 0.3125| <= 1e-12")
    g = np.random.default_rng(20240101)
    worst = 0.0
    for _ in range(200):
        X = g.normal(size=(5, 2))
        y = g.normal(size=5)
        beta = fit_ols(DesignMatrix(y, X, ("a", "b"))).beta_hat
        ref = np.linalg.solve(X.T @ X, X.T @ y)
        worst = max(worst, float(np.max(np.abs(beta - ref)) / np.max(np.abs(ref))))
    c.check(worst <= 1e-9, f"5x2 max rel err {worst:.2e} <= 1e-9")
    c.runtime(1.0)
    c.finish(capsys)


# -- 2 --------------------------------------------------------------------


def test_criterion_2_bootstrap_enumeration(capsys):
    c = Criterion(2, "n=3 empirical bootstrap vs 27-resample enumeration")
    y = np.array([0.0, 1.0, 5.0])
    exact = float(np.var([np.mean(s) for s in itertools.product(y, repeat=3)]))
    fit = fit_ols(DesignMatrix(y, np.ones((3, 1)), (INTERCEPT,)))
    mc = float(var_empirical_boot(fit, 100_000, m=3, seed=2).cov_beta[0, 0])
    rel = abs(mc - exact) / exact
    c.check(rel <= 0.03, f"B=1e5 {mc:.5f} vs exact {exact:.5f}, rel {rel:.4f} <= 0.03")
    c.runtime(10.0)
    c.finish(capsys)


# -- 3, 4 -----------------------------------------------------------------


def test_criterion_3_multiplier_consistency(capsys):
    c = Criterion(3, "multiplier bootstrap vs sandwich, all weight types")
    fit = fit_ols(hetero_design(500, seed=3))
    sandwich = var_sandwich(fit).cov_beta
    covs = {w.value: var_multiplier_boot(fit, 5000, w, seed=3).cov_beta for w in WeightsType}
    e = rel_frob(covs["gaussian"], sandwich)
    c.check(e <= 0.10, f"gaussian vs sandwich {e:.4f} <= 0.10")
    for a, b in itertools.combinations(covs, 2):
        d = float(np.linalg.norm(covs[a] - covs[b]) / min(np.linalg.norm(covs[a]), np.linalg.norm(covs[b])))
        c.check(d <= 0.15, f"{a}/{b} {d:.4f} <= 0.15")
    c.runtime(30.0)
    c.finish(capsys)


def test_criterion_4_residual_bootstrap_limit(capsys):
    c = Criterion(4, "residual bootstrap vs homoscedastic closed form")
    fit = fit_ols(hetero_design(500, seed=3))
    closed = float(np.mean(fit.residuals**2)) * np.linalg.inv(fit.design.X.T @ fit.design.X)
    cov = var_residual_boot(fit, 5000, seed=4).cov_beta
    e = rel_frob(cov, closed)
    c.check(e <= 0.10, f"Frobenius rel {e:.4f} <= 0.10")
    c.runtime(30.0)
    c.finish(capsys)


# -- 5 --------------------------------------------------------------------


def test_criterion_5_weight_moments(capsys):
    c = Criterion(5, "multiplier weight moments over 1e6 draws")
    for i, kind in enumerate(WeightsType):
        w = sample_weights(kind, 1_000_000, _rng.substream(5, 0, i))
        mean, var = float(w.mean()), float(w.var())
        c.check(abs(mean) <= 0.004, f"{kind.value} mean {mean:+.4f}")
        c.check(abs(var - 1) <= 0.01, f"{kind.value} var {var:.4f}")
        if kind is WeightsType.MAMMEN:
            m3 = float(np.mean(w**3))
            c.check(abs(m3 - 1) <= 0.02, f"mammen E[w^3] {m3:.4f}")
    support = set(np.unique(sample_weights("mammen", 1000, _rng.substream(5, 0, 9))))
    c.check(support <= set(MAMMEN_VALUES), "mammen two-point support")
    c.runtime(5.0)
    c.finish(capsys)


# -- 6 --------------------------------------------------------------------


def _chi2_cdf_series(k: int, x: float) -> float:
    # lower regularized gamma P(k/2, x/2) summed as a power series at 40 digits
    with mpmath.workdps(40):
        s, z = mpmath.mpf(k) / 2, mpmath.mpf(x) / 2
        term = total = mpmath.mpf(1) / s
        j = 1
        while abs(term) > mpmath.mpf(10) ** -45 * abs(total):
            term *= z / (s + j)
            total += term
            j += 1
        return float(total * mpmath.exp(-z + s * mpmath.log(z) - mpmath.loggamma(s)))


def test_criterion_6_wald_identities(capsys):
    c = Criterion(6, "Wald identities and chi-squared CDF")
    fit = fit_ols(hetero_design(300, seed=6))
    ve = var_sandwich(fit)
    R = np.array([[0.0, 1.0], [1.0, 1.0]])
    w = wald_test(fit, ve, R, R @ fit.beta_hat)
    c.check(w.statistic == 0.0 and w.p_value == 1.0, f"r = R beta: stat {w.statistic}, p {w.p_value}")
    worst = 0.0
    for r in (0.0, 1.5, 2.0, 2.1):
        w1 = wald_test(fit, ve, R[:1], [r])
        z = (fit.beta_hat[1] - r) / ve.std_errors[1]
        worst = max(worst, abs(w1.p_value - normal_two_sided_p(z)))
    c.check(worst <= 1e-12, f"chi2_1 vs two-sided z p max diff {worst:.1e}")
    err = max(abs(chi2_cdf(x, k) - _chi2_cdf_series(k, x)) for k in (1, 2, 5, 10) for x in (0.1, 1, 5, 20))
    c.check(err <= 1e-10, f"CDF vs series max diff {err:.1e} <= 1e-10")
    c.finish(capsys)


# -- 7 --------------------------------------------------------------------

COVERAGE_SEED = 7  # fixed before the first run; never tuned


def _coverage(rows, method, coef, B=None):
    (row,) = [r for r in rows if r.method == method and r.coefficient == coef and r.B == B]
    return row.coverage


@pytest.mark.slow
def test_criterion_7_coverage(capsys):
    c = Criterion(7, "coverage experiment")
    control = SimScenario(n=500, truth="linear", noise="homoscedastic", reps=1000, B_grid=(),
                          methods=("classical_lm", "sandwich"), seed=COVERAGE_SEED)
    rows = coverage_experiment(control, threads=1)
    for m in ("classical_lm", "sandwich"):
        for coef in (INTERCEPT, "x"):
            cov = _coverage(rows, m, coef)
            c.check(0.93 <= cov <= 0.97, f"control {m} {coef} {cov:.3f}")
    mis = SimScenario(n=500, truth="quadratic", noise="heteroscedastic", reps=1000, B_grid=(25, 50, 100, 400),
                      methods=("classical_lm", "sandwich", "empirical_boot", "multiplier_boot"), seed=COVERAGE_SEED)
    rows = coverage_experiment(mis, threads=1)
    sw, cl = _coverage(rows, "sandwich", "x"), _coverage(rows, "classical_lm", "x")
    c.check(sw - cl >= 0.02, f"slope sandwich {sw:.3f} - classical {cl:.3f} >= 0.02")
    c.check(0.92 <= sw <= 0.98, f"slope sandwich {sw:.3f} in [0.92, 0.98]")
    for m in ("empirical_boot", "multiplier_boot"):
        for coef in (INTERCEPT, "x"):
            cov = _coverage(rows, m, coef, 400)
            c.check(abs(cov - 0.95) <= 0.03, f"{m} B=400 {coef} {cov:.3f}")
    c.runtime(600.0)
    c.finish(capsys)


# -- 8 --------------------------------------------------------------------


def test_criterion_8_diagnostics_oracle(capsys):
    c = Criterion(8, "nonlinearity slope vs 2c; exact-linear flat curves")
    g = np.random.default_rng(8)
    x = g.uniform(0, 1, 5000)
    design = make_design(x, x**2, names=["x"])
    gamma = float(np.std(x, ddof=1)) / 4
    deciles = reweight_centers(x)
    interior = deciles[1:8]  # p = 0.2, ..., 0.8
    grid = reweighted_estimates(design, "x", interior, gamma)
    rel = np.abs(grid.estimates[:, 1] - 2 * interior) / (2 * interior)
    c.check(float(rel.max()) <= 0.15, f"max rel dev from 2c {rel.max():.4f} <= 0.15 (gamma = sd/4)")

    x2 = g.normal(size=(400, 2))
    lin = make_design(x2, 0.5 + x2 @ np.array([2.0, -1.0]))
    beta = fit_ols(lin).beta_hat
    dev = band = 0.0
    for j in ("x1", "x2"):
        bg = bootstrap_reweighted_curves(lin, j, B=50, seed=8)
        dev = max(dev, float(np.max(np.abs(bg.estimates - beta))))
        dev = max(dev, float(np.max(np.abs(bg.boot_curves - beta))))
        band = max(band, float(np.max(np.ptp(bg.boot_curves, axis=0))))
    c.check(dev <= 1e-9, f"curves vs beta {dev:.1e} <= 1e-9")
    c.check(band <= 1e-9, f"band width {band:.1e}")
    c.finish(capsys)


# -- 9 --------------------------------------------------------------------


def _data_file(tmp_path: Path) -> str:
    g = np.random.default_rng(9)
    n = 300
    x1, x2 = g.uniform(-1, 2, n), g.normal(size=n)
    y = 1 + x1 + x1**2 - 0.5 * x2 + np.abs(x1) * g.normal(size=n)
    p = tmp_path / "data.csv"
    with open(p, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["y", "x1", "x2"])
        for row in zip(y, x1, x2):
            w.writerow([repr(float(v)) for v in row])
    return str(p)


def _outputs(tmp_path: Path, data: str, threads: int) -> dict[str, bytes]:
    out = tmp_path / f"t{threads}"
    out.mkdir()
    model = ["--data", data, "--formula", "y ~ x1 + x2", "--seed", "9", "--threads", str(threads)]
    boot = ["--boot-emp", "B=700", "--boot-mul", "B=700,weights=mammen", "--boot-res", "B=300",
            "--subsample", "B=300"]
    cmds = {
        "confint.csv": ["confint", *model, *boot],
        "confint.json": ["confint", *model, *boot, "--format", "json"],
        "summary.txt": ["summary", *model, *boot],
    }
    for name, argv in cmds.items():
        assert cli_run([*argv, "--output", str(out / name)]) == 0
    for kind in ("focal-slope", "nonlinearity", "focal-reweight", "qq", "ci-width"):
        argv = ["diag", *model, "--kind", kind, "--focal", "x1", "--out-dir", str(out), "--B", "300"]
        if kind == "ci-width":
            argv += boot
        assert cli_run(argv) == 0
    cfg = tmp_path / "sim.json"
    cfg.write_text(json.dumps({"n": 100, "reps": 40, "B_grid": [20, 50], "seed": 9}))
    assert cli_run(["simulate", "--config", str(cfg), "--out-dir", str(out / "sim"), "--threads", str(threads)]) == 0
    return {str(p.relative_to(out)): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()}


def test_criterion_9_determinism(capsys, tmp_path):
    c = Criterion(9, "byte-identical outputs for 1 and 8 threads")
    data = _data_file(tmp_path)
    one = _outputs(tmp_path, data, 1)
    eight = _outputs(tmp_path, data, 8)
    capsys.readouterr()
    c.check(sorted(one) == sorted(eight) and len(one) >= 20, f"{len(one)} files compared")
    differ = [k for k in one if one[k] != eight.get(k)]
    c.check(not differ, "differing: " + (", ".join(differ) or "none"))
    c.finish(capsys)


# -- 10 -------------------------------------------------------------------


def test_criterion_10_defaults(capsys):
    c = Criterion(10, "default estimators and global chi-squared line")
    fit = fit_ols(hetero_design(200, seed=10))
    methods = [v.method for v in comp_var(fit)]
    c.check(methods == [Method.CLASSICAL, Method.SANDWICH], f"comp_var() -> {[m.value for m in methods]}")
    for ves in (comp_var(fit), comp_var(fit, [{"method": "multiplier_boot", "B": 50, "seed": 1}])):
        last = render_summary(fit, ves).rstrip().splitlines()[-1]
        w = wald_test(fit, var_sandwich(fit), global_restriction(fit))
        c.check(last.startswith("Global chi-squared test") and f"df = {w.df}" in last, "summary ends with global test")
    c.finish(capsys)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-s"]))
