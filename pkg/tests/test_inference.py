import json
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import hetero_design, make_design
from modelfree.errors import BadLevel, RankDeficientR, SingularConstraintCov
from modelfree.formula import INTERCEPT, DesignMatrix
from modelfree.inference import (
    TIDY_COLUMNS,
    assumptions_report,
    chi2_cdf,
    coef_table,
    global_wald_test,
    normal_two_sided_p,
    render_print,
    render_summary,
    rows_to_csv,
    rows_to_json,
    wald_test,
)
from modelfree.ols import fit_ols
from modelfree.variance import Method, VarianceEstimate, comp_var, var_classical, var_empirical_boot, var_sandwich

Z975 = 1.959963984540054


def _fit(n=200, seed=0):
    return fit_ols(hetero_design(n, seed))


def test_normal_multiplier():
    fit = _fit()
    ve = var_sandwich(fit)
    row = coef_table(fit, ve, 0.95)[1]
    assert (row.conf_high - row.estimate) / row.std_error == pytest.approx(Z975, rel=1e-12)
    assert round(Z975, 6) == 1.959964


def test_intercept_only_sandwich_ci(intercept_only):
    fit = fit_ols(intercept_only)
    (row,) = coef_table(fit, var_sandwich(fit), 0.95)
    assert row.std_error == pytest.approx(math.sqrt(0.3125), abs=1e-12)
    assert row.std_error == pytest.approx(0.559017, abs=1e-6)
    assert (row.conf_low, row.conf_high) == pytest.approx((1.40435, 3.59565), abs=1e-5)


def test_classical_uses_student_t():
    sm = pytest.importorskip("statsmodels.api")
    design = hetero_design(40, 3)
    fit = fit_ols(design)
    rows = coef_table(fit, var_classical(fit), 0.9)
    res = sm.OLS(design.y, design.X).fit()
    np.testing.assert_allclose([r.std_error for r in rows], res.bse, rtol=1e-10)
    np.testing.assert_allclose([r.p_value for r in rows], res.pvalues, rtol=1e-8)
    np.testing.assert_allclose([[r.conf_low, r.conf_high] for r in rows], res.conf_int(0.1), rtol=1e-10)


def test_sandwich_matches_hc0():
    sm = pytest.importorskip("statsmodels.api")
    design = hetero_design(60, 4)
    res = sm.OLS(design.y, design.X).fit(cov_type="HC0")
    np.testing.assert_allclose(var_sandwich(fit_ols(design)).cov_beta, res.cov_params(), rtol=1e-10)


def _degenerate_ve(fit, diag):
    return VarianceEstimate(Method.SANDWICH, np.diag(diag), ("x",))


def test_zero_se_conventions():
    fit = fit_ols(make_design(np.array([1.0, 2.0, 3.0, 4.0]), np.array([0.0, 0.0, 0.0, 0.0])))
    rows = coef_table(fit, _degenerate_ve(fit, [0.0, 0.0]))
    assert all(r.statistic == 0 and r.p_value == 1 for r in rows)
    fit = fit_ols(make_design(np.array([1.0, 2.0, 3.0, 4.0]), np.array([3.0, 5.0, 7.0, 9.0])))
    rows = coef_table(fit, _degenerate_ve(fit, [0.0, 0.0]))
    assert rows[1].statistic == math.inf and rows[1].p_value == 0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.5, 0.999))
def test_coef_row_invariants(seed, level):
    fit = _fit(50, seed)
    for ve in (var_classical(fit), var_sandwich(fit)):
        for r in coef_table(fit, ve, level):
            assert r.conf_low <= r.estimate <= r.conf_high
            assert 0 <= r.p_value <= 1
            assert r.statistic == r.estimate / r.std_error


@given(st.floats(0.01, 0.98), st.floats(0.001, 0.01))
def test_width_monotone_in_level(level, step):
    fit = _fit(80, 1)
    ve = var_sandwich(fit)
    w1 = [r.conf_high - r.conf_low for r in coef_table(fit, ve, level)]
    w2 = [r.conf_high - r.conf_low for r in coef_table(fit, ve, min(level + step, 0.999))]
    assert all(a < b for a, b in zip(w1, w2))
    from scipy.stats import norm

    for r, w in zip(coef_table(fit, ve, level), w1):
        assert w == pytest.approx(2 * norm.ppf(1 - (1 - level) / 2) * r.std_error, rel=1e-12)


@pytest.mark.parametrize("level", [0.0, 1.0, -0.1, 1.5])
def test_bad_level(level):
    fit = _fit(30)
    with pytest.raises(BadLevel):
        coef_table(fit, var_sandwich(fit), level)


def test_wald_null_exactly_satisfied():
    fit = _fit()
    R = np.array([[1.0, 0.0], [1.0, 1.0]])
    res = wald_test(fit, var_sandwich(fit), R, R @ fit.beta_hat)
    assert res.statistic == pytest.approx(0, abs=1e-20)
    assert res.p_value == pytest.approx(1, abs=1e-15)
    assert res.df == 2


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_single_constraint_equals_z_test(seed):
    fit = _fit(60, seed)
    ve = var_sandwich(fit)
    rows = coef_table(fit, ve)
    for j in range(fit.d):
        res = wald_test(fit, ve, np.eye(fit.d)[[j]], [0.0])
        assert res.statistic == pytest.approx(rows[j].statistic ** 2, rel=1e-10)
        assert abs(res.p_value - rows[j].p_value) <= 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-1e3, 1e3).filter(lambda c: abs(c) > 1e-3))
def test_wald_row_scaling_invariance(seed, c):
    fit = _fit(60, seed)
    ve = var_sandwich(fit)
    R = np.array([[1.0, -1.0]])
    a = wald_test(fit, ve, R, [0.5])
    b = wald_test(fit, ve, c * R, [c * 0.5])
    assert b.statistic == pytest.approx(a.statistic, rel=1e-9)


def test_wald_errors():
    fit = _fit()
    ve = var_sandwich(fit)
    with pytest.raises(RankDeficientR):
        wald_test(fit, ve, np.array([[1.0, 1.0], [2.0, 2.0]]))
    with pytest.raises(RankDeficientR):
        wald_test(fit, ve, np.ones((3, 2)))
    with pytest.raises(SingularConstraintCov):
        wald_test(fit, _degenerate_ve(fit, [1.0, 0.0]), np.eye(2))
    with pytest.raises(SingularConstraintCov):
        wald_test(fit, _degenerate_ve(fit, [0.0, 0.0]), np.eye(2)[[1]])


def _chi2_cdf_series(k, x):
    # lower regularized gamma P(k/2, x/2) from its power series, at 40 digits
    with mpmath.workdps(40):
        s, z = mpmath.mpf(k) / 2, mpmath.mpf(x) / 2
        term = mpmath.mpf(1) / s
        total = term
        j = 1
        while abs(term) > mpmath.mpf(10) ** -45 * abs(total):
            term *= z / (s + j)
            total += term
            j += 1
        return float(total * mpmath.exp(-z + s * mpmath.log(z) - mpmath.loggamma(s)))


@pytest.mark.parametrize("k", [1, 2, 5, 10])
@pytest.mark.parametrize("x", [0.1, 1, 5, 20])
def test_chi2_cdf_series_oracle(k, x):
    assert abs(chi2_cdf(x, k) - _chi2_cdf_series(k, x)) <= 1e-10


def test_chi2_frozen_values():
    # series oracle values, 40-digit arithmetic
    assert chi2_cdf(1.0, 1) == pytest.approx(0.6826894921370859, abs=1e-15)
    assert chi2_cdf(5.0, 2) == pytest.approx(1 - math.exp(-2.5), abs=1e-15)


def test_normal_two_sided():
    assert normal_two_sided_p(Z975) == pytest.approx(0.05, abs=1e-15)


def test_global_test_none_without_slopes(intercept_only):
    fit = fit_ols(intercept_only)
    assert global_wald_test(fit, var_sandwich(fit)) is None
    assert "not applicable" in render_summary(fit, comp_var(fit))


def test_summary_default_blocks():
    fit = _fit()
    text = render_summary(fit, comp_var(fit))
    assert text.count("\n== ") == 2
    assert "[classical_lm]" in text and "[sandwich]" in text
    last = text.rstrip("\n").splitlines()[-1]
    assert last.startswith("Global chi-squared test (sandwich)")
    w = global_wald_test(fit, var_sandwich(fit))
    assert f"df = {w.df}" in last


def test_summary_six_blocks_fixed_order():
    fit = _fit()
    reqs = [
        {"method": "subsampling", "B": 100, "m": 100},
        {"method": "residual_boot", "B": 100},
        {"method": "multiplier_boot", "B": 100},
        {"method": "empirical_boot", "B": 100},
    ]
    ves = comp_var(fit, reqs)
    text = render_summary(fit, list(reversed(ves)))
    order = [text.index(f"[{m.value}]") for m in
             (Method.CLASSICAL, Method.SANDWICH, Method.EMPIRICAL, Method.MULTIPLIER, Method.RESIDUAL, Method.SUBSAMPLING)]
    assert order == sorted(order)
    assert text == render_summary(fit, comp_var(fit, reqs))


def test_summary_requires_defaults():
    fit = _fit()
    with pytest.raises(ValueError):
        render_summary(fit, [var_sandwich(fit)])


def test_assumption_parameter_line():
    fit = fit_ols(hetero_design(505, 0))
    ve = var_empirical_boot(fit, 100, 505)
    line = assumptions_report(ve)[-1]
    assert line == "parameters: n = 505, B = 100, m = 505"
    assert not any(a.startswith("parameters") for a in assumptions_report(var_sandwich(fit)))


def test_print_has_se_per_method():
    fit = _fit()
    text = render_print(fit, comp_var(fit))
    assert "se.classical_lm" in text and "se.sandwich" in text


def test_tidy_serialization():
    fit = _fit()
    rows = [r for ve in comp_var(fit) for r in coef_table(fit, ve)]
    lines = rows_to_csv(rows).splitlines()
    assert lines[0] == ",".join(TIDY_COLUMNS)
    assert len(lines) == 1 + 2 * fit.d
    back = json.loads(rows_to_json(rows))
    assert [list(r) for r in back] == [list(TIDY_COLUMNS)] * len(rows)
    assert back[0]["estimate"] == rows[0].estimate


def test_tidy_nonfinite_encoding():
    fit = fit_ols(make_design(np.array([1.0, 2.0, 3.0, 4.0]), np.array([3.0, 5.0, 7.0, 9.0])))
    rows = coef_table(fit, _degenerate_ve(fit, [0.0, 0.0]))
    assert ",Inf," in rows_to_csv(rows)
    assert json.loads(rows_to_json(rows))[1]["statistic"] is None
