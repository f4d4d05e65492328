"""Coefficient tables, Wald chi-squared tests and assumption-annotated summaries."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import special, stats

from .errors import BadLevel, RankDeficientR, SingularConstraintCov
from .formula import INTERCEPT, ModelSpec, render_formula
from .ols import FittedOls
from .variance import METHOD_ORDER, Method, VarianceEstimate

TIDY_COLUMNS = ("term", "estimate", "std.error", "statistic", "p.value", "conf.low", "conf.high", "var.type")


@dataclass(frozen=True)
class CoefRow:
    term: str
    estimate: float
    std_error: float
    statistic: float
    p_value: float
    conf_low: float
    conf_high: float
    var_type: str

    def as_tuple(self) -> tuple:
        return (
            self.term,
            self.estimate,
            self.std_error,
            self.statistic,
            self.p_value,
            self.conf_low,
            self.conf_high,
            self.var_type,
        )


@dataclass(frozen=True, eq=False)
class WaldResult:
    statistic: float
    df: int
    p_value: float
    R: np.ndarray
    r: np.ndarray
    var_type: str = Method.SANDWICH.value


def chi2_cdf(x: float, k: int) -> float:
    return float(special.chdtr(k, x))


def chi2_sf(x: float, k: int) -> float:
    return float(special.chdtrc(k, x))


def normal_two_sided_p(z: float) -> float:
    return float(2.0 * special.ndtr(-abs(z)))


def _check_level(level: float) -> float:
    level = float(level)
    if not 0.0 < level < 1.0:
        raise BadLevel(f"confidence level must lie in (0, 1), got {level}")
    return level


def coef_table(fit: FittedOls, ve: VarianceEstimate, level: float = 0.95) -> list[CoefRow]:
    """Tidy coefficient rows.

    The classical estimate uses Student-t with n - d degrees of freedom, as
    lm() does; everything else uses the standard normal.
    """
    level = _check_level(level)
    alpha = 1.0 - level
    t_dist = ve.method is Method.CLASSICAL
    df = fit.n - fit.d
    crit = float(stats.t.ppf(1 - alpha / 2, df)) if t_dist else float(special.ndtri(1 - alpha / 2))
    se = ve.std_errors
    rows = []
    for j, term in enumerate(fit.term_names):
        est = float(fit.beta_hat[j])
        s = float(se[j])
        if s > 0:
            stat = est / s
            p = float(2 * stats.t.sf(abs(stat), df)) if t_dist else normal_two_sided_p(stat)
        elif est == 0:
            stat, p = 0.0, 1.0
        else:
            stat, p = math.copysign(math.inf, est), 0.0
        rows.append(CoefRow(term, est, s, stat, p, est - crit * s, est + crit * s, ve.method.value))
    return rows


def wald_test(
    fit: FittedOls, ve: VarianceEstimate, R: np.ndarray, r: np.ndarray | None = None
) -> WaldResult:
    """Test ``R beta = r`` against chi-squared with rank(R) degrees of freedom."""
    R = np.atleast_2d(np.asarray(R, dtype=np.float64))
    k, d = R.shape
    if d != fit.d:
        raise ValueError(f"R has {d} columns, model has {fit.d} coefficients")
    r = np.zeros(k) if r is None else np.asarray(r, dtype=np.float64).reshape(-1)
    if r.size != k:
        raise ValueError(f"r has {r.size} entries, R has {k} rows")
    if k > d or np.linalg.matrix_rank(R) < k:
        raise RankDeficientR(f"restriction matrix must have full row rank {k}")
    M = R @ ve.cov_beta @ R.T
    M = (M + M.T) / 2
    eig = np.linalg.eigvalsh(M)
    if eig[-1] <= 0 or eig[0] <= 1e-12 * eig[-1]:
        raise SingularConstraintCov("R Var(beta) R^T is singular")
    diff = R @ fit.beta_hat - r
    stat = float(diff @ np.linalg.solve(M, diff))
    stat = max(stat, 0.0)
    return WaldResult(stat, k, chi2_sf(stat, k), R, r, ve.method.value)


def global_restriction(fit: FittedOls) -> np.ndarray:
    """Rows selecting every non-intercept coefficient."""
    keep = [j for j, t in enumerate(fit.term_names) if t != INTERCEPT]
    return np.eye(fit.d)[keep]


def global_wald_test(fit: FittedOls, ve: VarianceEstimate) -> WaldResult | None:
    R = global_restriction(fit)
    if R.shape[0] == 0:
        return None
    return wald_test(fit, ve, R)


def _param_line(ve: VarianceEstimate) -> str:
    p = ve.params
    parts = [f"{key} = {p[key]}" for key in ("n", "B", "m") if key in p]
    if "weights_type" in p:
        parts.append(f"weights = {p['weights_type']}")
    return "parameters: " + ", ".join(parts)


def assumptions_report(ve: VarianceEstimate) -> list[str]:
    lines = list(ve.assumptions)
    if ve.method.resampling:
        lines.append(_param_line(ve))
    return lines


def _fmt(v: float) -> str:
    if isinstance(v, str):
        return v
    if math.isnan(v):
        return "NA"
    if math.isinf(v):
        return "Inf" if v > 0 else "-Inf"
    return f"{v:.6g}"


def _table(rows: Sequence[CoefRow]) -> list[str]:
    header = ["term", "estimate", "std.error", "statistic", "p.value", "conf.low", "conf.high"]
    body = [[r.term] + [_fmt(v) for v in r.as_tuple()[1:7]] for r in rows]
    widths = [max(len(row[c]) for row in [header] + body) for c in range(len(header))]
    out = []
    for row in [header] + body:
        cells = [row[0].ljust(widths[0])] + [row[c].rjust(widths[c]) for c in range(1, len(row))]
        out.append("  ".join(cells).rstrip())
    return out


def _formula_of(fit: FittedOls) -> str:
    terms = tuple(t for t in fit.term_names if t != INTERCEPT)
    has_int = fit.design.has_intercept
    if not terms and not has_int:  # pragma: no cover - DesignMatrix forbids this
        return f"{fit.design.response} ~ ?"
    return render_formula(ModelSpec(fit.design.response, terms, has_int))


def render_summary(fit: FittedOls, ves: Iterable[VarianceEstimate], level: float = 0.95) -> str:
    """Stacked per-method coefficient tables followed by the global chi-squared test.

    Blocks appear in the fixed order classical, sandwich, empirical,
    multiplier, residual, subsampling regardless of input order.
    """
    level = _check_level(level)
    by_method = {v.method: v for v in ves}
    if Method.CLASSICAL not in by_method or Method.SANDWICH not in by_method:
        raise ValueError("summary needs at least the classical and sandwich estimates")
    lines = [
        "Model-free OLS inference",
        f"formula: {_formula_of(fit)}",
        f"n = {fit.n}, d = {fit.d}, level = {level:g}",
    ]
    for method in METHOD_ORDER:
        ve = by_method.get(method)
        if ve is None:
            continue
        lines.append("")
        title = f"== {method.label} [{method.value}] "
        lines.append(title + "=" * max(0, 64 - len(title)))
        lines.append("Assumptions:")
        lines.extend(f"  - {a}" for a in assumptions_report(ve))
        lines.extend(_table(coef_table(fit, ve, level)))
    lines.append("")
    w = global_wald_test(fit, by_method[Method.SANDWICH])
    if w is None:
        lines.append("Global chi-squared test: not applicable (no non-intercept coefficients)")
    else:
        lines.append(
            f"Global chi-squared test (sandwich), H0: all non-intercept coefficients = 0: "
            f"statistic = {_fmt(w.statistic)}, df = {w.df}, p.value = {_fmt(w.p_value)}"
        )
    return "\n".join(lines) + "\n"


def render_print(fit: FittedOls, ves: Iterable[VarianceEstimate]) -> str:
    """Compact estimates plus one standard-error column per method."""
    ves = sorted(ves, key=lambda v: METHOD_ORDER.index(v.method))
    header = ["term", "estimate"] + [f"se.{v.method.value}" for v in ves]
    body = [
        [term, _fmt(float(fit.beta_hat[j]))] + [_fmt(float(v.std_errors[j])) for v in ves]
        for j, term in enumerate(fit.term_names)
    ]
    widths = [max(len(row[c]) for row in [header] + body) for c in range(len(header))]
    lines = [f"formula: {_formula_of(fit)}", f"n = {fit.n}, d = {fit.d}", ""]
    for row in [header] + body:
        lines.append("  ".join([row[0].ljust(widths[0])] + [row[c].rjust(widths[c]) for c in range(1, len(row))]).rstrip())
    for v in ves:
        lines.append("")
        lines.append(f"{v.method.label} [{v.method.value}] assumes:")
        lines.extend(f"  - {a}" for a in assumptions_report(v))
    return "\n".join(lines) + "\n"


# -- tidy serialization -------------------------------------------------------


def _csv_cell(v) -> str:
    if isinstance(v, str):
        return v
    if math.isnan(v):
        return "NA"
    if math.isinf(v):
        return "Inf" if v > 0 else "-Inf"
    return repr(float(v))


def rows_to_csv(rows: Iterable[CoefRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TIDY_COLUMNS)
    for r in rows:
        w.writerow([_csv_cell(v) for v in r.as_tuple()])
    return buf.getvalue()


def _json_value(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def rows_to_json(rows: Iterable[CoefRow]) -> str:
    records = [{k: _json_value(v) for k, v in zip(TIDY_COLUMNS, r.as_tuple())} for r in rows]
    return json.dumps(records, indent=2) + "\n"


def wald_to_dict(w: WaldResult) -> dict:
    return {
        "statistic": w.statistic,
        "df": w.df,
        "p.value": w.p_value,
        "var.type": w.var_type,
        "R": w.R.tolist(),
        "r": w.r.tolist(),
    }
