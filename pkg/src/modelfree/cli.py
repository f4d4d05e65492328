"""Command-line front end: ``modelfree <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data or model error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from . import diagnostics as dg
from . import figures
from .errors import ModelFreeError
from .formula import build_design, parse_formula
from .inference import (
    coef_table,
    render_print,
    render_summary,
    rows_to_csv,
    rows_to_json,
    wald_test,
    wald_to_dict,
)
from .ols import fit_ols
from .plotkit import render_svg
from .simharness import SimScenario, coverage_experiment, coverage_to_csv, load_scenario
from .tabular import read_csv
from .variance import DEFAULT_B, EstimatorConfig, Method, WeightsType, comp_var

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2

DIAG_KINDS = ("focal-slope", "nonlinearity", "focal-reweight", "qq", "ci-width", "classic")

_FLAG_METHODS = {
    "boot_emp": Method.EMPIRICAL,
    "boot_mul": Method.MULTIPLIER,
    "boot_res": Method.RESIDUAL,
    "subsample": Method.SUBSAMPLING,
}

_SPEC_HELP = (
    "comma-separated key=value list; keys B (default %d), m (an integer, or 'n' for the "
    "row count), weights (rademacher|mammen|webb|gaussian), seed. A bare flag uses the defaults."
) % DEFAULT_B


class UsageError(Exception):
    def __init__(self, message: str, help_shown: bool = False):
        super().__init__(message)
        self.help_shown = help_shown


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_help(sys.stderr)
        raise UsageError(message, help_shown=True)


# -- flag grammar ---------------------------------------------------------------


def parse_method_spec(method: Method, text: str) -> dict[str, Any]:
    """``"B=100,m=n"`` -> estimator-config dict for ``method``."""
    cfg: dict[str, Any] = {"method": method.value}
    for token in filter(None, (t.strip() for t in text.split(","))):
        key, sep, value = token.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not value:
            raise UsageError(f"malformed token {token!r} in {method.value} spec")
        try:
            if key == "B":
                cfg["B"] = int(value)
            elif key == "m":
                cfg["m"] = "n" if value == "n" else int(value)
            elif key in ("weights", "weights_type"):
                cfg["weights_type"] = WeightsType(value).value
            elif key == "seed":
                cfg["seed"] = int(value)
            else:
                raise UsageError(f"unknown key {key!r} in {method.value} spec")
        except ValueError as exc:
            raise UsageError(f"bad value for {key!r} in {method.value} spec: {value!r}") from exc
    if "weights_type" in cfg and method is not Method.MULTIPLIER:
        raise UsageError(f"weights only apply to the multiplier bootstrap, not {method.value}")
    return cfg


def _requests_from_args(args) -> list[dict[str, Any]]:
    out = []
    for attr, method in _FLAG_METHODS.items():
        text = getattr(args, attr, None)
        if text is not None:
            out.append(parse_method_spec(method, text))
    return out


def _resolve_seed(args, requests: list[dict[str, Any]], randomized: bool) -> int:
    seed = args.seed
    needs = randomized or any("seed" not in r for r in requests)
    if seed is None:
        seed = 0
        if needs:
            print("note: no --seed given; using seed 0", file=sys.stderr)
    for r in requests:
        r.setdefault("seed", seed)
    return seed


def _config_for_fit(r: Mapping[str, Any], n: int) -> EstimatorConfig:
    cfg = dict(r)
    if cfg.get("m") == "n":
        cfg["m"] = n
    return EstimatorConfig.from_dict(cfg)


# -- shared pipeline -------------------------------------------------------------


def _fit(data_path: str, formula: str):
    spec = parse_formula(formula)
    data = read_csv(data_path)
    design = build_design(spec, data)
    return fit_ols(design)


def _estimates(fit, requests, threads):
    return comp_var(fit, [_config_for_fit(r, fit.n) for r in requests], threads)


def _emit(text: str | bytes, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text if isinstance(text, str) else text.decode("utf-8"))
        return
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(text, bytes):
        p.write_bytes(text)
    else:
        p.write_text(text, encoding="utf-8", newline="\n")


def _tidy_rows(fit, ves, level):
    return [row for ve in ves for row in coef_table(fit, ve, level)]


# -- job config -------------------------------------------------------------------

_JOB_KEYS = {"data_path", "formula", "variance", "level", "seed", "outputs"}
_OUTPUT_KEYS = {"summary_txt", "tidy_csv", "tidy_json", "plots_dir"}


@dataclass(frozen=True)
class JobConfig:
    data_path: str
    formula: str
    variance: tuple[EstimatorConfig, ...] = ()
    level: float = 0.95
    outputs: Mapping[str, str] = field(default_factory=dict)
    unseeded: bool = False

    @classmethod
    def from_dict(cls, cfg: Mapping[str, Any], base: Path | None = None) -> "JobConfig":
        """Validate everything up front; raises ValueError on any problem."""
        if not isinstance(cfg, Mapping):
            raise ValueError("job config must be a JSON object")
        unknown = set(cfg) - _JOB_KEYS
        if unknown:
            raise ValueError(f"unknown job keys: {sorted(unknown)}")
        for key in ("data_path", "formula"):
            if not isinstance(cfg.get(key), str):
                raise ValueError(f"job config needs a string {key!r}")
        outputs = cfg.get("outputs") or {}
        if not isinstance(outputs, Mapping):
            raise ValueError("'outputs' must be an object")
        bad = set(outputs) - _OUTPUT_KEYS
        if bad:
            raise ValueError(f"unknown output keys: {sorted(bad)}")
        outputs = {k: v for k, v in outputs.items() if v}
        if not outputs:
            raise ValueError("job config requests no outputs")
        level = float(cfg.get("level", 0.95))
        if not 0 < level < 1:
            raise ValueError(f"level must lie in (0, 1), got {level}")
        seed = cfg.get("seed")
        reqs = []
        for r in cfg.get("variance") or []:
            r = dict(r)
            if seed is not None:
                r.setdefault("seed", seed)
            reqs.append(r)
        variance = tuple(EstimatorConfig.from_dict(r) for r in reqs)
        parse_formula(cfg["formula"])

        def resolve(p: str) -> str:
            return str(base / p) if base is not None and not Path(p).is_absolute() else p

        data_path = resolve(cfg["data_path"])
        if not Path(data_path).is_file():
            raise ValueError(f"data file not found: {data_path}")
        unseeded = any("seed" not in r for r in reqs)
        return cls(data_path, cfg["formula"], variance, level, {k: resolve(v) for k, v in outputs.items()}, unseeded)


def load_job(path: str | Path) -> JobConfig:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        cfg = json.load(fh)
    return JobConfig.from_dict(cfg, base=path.parent)


def run_job(job: JobConfig, threads: int | None = None) -> None:
    fit = _fit(job.data_path, job.formula)
    ves = comp_var(fit, job.variance, threads)
    out = job.outputs
    if "summary_txt" in out:
        _emit(render_summary(fit, ves, job.level), out["summary_txt"])
    rows = _tidy_rows(fit, ves, job.level)
    if "tidy_csv" in out:
        _emit(rows_to_csv(rows), out["tidy_csv"])
    if "tidy_json" in out:
        _emit(rows_to_json(rows), out["tidy_json"])
    if "plots_dir" in out:
        plots = Path(out["plots_dir"])
        _emit(render_svg(figures.ci_width_spec(dg.ci_width_comparison(rows))), str(plots / "ci-width.svg"))
        _emit(render_svg(figures.scatter_spec(dg.lm_diag_data(fit))), str(plots / "classic.svg"))
        boot = [v for v in ves if v.replicates is not None and v.replicates.shape[0] >= 10]
        if boot:
            qq = [dg.qq_data(boot[0], j, t) for j, t in enumerate(fit.term_names)]
            _emit(render_svg(figures.qq_spec(qq)), str(plots / "qq.svg"))


# -- subcommands ----------------------------------------------------------------


def _need_model(args) -> None:
    if not args.data or not args.formula:
        raise UsageError("--data and --formula are required")


def cmd_fit(args) -> None:
    _need_model(args)
    requests = _requests_from_args(args)
    if requests:
        _resolve_seed(args, requests, False)
    fit = _fit(args.data, args.formula)
    _emit(render_print(fit, _estimates(fit, requests, args.threads)), args.output)


def cmd_summary(args) -> None:
    if args.job:
        if args.data or args.formula or _requests_from_args(args):
            raise UsageError("--job cannot be combined with --data, --formula or variance flags")
        try:
            job = load_job(args.job)
        except (ValueError, json.JSONDecodeError) as exc:
            raise ModelFreeError(f"invalid job config: {exc}") from exc
        if job.variance and args.seed is not None:
            job = replace(job, variance=tuple(replace(c, seed=args.seed) for c in job.variance))
        elif job.unseeded:
            print("note: no seed in job config or --seed; using seed 0", file=sys.stderr)
        run_job(job, args.threads)
        return
    _need_model(args)
    requests = _requests_from_args(args)
    if requests:
        _resolve_seed(args, requests, False)
    fit = _fit(args.data, args.formula)
    _emit(render_summary(fit, _estimates(fit, requests, args.threads), args.level), args.output)


def cmd_confint(args) -> None:
    _need_model(args)
    requests = _requests_from_args(args)
    if requests:
        _resolve_seed(args, requests, False)
    fit = _fit(args.data, args.formula)
    rows = _tidy_rows(fit, _estimates(fit, requests, args.threads), args.level)
    _emit(rows_to_json(rows) if args.format == "json" else rows_to_csv(rows), args.output)


def read_matrix(path: str, terms: Sequence[str] | None = None) -> np.ndarray:
    """Numeric matrix from a comma/whitespace separated file.

    A first row of names is allowed; its columns are then matched to ``terms``.
    """
    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise ModelFreeError(f"{path}: no data")
    cells = [next(csv.reader([ln.replace("\t", ",")])) if "," in ln or "\t" in ln else ln.split() for ln in lines]
    cells = [[c.strip() for c in row] for row in cells]

    def numeric(row):
        try:
            return [float(c) for c in row]
        except ValueError:
            return None

    header = None
    if numeric(cells[0]) is None:
        header, cells = cells[0], cells[1:]
    rows = []
    for i, row in enumerate(cells, start=2 if header else 1):
        vals = numeric(row)
        if vals is None or not all(math.isfinite(v) for v in vals):
            raise ModelFreeError(f"{path}: row {i} is not numeric")
        rows.append(vals)
    if not rows or len({len(r) for r in rows}) != 1:
        raise ModelFreeError(f"{path}: rows must be non-empty and of equal length")
    M = np.array(rows)
    if header is not None:
        if terms is None:
            raise ModelFreeError(f"{path}: named columns need model terms")
        if len(header) != M.shape[1] or len(set(header)) != len(header):
            raise ModelFreeError(f"{path}: header does not match the data")
        unknown = [h for h in header if h not in terms]
        if unknown:
            raise ModelFreeError(f"{path}: unknown term(s) {unknown}")
        full = np.zeros((M.shape[0], len(terms)))
        for c, h in enumerate(header):
            full[:, list(terms).index(h)] = M[:, c]
        M = full
    return M


def cmd_waldtest(args) -> None:
    _need_model(args)
    requests = _requests_from_args(args)
    if requests:
        _resolve_seed(args, requests, False)
    try:
        method = Method.parse(args.var_type)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if method.resampling and method.value not in {r["method"] for r in requests}:
        raise UsageError(f"--var-type {method.value} needs the matching resampling flag")
    fit = _fit(args.data, args.formula)
    R = read_matrix(args.R, fit.term_names)
    r = None if args.r is None else read_matrix(args.r).reshape(-1)
    ve = next(v for v in _estimates(fit, requests, args.threads) if v.method is method)
    res = wald_test(fit, ve, R, r)
    if args.format == "json":
        _emit(json.dumps(wald_to_dict(res), indent=2) + "\n", args.output)
    else:
        _emit(
            f"Wald chi-squared test ({res.var_type}): statistic = {res.statistic:.6g}, "
            f"df = {res.df}, p.value = {res.p_value:.6g}\n",
            args.output,
        )


def _records_csv(records: Sequence[Mapping[str, Any]]) -> str:
    buf = io.StringIO()
    if not records:
        return ""
    w = csv.writer(buf, lineterminator="\n")
    cols = list(records[0])
    w.writerow(cols)
    for rec in records:
        row = []
        for c in cols:
            v = rec[c]
            if v is None:
                row.append("NA")
            elif isinstance(v, float):
                row.append("NA" if math.isnan(v) else ("Inf" if v > 0 else "-Inf") if math.isinf(v) else repr(v))
            else:
                row.append(v)
        w.writerow(row)
    return buf.getvalue()


def _records_json(records: Sequence[Mapping[str, Any]]) -> str:
    clean = [{k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in r.items()} for r in records]
    return json.dumps(clean, indent=2) + "\n"


def _diag_data(args, fit):
    """Returns (records, PlotSpec) for the requested diagnostic."""
    kind = args.kind
    design = fit.design
    if kind in ("focal-slope", "nonlinearity", "focal-reweight"):
        seed = _resolve_seed(args, [], args.B > 0)
        if kind == "focal-reweight":
            if not args.focal:
                raise UsageError("--kind focal-reweight needs --focal REGRESSOR")
            j = design.index(args.focal)
            centers = dg.reweight_centers(design.X[:, j], args.grid, args.K)
            if args.B > 0:
                grid = dg.bootstrap_reweighted_curves(design, j, centers, args.gamma, args.B, seed, args.threads)
            else:
                grid = dg.reweighted_estimates(design, j, centers, args.gamma)
            panels = dg.focal_reweighting_variable_data(grid)
        else:
            grids = dg.all_grids(design, args.grid, args.K, args.B, seed, args.threads)
            if kind == "focal-slope":
                if not args.focal:
                    raise UsageError("--kind focal-slope needs --focal COEFFICIENT")
                design.index(args.focal)
                panels = dg.focal_slope_data(grids, args.focal)
            else:
                panels = dg.nonlinearity_detection_data(grids)
        return dg.panels_to_records(panels), figures.curve_panels_spec(panels)
    if kind == "qq":
        requests = _requests_from_args(args) or [{"method": Method.EMPIRICAL.value, "B": DEFAULT_B, "m": "n"}]
        _resolve_seed(args, requests, True)
        ves = [v for v in _estimates(fit, requests, args.threads) if v.replicates is not None]
        ve = ves[0]
        terms = [args.focal] if args.focal else list(fit.term_names)
        qq = [dg.qq_data(ve, design.index(t), t) for t in terms]
        records = [
            {"term": q.term, "var.type": ve.method.value, "theoretical": float(a), "sample": float(b)}
            for q in qq
            for a, b in zip(q.theoretical_quantiles, q.sample_quantiles)
        ]
        return records, figures.qq_spec(qq)
    if kind == "ci-width":
        requests = _requests_from_args(args)
        if requests:
            _resolve_seed(args, requests, False)
        records = dg.ci_width_comparison(_tidy_rows(fit, _estimates(fit, requests, args.threads), args.level))
        return records, figures.ci_width_spec(records)
    data = dg.lm_diag_data(fit)
    records = [
        {"panel": s.name, "index": i, "x": float(x), "y": float(y)}
        for s in data
        for i, (x, y) in enumerate(zip(s.x, s.y), start=1)
    ]
    return records, figures.scatter_spec(data)


def cmd_diag(args) -> None:
    _need_model(args)
    fit = _fit(args.data, args.formula)
    records, spec = _diag_data(args, fit)
    out = Path(args.out_dir)
    stem = args.kind
    _emit(_records_csv(records), str(out / f"{stem}.csv"))
    _emit(_records_json(records), str(out / f"{stem}.json"))
    _emit(render_svg(spec), str(out / f"{stem}.svg"))


def cmd_simulate(args) -> None:
    try:
        scenario = load_scenario(args.config)
        with open(args.config, encoding="utf-8") as fh:
            has_seed = "seed" in json.load(fh)
    except (ValueError, TypeError, json.JSONDecodeError) as exc:
        raise ModelFreeError(f"invalid scenario config: {exc}") from exc
    if args.seed is not None:
        scenario = SimScenario.from_dict({**scenario.to_dict(), "seed": args.seed})
    elif not has_seed:
        print("note: no --seed given; using seed 0", file=sys.stderr)
    rows = coverage_experiment(scenario, args.threads)
    text = coverage_to_csv(rows)
    if args.out_dir is None:
        _emit(text, None)
        return
    out = Path(args.out_dir)
    _emit(text, str(out / "coverage.csv"))
    if any(r.B for r in rows):
        _emit(render_svg(figures.coverage_spec(rows, scenario.level)), str(out / "coverage.svg"))


# -- parser -----------------------------------------------------------------------


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _nonneg_int(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be a non-negative integer")
    return v


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("must be an integer in [0, 2**64)")
    return v


def _level(text: str) -> float:
    v = float(text)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError("must lie in (0, 1)")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=_seed, help="RNG seed for every randomized step (default 0, with a notice)")
    common.add_argument(
        "--threads", type=_positive_int,
        help="worker threads; results do not depend on it (default: $MODELFREE_THREADS or 1)",
    )

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--data", help="CSV file with a header row")
    model.add_argument("--formula", help='model formula, e.g. "y ~ x1 + x2" or "y ~ ."')
    model.add_argument("--output", "-o", help="write to this file instead of stdout")

    variance = argparse.ArgumentParser(add_help=False)
    g = variance.add_argument_group("variance requests (classical and sandwich are always computed)")
    g.add_argument("--boot-emp", dest="boot_emp", nargs="?", const="", metavar="SPEC",
                   help="empirical m-out-of-n bootstrap; m defaults to n. " + _SPEC_HELP)
    g.add_argument("--boot-mul", dest="boot_mul", nargs="?", const="", metavar="SPEC",
                   help="multiplier bootstrap; weights default to rademacher")
    g.add_argument("--boot-res", dest="boot_res", nargs="?", const="", metavar="SPEC", help="residual bootstrap")
    g.add_argument("--subsample", nargs="?", const="", metavar="SPEC",
                   help="subsampling without replacement; m defaults to floor(n^0.7) and must be below n")

    level = argparse.ArgumentParser(add_help=False)
    level.add_argument("--level", type=_level, default=0.95, help="confidence level (default 0.95)")

    parser = _Parser(prog="modelfree", description="Model-free inference for ordinary least squares.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    p = sub.add_parser("fit", parents=[model, variance, common], help="estimates with a standard-error column per method")
    p.set_defaults(func=cmd_fit, parser=p)

    p = sub.add_parser("summary", parents=[model, variance, level, common],
                       help="assumption-annotated report with the global chi-squared test")
    p.add_argument("--job", help="JSON job config (see README); replaces --data/--formula/variance flags")
    p.set_defaults(func=cmd_summary, parser=p)

    p = sub.add_parser("confint", parents=[model, variance, level, common], help="tidy confidence-interval table")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_confint, parser=p)

    p = sub.add_parser("waldtest", parents=[model, variance, common], help="Wald test of R beta = r")
    p.add_argument("--R", required=True, help="restriction matrix file (k rows, d columns, optional term-name header)")
    p.add_argument("--r", help="right-hand side file (k values; default zeros)")
    p.add_argument("--var-type", default=Method.SANDWICH.value, help="covariance to use (default sandwich)")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=cmd_waldtest, parser=p)

    p = sub.add_parser("diag", parents=[model, variance, level, common], help="diagnostic datasets and SVG plots")
    p.add_argument("--kind", required=True, choices=DIAG_KINDS)
    p.add_argument("--focal", help="coefficient (focal-slope), regressor (focal-reweight) or term (qq)")
    p.add_argument("--out-dir", required=True, help="directory for <kind>.csv, <kind>.json and <kind>.svg")
    p.add_argument("--B", type=_nonneg_int, default=dg.DEFAULT_DIAG_B,
                   help="bootstrap curves for reweighting plots (default %(default)s; 0 disables)")
    p.add_argument("--grid", choices=("deciles", "uniform"), default="deciles", help="reweighting centers")
    p.add_argument("--K", type=_positive_int, default=10, help="number of centers for --grid uniform")
    p.add_argument("--gamma", type=float, help="kernel bandwidth (default: sample sd of the regressor)")
    p.set_defaults(func=cmd_diag, parser=p)

    p = sub.add_parser("simulate", parents=[common], help="Monte-Carlo coverage experiment")
    p.add_argument("--config", required=True, help="JSON scenario file (see README)")
    p.add_argument("--out-dir", help="write coverage.csv and coverage.svg here (default: CSV to stdout)")
    p.set_defaults(func=cmd_simulate, parser=p)
    return parser


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = None
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.error("a subcommand is required")
        args.func(args)
    except UsageError as exc:
        if not exc.help_shown:
            getattr(args, "parser", parser).print_help(sys.stderr)
        print(f"modelfree: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    except (ValueError, OSError) as exc:
        print(f"modelfree: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
