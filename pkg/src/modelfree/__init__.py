"""Model-free inference for ordinary least squares."""

from .diagnostics import (
    all_grids,
    bootstrap_reweighted_curves,
    ci_width_comparison,
    focal_reweighting_variable_data,
    focal_slope_data,
    lm_diag_data,
    nonlinearity_detection_data,
    qq_data,
    reweighted_estimates,
)
from .errors import ModelFreeError
from .formula import DesignMatrix, ModelSpec, build_design, parse_formula, render_formula
from .inference import CoefRow, WaldResult, coef_table, render_print, render_summary, wald_test
from .ols import FittedOls, fit_ols, fit_wls, leverage_and_cooks
from .plotkit import Layer, PlotPanel, PlotSpec, render_svg
from .simharness import CoverageRow, SimScenario, coverage_experiment, projection_target, simulate_dataset
from .tabular import Dataset, read_csv, write_csv
from .variance import (
    EstimatorConfig,
    Method,
    VarianceEstimate,
    WeightsType,
    comp_var,
    var_classical,
    var_empirical_boot,
    var_multiplier_boot,
    var_residual_boot,
    var_sandwich,
    var_subsampling,
)

__version__ = "0.1.0"
