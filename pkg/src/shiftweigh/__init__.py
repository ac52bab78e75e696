"""Bias-corrected mean estimation under covariate shift.

The package reweights a labelled training sample so that its feature
distribution matches an unlabelled deployment sample, estimates the
deployment-side mean outcome, and reports finite-sample confidence
bounds driven by the declared regularity of the regression function.
"""

from .bounds import (
    BoundInputs,
    BoundValue,
    InRkhs,
    LogApprox,
    PluginPoly,
    PolyApprox,
    bound_in_rkhs,
    bound_log_decay,
    bound_plugin_poly,
    bound_poly_decay,
    emp_discrepancy_bound,
    evaluate_bound,
    hoeffding_term,
    rate_exponent_kmm,
    rate_exponent_plugin,
)
from .errors import DomainError, InputError, NumericalError
from .estimators import (
    Dataset,
    EstimateReport,
    RankingResult,
    kde_ratio_estimate,
    kmm_estimate,
    oracle_estimate,
    plugin_estimate,
    rank_classifiers,
)
from .kernels import KernelSpec, cross_apply, pair_sum
from .kmm import QpProblem, Weights, assemble_qp, objective_norm, solve_kmm
from .scenarios import (
    ComparisonResult,
    CoverageResult,
    EstimatorConfig,
    RateFit,
    ShiftScenario,
    SweepResult,
    TrialRecord,
    builtin_scenarios,
    compare_estimators,
    fit_rate,
    get_scenario,
    measure_coverage,
    population_consistency_check,
    run_trial,
    sweep_rates,
    wilson_interval,
)

__all__ = [
    "BoundInputs",
    "BoundValue",
    "ComparisonResult",
    "CoverageResult",
    "Dataset",
    "DomainError",
    "EstimateReport",
    "EstimatorConfig",
    "InRkhs",
    "InputError",
    "KernelSpec",
    "LogApprox",
    "NumericalError",
    "PluginPoly",
    "PolyApprox",
    "QpProblem",
    "RankingResult",
    "RateFit",
    "ShiftScenario",
    "SweepResult",
    "TrialRecord",
    "Weights",
    "assemble_qp",
    "bound_in_rkhs",
    "bound_log_decay",
    "bound_plugin_poly",
    "bound_poly_decay",
    "builtin_scenarios",
    "compare_estimators",
    "cross_apply",
    "emp_discrepancy_bound",
    "evaluate_bound",
    "fit_rate",
    "get_scenario",
    "hoeffding_term",
    "kde_ratio_estimate",
    "kmm_estimate",
    "measure_coverage",
    "objective_norm",
    "oracle_estimate",
    "pair_sum",
    "plugin_estimate",
    "population_consistency_check",
    "rank_classifiers",
    "rate_exponent_kmm",
    "rate_exponent_plugin",
    "run_trial",
    "solve_kmm",
    "sweep_rates",
    "wilson_interval",
]

__version__ = "0.1.0"
