"""tensorarma: low-Tucker-rank VAR(infinity) / VARMA modeling for high-dimensional time series."""

__version__ = "0.1.0"

from .basis import (
    DEFAULT_RHO_BAR,
    DecayParams,
    canonicalize,
    gamma_derivative_columns,
    lag_weight,
    loading_matrix,
    stacked_loading_matrix,
)
from .estimators import (
    FitConfig,
    FitReport,
    cross_validate_lambda,
    fit_rank_constrained,
    fit_sltr,
    initial_var_estimator,
    initialize,
    lag_features,
    soft_threshold,
    squared_loss,
)
from .forecast import ForecastReport, one_step_forecast, rolling_evaluate, standardize
from .model import (
    VarInfModel,
    VarmaSpec,
    ar_coefficient,
    ar_stack,
    build_dgp,
    coefficient_distance,
    load_model,
    ma_weights,
    save_model,
    simulate,
    stationarity_margin,
    varma_to_var_inf,
)
from .selection import SelectionReport, default_tau, select_model, select_orders, select_ranks
from .tensor_ops import TuckerFactors, hosvd, matricize, mode_product, tensorize

__all__ = [
    "DEFAULT_RHO_BAR",
    "DecayParams",
    "FitConfig",
    "FitReport",
    "ForecastReport",
    "SelectionReport",
    "TuckerFactors",
    "VarInfModel",
    "VarmaSpec",
    "ar_coefficient",
    "ar_stack",
    "build_dgp",
    "canonicalize",
    "coefficient_distance",
    "cross_validate_lambda",
    "default_tau",
    "fit_rank_constrained",
    "fit_sltr",
    "gamma_derivative_columns",
    "hosvd",
    "initial_var_estimator",
    "initialize",
    "lag_features",
    "lag_weight",
    "load_model",
    "loading_matrix",
    "ma_weights",
    "matricize",
    "mode_product",
    "one_step_forecast",
    "rolling_evaluate",
    "save_model",
    "select_model",
    "select_orders",
    "select_ranks",
    "simulate",
    "soft_threshold",
    "squared_loss",
    "stacked_loading_matrix",
    "standardize",
    "stationarity_margin",
    "tensorize",
    "varma_to_var_inf",
]
