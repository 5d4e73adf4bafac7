"""Rolling one-step-ahead forecasting and evaluation metrics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .estimators import FitConfig, fit_rank_constrained, fit_sltr, initialize
from .model import VarInfModel, ar_stack
from .tensor_ops import matricize


@dataclass
class ForecastReport:
    forecasts: np.ndarray  # T_eval x N
    errors: np.ndarray     # actual - forecast, T_eval x N
    msfe: float
    mafe: float
    origins: list[int]     # 1-based time index of the last observation used
    refit: str

    def to_dict(self) -> dict:
        return {
            "type": "forecast_report",
            "msfe": self.msfe,
            "mafe": self.mafe,
            "refit": self.refit,
            "origins": self.origins,
            "forecasts": self.forecasts.tolist(),
            "errors": self.errors.tolist(),
        }


def standardize(data: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-column z-scoring with the population (T) divisor.

    Returns (standardized, means, scales); raises on zero-variance columns.
    """
    y = np.asarray(data, dtype=float)
    if y.ndim != 2 or y.shape[0] < 2:
        raise ValueError("need a T x N array with T >= 2")
    means = y.mean(axis=0)
    scales = y.std(axis=0)  # population convention
    if np.any(scales == 0):
        bad = np.flatnonzero(scales == 0).tolist()
        raise ValueError(f"zero-variance columns {bad} cannot be standardized")
    return (y - means) / scales, means, scales


def unstandardize(data: np.ndarray, means: np.ndarray, scales: np.ndarray) -> np.ndarray:
    return np.asarray(data) * scales + means


def forecast_horizon(model: VarInfModel, t_hist: int, tol: float = 1e-12) -> int:
    """Smallest lag count whose tail contribution bound falls below ``tol``."""
    p = model.params.p
    rho = model.params.max_modulus()
    norm_sum = sum(np.linalg.norm(model.g[:, :, k], 2)
                   for k in range(p, model.params.d))
    if rho == 0.0 or norm_sum == 0.0:
        return min(t_hist, max(p, 1))
    j = p + int(np.ceil(np.log(tol * (1 - rho) / norm_sum) / np.log(rho)))
    return min(t_hist, max(j, p, 1))


def one_step_forecast(model: VarInfModel, history: np.ndarray) -> np.ndarray:
    """y_hat_{t+1} = sum_{j=1}^{t} A_j y_{t+1-j} with zero pre-sample values;
    the lag sum is cut once the decay bound drops below 1e-12."""
    y = np.atleast_2d(np.asarray(history, dtype=float))
    t_hist = y.shape[0]
    if t_hist < 1:
        raise ValueError("history must contain at least one observation")
    if model.params.d == 0:
        return np.zeros(model.n_series)
    j_max = forecast_horizon(model, t_hist)
    a1 = matricize(ar_stack(model, j_max), 1)  # N x (N * j_max)
    recent = y[::-1][:j_max]                   # y_t, y_{t-1}, ...
    return a1[:, : recent.size] @ recent.ravel()


def _fit_for_origin(train, method, cfg, init_kind):
    init = initialize(train, cfg.ranks, cfg.orders, kind=init_kind)
    if method == "sltr":
        return fit_sltr(train, cfg, init).model
    return fit_rank_constrained(train, cfg, init).model


def rolling_evaluate(data: np.ndarray, cfg: FitConfig | None = None,
                     holdout_fraction: float = 0.1, refit: str = "each_origin",
                     method: str = "rank", model: VarInfModel | None = None,
                     init_kind: str | None = None,
                     selection_kwargs: dict | None = None) -> ForecastReport:
    """Rolling one-step-ahead evaluation over the trailing holdout block.

    Ranks and orders are fixed once: from ``cfg`` when given, from ``model``
    when forecasting a saved fit, otherwise selected on the initial training
    window.  With ``refit="each_origin"`` parameters are refitted on all data
    up to each origin; ``refit="never"`` reuses the initial fit.  MSFE and
    MAFE are per-element means over origins and series.
    """
    y = np.asarray(data, dtype=float)
    t_len, n = y.shape
    if not 0 < holdout_fraction <= 0.5:
        raise ValueError("holdout_fraction must lie in (0, 0.5]")
    if refit not in ("never", "each_origin"):
        raise ValueError("refit must be 'never' or 'each_origin'")
    n_eval = int(np.floor(holdout_fraction * t_len))
    if n_eval < 5:
        raise ValueError(f"holdout yields {n_eval} origins; need at least 5")
    t0 = t_len - n_eval
    if init_kind is None:
        init_kind = "group_lasso" if method == "sltr" else "nuclear"
    if cfg is None and model is None:
        from .selection import select_model

        sel = select_model(y[:t0], estimator=method, init_kind=init_kind,
                           **(selection_kwargs or {}))
        cfg = FitConfig(ranks=sel.ranks, orders=sel.orders)

    fitted = model
    if fitted is None:
        fitted = _fit_for_origin(y[:t0], method, cfg, init_kind)
    forecasts = np.empty((n_eval, n))
    origins = []
    for i, origin in enumerate(range(t0, t_len)):
        if refit == "each_origin" and model is None and origin > t0:
            fitted = _fit_for_origin(y[:origin], method, cfg, init_kind)
        forecasts[i] = one_step_forecast(fitted, y[:origin])
        origins.append(origin)
    errors = y[t0:] - forecasts
    msfe = float(np.mean(errors**2))
    mafe = float(np.mean(np.abs(errors)))
    return ForecastReport(forecasts=forecasts, errors=errors, msfe=msfe,
                          mafe=mafe, origins=origins, refit=refit)
