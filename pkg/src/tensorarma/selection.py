"""Ridge-ratio rank selection and BIC order selection."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .estimators import FitConfig, fit_rank_constrained, fit_sltr, initial_var_estimator, initialize
from .tensor_ops import matricize

DEFAULT_C_TAU = 0.5
DEFAULT_BIC_C = 0.1
DEFAULT_ORDER_CAPS = (2, 2, 1)  # p_max, r_max, s_max


@dataclass
class SelectionReport:
    ranks: tuple[int, int]
    orders: tuple[int, int, int] | None
    ratio_tables: dict
    bic_table: dict
    tau: float
    c: float

    def to_dict(self) -> dict:
        return {
            "type": "selection_report",
            "ranks": list(self.ranks),
            "orders": list(self.orders) if self.orders else None,
            "ratio_tables": {str(k): list(map(float, v))
                             for k, v in self.ratio_tables.items()},
            "bic_table": {str(k): float(v) for k, v in self.bic_table.items()},
            "tau": self.tau,
            "c": self.c,
        }


def default_tau(t_len: int, n_series: int, init_kind: str = "nuclear",
                c_tau: float = DEFAULT_C_TAU) -> float:
    """tau = c_tau * sqrt(N * P / T) with P = ceil(T^(1/3)), matching the
    initial estimator's error-rate order.  The same constant is used for both
    initial-estimator kinds."""
    del init_kind
    if t_len <= n_series:
        raise ValueError("need T > N for a meaningful ridge ratio")
    trunc_lag = int(np.ceil(t_len ** (1.0 / 3.0)))
    return c_tau * np.sqrt(n_series * trunc_lag / t_len)


def ridge_ratio_table(init_estimate: np.ndarray, tau: float, mode: int) -> np.ndarray:
    """(sigma_{j+1} + tau) / (sigma_j + tau) for j = 1..N-1 on one unfolding."""
    sigma = np.linalg.svd(matricize(init_estimate, mode), compute_uv=False)
    n = init_estimate.shape[0]
    sigma = np.concatenate([sigma, np.zeros(max(0, n - len(sigma)))])
    return (sigma[1:n] + tau) / (sigma[:n - 1] + tau)


def select_ranks(init_estimate: np.ndarray, tau: float) -> tuple[int, int]:
    """Ridge-ratio rank selector on both unfoldings; ties favor the smaller rank."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    init_estimate = np.asarray(init_estimate, dtype=float)
    chosen = []
    for mode in (1, 2):
        sigma = np.linalg.svd(matricize(init_estimate, mode), compute_uv=False)
        if np.all(sigma < 1e-14):
            raise ValueError("the initial estimate is numerically zero; "
                             "cannot select ranks")
        ratios = ridge_ratio_table(init_estimate, tau, mode)
        chosen.append(int(np.argmin(ratios)) + 1)  # argmin takes the first minimum
    return chosen[0], chosen[1]


def model_dim(ranks: tuple[int, int], d: int, n_series: int, estimator: str) -> float:
    """Effective parameter count entering the BIC penalty."""
    r1, r2 = ranks
    if estimator == "rank":
        return r1 * r2 * d + (r1 + r2) * n_series
    if estimator == "sltr":
        return r1 * r2 * d + r1 * np.log(n_series * r1) + r2 * np.log(n_series * r2)
    raise ValueError(f"unknown estimator {estimator!r}")


def bic_value(mean_rss: float, ranks, d, n_series, t_len, c, estimator) -> float:
    return float(np.log(mean_rss) + c * model_dim(ranks, d, n_series, estimator)
                 * np.log(t_len) / t_len)


def order_grid(p_max: int, r_max: int, s_max: int) -> list[tuple[int, int, int]]:
    grid = [(p, r, s)
            for p in range(p_max + 1)
            for r in range(r_max + 1)
            for s in range(s_max + 1)
            if p + r + 2 * s > 0]
    return grid


def _fit_one(data, ranks, orders, estimator, fit_kwargs, init_kind,
             init_estimate=None):
    cfg = FitConfig(ranks=ranks, orders=orders, **fit_kwargs)
    init = initialize(data, ranks, orders, kind=init_kind,
                      init_estimate=init_estimate)
    if estimator == "sltr":
        report = fit_sltr(data, cfg, init)
    else:
        report = fit_rank_constrained(data, cfg, init)
    return report


def select_orders(data: np.ndarray, ranks: tuple[int, int], grid=None,
                  c: float = DEFAULT_BIC_C, estimator: str = "rank",
                  threads: int = 1, fit_kwargs: dict | None = None,
                  init_kind: str | None = None,
                  bic_table: dict | None = None) -> tuple[int, int, int]:
    """BIC order selection over the (p, r, s) grid at fixed ranks.

    Every grid point is fitted; ties go to the smallest effective dimension.
    Pass ``bic_table`` (a dict) to capture the per-point criterion values.
    """
    y = np.asarray(data, dtype=float)
    t_len, n = y.shape
    if grid is None:
        grid = order_grid(*DEFAULT_ORDER_CAPS)
    grid = list(grid)
    if not grid:
        raise ValueError("the order grid is empty")
    fit_kwargs = fit_kwargs or {}
    if init_kind is None:
        init_kind = "group_lasso" if estimator == "sltr" else "nuclear"
    # one truncated-VAR estimate shared by every grid point
    d_max = max(p + r + 2 * s for p, r, s in grid)
    shared_lag = min(max(int(np.ceil(t_len ** (1.0 / 3.0))), d_max + 1), t_len - 1)
    shared_estimate = initial_var_estimator(y, kind=init_kind, trunc_lag=shared_lag)

    def evaluate(orders):
        report = _fit_one(y, ranks, orders, estimator, fit_kwargs, init_kind,
                          init_estimate=shared_estimate)
        mean_rss = report.final_loss / t_len
        d = orders[0] + orders[1] + 2 * orders[2]
        if estimator == "sltr":
            # SLTR trajectories track the penalized objective; score the fit loss.
            from .estimators import squared_loss
            mean_rss = squared_loss(y, report.model.params, report.model.g) / t_len
        return bic_value(mean_rss, ranks, d, n, t_len, c, estimator)

    results: dict[tuple, float] = {}
    failures: list[str] = []
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {tuple(o): pool.submit(evaluate, tuple(o)) for o in grid}
        for orders, fut in futures.items():
            try:
                results[orders] = fut.result()
            except Exception as exc:  # noqa: BLE001 - aggregated below
                failures.append(f"{orders}: {exc}")
    else:
        for orders in grid:
            try:
                results[tuple(orders)] = evaluate(tuple(orders))
            except Exception as exc:  # noqa: BLE001
                failures.append(f"{tuple(orders)}: {exc}")
    if not results:
        raise RuntimeError("all order-grid fits failed: " + "; ".join(failures))
    if bic_table is not None:
        bic_table.update(results)

    def sort_key(item):
        orders, value = item
        d = orders[0] + orders[1] + 2 * orders[2]
        return (value, d, orders)

    return min(results.items(), key=sort_key)[0]


def select_model(data: np.ndarray, tau: float | None = None, c: float = DEFAULT_BIC_C,
                 estimator: str = "rank", order_caps=DEFAULT_ORDER_CAPS,
                 init_kind: str | None = None, init_reg: float | None = None,
                 threads: int = 1, fit_kwargs: dict | None = None,
                 select_orders_too: bool = True) -> SelectionReport:
    """Two-stage selection: ridge-ratio ranks from an initial truncated-VAR
    estimate, then BIC over the order grid with those ranks."""
    y = np.asarray(data, dtype=float)
    t_len, n = y.shape
    if init_kind is None:
        init_kind = "group_lasso" if estimator == "sltr" else "nuclear"
    if tau is None:
        tau = default_tau(t_len, n, init_kind)
    a_init = initial_var_estimator(y, kind=init_kind, reg=init_reg)
    ranks = select_ranks(a_init, tau)
    ratio_tables = {mode: ridge_ratio_table(a_init, tau, mode) for mode in (1, 2)}
    bic_table: dict = {}
    orders = None
    if select_orders_too:
        orders = select_orders(y, ranks, grid=order_grid(*order_caps), c=c,
                               estimator=estimator, threads=threads,
                               fit_kwargs=fit_kwargs, init_kind=init_kind,
                               bic_table=bic_table)
    return SelectionReport(ranks=ranks, orders=orders, ratio_tables=ratio_tables,
                           bic_table=bic_table, tau=tau, c=c)
