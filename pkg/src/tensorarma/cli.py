"""Command-line interface: simulate, fit, select, forecast, evaluate.

Every command writes a manifest JSON echoing the fully resolved configuration
and seed next to its outputs (timestamps live only there, keeping data
artifacts byte-identical across reruns).  Exit codes: 0 success, 1 usage or
I/O error, 2 non-convergence (artifacts still written), 3 numerical failure.
"""
from __future__ import annotations

import argparse
import datetime
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .estimators import FitConfig, cross_validate_lambda, fit_rank_constrained, fit_sltr, initialize
from .forecast import rolling_evaluate, standardize
from .model import (VarInfModel, build_dgp, load_model, save_document, save_model,
                    simulate, varma_to_var_inf)
from .selection import DEFAULT_ORDER_CAPS, select_model

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NONCONVERGED = 2
EXIT_NUMERICAL = 3

CONFIG_ENV_VAR = "TENSORARMA_CONFIG"


class CliError(Exception):
    def __init__(self, message, code=EXIT_USAGE):
        super().__init__(message)
        self.code = code


def _spawn_rng(seed: int, stream: int) -> np.random.Generator:
    """Independent generator for a named stream; reproducible under one seed."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream,)))


def write_csv(path, data: np.ndarray) -> None:
    data = np.atleast_2d(np.asarray(data, dtype=float))
    header = ",".join(f"s{i + 1}" for i in range(data.shape[1]))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for row in data:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def read_csv(path) -> np.ndarray:
    rows = []
    width = None
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        if not header.strip():
            raise CliError(f"{path}: empty file")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            if width is None:
                width = len(cells)
            elif len(cells) != width:
                raise CliError(f"{path}:{lineno}: expected {width} columns, "
                               f"got {len(cells)}")
            try:
                rows.append([float(c) for c in cells])
            except ValueError as exc:
                raise CliError(f"{path}:{lineno}: non-numeric cell ({exc})") from None
    if not rows:
        raise CliError(f"{path}: no data rows")
    return np.array(rows)


def _write_manifest(out_path: Path, command: str, resolved: dict) -> None:
    config = {k: v for k, v in resolved.items()
              if k != "func" and isinstance(v, (str, int, float, bool, type(None)))}
    manifest = {
        "command": command,
        "config": config,
        "written_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    save_document(manifest, out_path.with_suffix(out_path.suffix + ".manifest.json"))


def _parse_floats(text: str) -> list[float]:
    if not text:
        return []
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise CliError(f"cannot parse float list {text!r}") from None


def _parse_pairs(text: str) -> list[tuple[float, float]]:
    vals = _parse_floats(text)
    if len(vals) % 2:
        raise CliError("pairs must come as gamma,theta,gamma,theta,...")
    return list(zip(vals[0::2], vals[1::2]))


def _parse_ints(text: str, n: int, what: str) -> tuple[int, ...]:
    parts = text.split(",")
    if len(parts) != n:
        raise CliError(f"{what} needs {n} comma-separated integers, got {text!r}")
    try:
        return tuple(int(v) for v in parts)
    except ValueError:
        raise CliError(f"{what}: non-integer in {text!r}") from None


def cmd_simulate(args) -> int:
    lambdas = _parse_floats(args.decay_values)
    pairs = _parse_pairs(args.pairs)
    if not lambdas and not pairs:
        raise CliError("the DGP needs at least one --lambda or --pairs value")
    spec = build_dgp(kind=args.dgp, n_series=args.n, lambdas=lambdas, pairs=pairs,
                     delta=args.delta, sparsity=args.sparsity,
                     seed=_spawn_rng(args.seed, 0))
    data = simulate(spec, args.t, burn_in=args.burn_in, seed=_spawn_rng(args.seed, 1))
    out = Path(args.out)
    write_csv(out, data)
    model_out = Path(args.model_out) if args.model_out else out.with_suffix(".model.json")
    save_model(spec, model_out)
    _write_manifest(out, "simulate", vars(args))
    print(f"wrote {out} ({data.shape[0]} x {data.shape[1]}) and {model_out}")
    return EXIT_OK


def _fit_config_from_args(args, ranks, orders) -> FitConfig:
    return FitConfig(
        ranks=ranks,
        orders=orders,
        max_outer_iters=args.max_iters,
        tol_rel_loss=args.tol,
        lambda_l1=getattr(args, "lambda_l1", 0.0) or 0.0,
        seed=args.seed,
    )


def cmd_fit(args) -> int:
    data = read_csv(args.input)
    ranks = _parse_ints(args.ranks, 2, "--ranks")
    orders = _parse_ints(args.orders, 3, "--orders")
    if args.standardize:
        std_data, means, scales = standardize(data)
    else:
        std_data, means, scales = data, np.zeros(data.shape[1]), np.ones(data.shape[1])
    cfg = _fit_config_from_args(args, ranks, orders)
    init_kind = "group_lasso" if args.method == "sltr" else "nuclear"
    try:
        init = initialize(std_data, ranks, orders, kind=init_kind)
        if args.method == "sltr":
            if args.lambda_grid:
                grid = _parse_floats(args.lambda_grid)
                lam = cross_validate_lambda(std_data, cfg, grid)
                cfg = cfg.replace(lambda_l1=lam)
            report = fit_sltr(std_data, cfg, init)
        else:
            report = fit_rank_constrained(std_data, cfg, init)
    except (np.linalg.LinAlgError, ArithmeticError) as exc:
        raise CliError(f"numerical failure during fitting: {exc}",
                       code=EXIT_NUMERICAL) from exc
    model = report.model
    model.standardization = (means, scales)
    out_model = Path(args.out_model)
    save_model(model, out_model)
    out_report = Path(args.out_report) if args.out_report \
        else out_model.with_suffix(".report.json")
    save_document(report.to_dict(), out_report)
    _write_manifest(out_model, "fit", vars(args))
    print(f"converged={report.converged} iters={report.n_iters} "
          f"final_loss={report.final_loss:.6g}")
    print(f"wrote {out_model} and {out_report}")
    return EXIT_OK if report.converged else EXIT_NONCONVERGED


def cmd_select(args) -> int:
    data = read_csv(args.input)
    std_data, _, _ = standardize(data) if args.standardize else (data, None, None)
    caps = _parse_ints(args.order_caps, 3, "--order-caps")
    report = select_model(std_data, tau=args.tau, c=args.c, estimator=args.method,
                          order_caps=caps, threads=args.threads,
                          select_orders_too=not args.ranks_only)
    print(f"selected ranks: {report.ranks}")
    for mode, table in sorted(report.ratio_tables.items()):
        cells = "  ".join(f"{v:.4f}" for v in table)
        print(f"ridge ratios mode {mode}: {cells}")
    if report.orders is not None:
        print(f"selected orders (p, r, s): {report.orders}")
        print("BIC table:")
        for orders, value in sorted(report.bic_table.items()):
            print(f"  (p,r,s)={orders}: {value:.6f}")
    out = Path(args.out)
    save_document(report.to_dict(), out)
    _write_manifest(out, "select", vars(args))
    return EXIT_OK


def _forecast_common(args, refit: str) -> int:
    data = read_csv(args.input)
    model = load_model(args.model) if args.model else None
    if model is not None and not isinstance(model, VarInfModel):
        # a ground-truth VARMA document: forecast with its VAR form
        try:
            _, model = varma_to_var_inf(model, 1)
        except ValueError as exc:
            raise CliError(f"cannot forecast from {args.model}: {exc}") from exc
    cfg = None
    if model is None:
        if not (args.ranks and args.orders):
            raise CliError("need either --model or both --ranks and --orders")
        cfg = _fit_config_from_args(args, _parse_ints(args.ranks, 2, "--ranks"),
                                    _parse_ints(args.orders, 3, "--orders"))
    if model is not None and model.standardization is not None:
        means, scales = model.standardization
        work = (data - means) / scales
    elif args.standardize:
        work, means, scales = standardize(data)
    else:
        work, means, scales = data, np.zeros(data.shape[1]), np.ones(data.shape[1])
    try:
        report = rolling_evaluate(work, cfg=cfg, holdout_fraction=args.holdout,
                                  refit=refit, method=args.method, model=model)
    except (np.linalg.LinAlgError, ArithmeticError) as exc:
        raise CliError(f"numerical failure during evaluation: {exc}",
                       code=EXIT_NUMERICAL) from exc
    out = Path(args.out)
    save_document(report.to_dict(), out)
    errors_csv = out.with_suffix(".errors.csv")
    write_csv(errors_csv, report.errors)
    _write_manifest(out, "forecast" if refit == "never" else "evaluate", vars(args))
    print(f"msfe={report.msfe:.6g} mafe={report.mafe:.6g} origins={len(report.origins)}")
    print(f"wrote {out} and {errors_csv}")
    return EXIT_OK


def cmd_forecast(args) -> int:
    return _forecast_common(args, refit="never")


def cmd_evaluate(args) -> int:
    return _forecast_common(args, refit=args.refit)


def _env_defaults() -> dict:
    path = os.environ.get(CONFIG_ENV_VAR)
    if not path:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            loaded = json.load(fh)
    except OSError as exc:
        raise CliError(f"cannot read config file {path}: {exc}") from exc
    if not isinstance(loaded, dict):
        raise CliError(f"config file {path} must hold a JSON object")
    return loaded


def build_parser(defaults: dict | None = None) -> argparse.ArgumentParser:
    defaults = defaults or {}
    parser = argparse.ArgumentParser(
        prog="tensorarma",
        description="Low-Tucker-rank VAR(infinity) modeling: simulate, fit, "
                    "select, forecast, evaluate.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--seed", type=int, default=defaults.get("seed", 0),
                       help="single 64-bit seed; all randomness derives from it")
        p.add_argument("--threads", type=int,
                       default=defaults.get("threads", os.cpu_count() or 1),
                       help="worker cap for parallelizable stages")
        p.add_argument("--log-level", default=defaults.get("log_level", "info"))

    p_sim = sub.add_parser("simulate", help="simulate a benchmark DGP to CSV")
    p_sim.add_argument("--dgp", type=int, choices=(1, 2), required=True)
    p_sim.add_argument("--n", type=int, required=True, help="number of series")
    p_sim.add_argument("--t", type=int, required=True, help="sample length")
    p_sim.add_argument("--lambda", dest="decay_values", default="",
                       help="comma-separated real decay values")
    p_sim.add_argument("--pairs", default="",
                       help="gamma,theta,... for damped-sinusoid pairs")
    p_sim.add_argument("--delta", type=float, default=0.5,
                       help="AR eigenvalue for DGP 2")
    p_sim.add_argument("--sparsity", type=int, default=None,
                       help="number of active rows in the sparse design")
    p_sim.add_argument("--burn-in", type=int, default=500)
    p_sim.add_argument("--out", required=True)
    p_sim.add_argument("--model-out", default=None)
    add_common(p_sim)
    p_sim.set_defaults(func=cmd_simulate)

    p_fit = sub.add_parser("fit", help="fit a model to a CSV series")
    p_fit.add_argument("--input", required=True)
    p_fit.add_argument("--method", choices=("rank", "sltr"), default="rank")
    p_fit.add_argument("--ranks", required=True, help="R1,R2")
    p_fit.add_argument("--orders", required=True, help="p,r,s")
    p_fit.add_argument("--lambda-l1", dest="lambda_l1", type=float, default=0.0)
    p_fit.add_argument("--lambda-grid", default="",
                       help="comma-separated grid; triggers cross-validation")
    p_fit.add_argument("--max-iters", type=int, default=200)
    p_fit.add_argument("--tol", type=float, default=1e-6)
    p_fit.add_argument("--no-standardize", dest="standardize", action="store_false")
    p_fit.add_argument("--out-model", required=True)
    p_fit.add_argument("--out-report", default=None)
    add_common(p_fit)
    p_fit.set_defaults(func=cmd_fit, standardize=True)

    p_sel = sub.add_parser("select", help="select ranks and model orders")
    p_sel.add_argument("--input", required=True)
    p_sel.add_argument("--method", choices=("rank", "sltr"), default="rank")
    p_sel.add_argument("--tau", type=float, default=None)
    p_sel.add_argument("--c", type=float, default=0.1)
    p_sel.add_argument("--order-caps", default=",".join(map(str, DEFAULT_ORDER_CAPS)))
    p_sel.add_argument("--ranks-only", action="store_true")
    p_sel.add_argument("--no-standardize", dest="standardize", action="store_false")
    p_sel.add_argument("--out", required=True)
    add_common(p_sel)
    p_sel.set_defaults(func=cmd_select, standardize=True)

    def add_eval_args(p):
        p.add_argument("--input", required=True)
        p.add_argument("--model", default=None, help="saved model file")
        p.add_argument("--method", choices=("rank", "sltr"), default="rank")
        p.add_argument("--ranks", default=None)
        p.add_argument("--orders", default=None)
        p.add_argument("--max-iters", type=int, default=200)
        p.add_argument("--tol", type=float, default=1e-6)
        p.add_argument("--holdout", type=float, default=0.1)
        p.add_argument("--no-standardize", dest="standardize", action="store_false")
        p.add_argument("--out", required=True)
        add_common(p)

    p_fc = sub.add_parser("forecast", help="rolling forecasts without refitting")
    add_eval_args(p_fc)
    p_fc.set_defaults(func=cmd_forecast, standardize=True)

    p_ev = sub.add_parser("evaluate", help="rolling forecast evaluation")
    add_eval_args(p_ev)
    p_ev.add_argument("--refit", choices=("never", "each_origin"),
                      default="each_origin")
    p_ev.set_defaults(func=cmd_evaluate, standardize=True)
    return parser


def main(argv=None) -> int:
    try:
        parser = build_parser(_env_defaults())
        args = parser.parse_args(argv)
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
