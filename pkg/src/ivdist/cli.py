"""Command-line surface: estimation on user data, assignment dry runs, and
Monte Carlo studies.

Human-readable summaries go to standard output; machine artifacts go to
files.  Every JSON artifact carries a ``meta`` block (version, seed, and a
hash of the resolved configuration) so a run can be reproduced exactly.
Exit codes: 0 success, 1 runtime error, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import os
import secrets
import sys

import numpy as np
import pandas as pd

from . import __version__
from .data import ThresholdGrid, compute_stratum_stats, default_threshold_grid, load_sample
from .estimator import (
    DEFAULT_FIRST_STAGE_FLOOR,
    estimate_ldte,
    estimate_lpte,
)
from .exceptions import IvdistError
from .inference import analytic_band, analytic_variance, bootstrap_band
from .learners import GradientBoostedTrees, RidgeLogistic, ZeroLearner
from .nuisance import DEFAULT_POOL_THRESHOLD, fit_cross_fitted
from .randomization import (
    EfronBiasedCoin,
    SimpleRandom,
    StratifiedBlock,
    WeiAdaptive,
    assign,
    imbalance_report,
)
from .serialize import (
    config_hash,
    estimate_payload,
    estimate_rows,
    write_csv,
    write_json,
)
from .simulation import (
    DEFAULT_ESTIMATORS,
    DEFAULT_QUANTILE_LEVELS,
    DEFAULT_REFERENCE_SEED,
    DEFAULT_REFERENCE_SIZE,
    DgpConfig,
    mc_report_rows,
    run_monte_carlo,
)


class UsageError(Exception):
    """Configuration problem; maps to exit code 2."""


def _comma_list(text: str) -> list:
    return [t.strip() for t in text.split(",") if t.strip()]


def _resolve_seed(args) -> int:
    if args.seed is None:
        args.seed = secrets.randbits(32)
        print(f"seed: {args.seed} (drawn from system entropy)")
    return args.seed


def parse_learner_config(path) -> dict:
    """Read ``key = value`` lines; '#' starts a comment."""
    options = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            options[key] = value
    return options


_INT_KEYS = {"n_trees", "max_depth", "min_leaf", "max_iter", "pool_threshold"}
_FLOAT_KEYS = {"learning_rate", "penalty", "tol", "clip"}


def _build_learner(name: str, options: dict):
    opts = {}
    pool_threshold = DEFAULT_POOL_THRESHOLD
    for key, value in options.items():
        if key == "pool_threshold":
            pool_threshold = int(value)
        elif key in _INT_KEYS:
            opts[key] = int(value)
        elif key in _FLOAT_KEYS:
            opts[key] = float(value)
        else:
            raise UsageError(f"unknown learner option {key!r}")
    try:
        if name == "zero":
            spec = ZeroLearner()
        elif name == "ridge":
            spec = RidgeLogistic(**{k: v for k, v in opts.items()
                                    if k in ("penalty", "max_iter", "tol", "clip")})
        elif name == "gbt":
            spec = GradientBoostedTrees(**{k: v for k, v in opts.items()
                                           if k in ("n_trees", "max_depth",
                                                    "learning_rate", "min_leaf", "clip")})
        else:
            raise UsageError(f"unknown learner {name!r}")
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid learner options: {exc}") from exc
    return spec, pool_threshold


def _spec_dict(spec) -> dict:
    out = {"kind": type(spec).__name__}
    out.update({k: getattr(spec, k) for k in spec.__dataclass_fields__})
    return out


# ---------------------------------------------------------------------------
# estimate
# ---------------------------------------------------------------------------

def _grid_for(args, sample) -> ThresholdGrid:
    if args.thresholds is not None:
        try:
            values = [float(v) for v in _comma_list(args.thresholds)]
            return ThresholdGrid(np.asarray(values))
        except ValueError as exc:
            raise UsageError(f"bad --thresholds: {exc}") from exc
    if args.integer_grid:
        return default_threshold_grid(sample, count=1, mode="integer", cap=args.grid_cap)
    return default_threshold_grid(sample, count=args.quantile_count)


def _check_common(args) -> None:
    if not 0.0 < args.level < 1.0:
        raise UsageError(f"--level must lie in (0, 1), got {args.level}")
    if args.folds < 2:
        raise UsageError("--folds must be >= 2")
    if args.seed is not None and args.seed < 0:
        raise UsageError("--seed must be a nonnegative integer")


def _cmd_estimate(args) -> int:
    _check_common(args)
    if args.inference == "bootstrap" and args.draws < 2:
        raise UsageError("--draws must be >= 2 for bootstrap inference")
    if args.quantile_count < 1:
        raise UsageError("--quantile-count must be >= 1")
    if args.grid_cap is not None and not args.integer_grid:
        raise UsageError("--grid-cap only applies with --integer-grid")
    seed = _resolve_seed(args)
    schema = {
        "outcome": args.outcome_col,
        "treatment": args.treat_col,
        "assignment": args.assign_col,
        "stratum": args.stratum_col,
        "covariates": _comma_list(args.covariate_cols) if args.covariate_cols else (),
    }
    options = parse_learner_config(args.learner_config) if args.learner_config else {}
    spec, pool_threshold = _build_learner(args.learner, options)
    config = {
        "command": "estimate",
        "schema": {k: list(v) if isinstance(v, (list, tuple)) else v
                   for k, v in schema.items()},
        "delimiter": args.delimiter,
        "learner": _spec_dict(spec),
        "folds": args.folds,
        "pool_threshold": pool_threshold,
        "thresholds": args.thresholds,
        "quantile_count": args.quantile_count,
        "integer_grid": args.integer_grid,
        "grid_cap": args.grid_cap,
        "effect": args.effect,
        "inference": args.inference,
        "draws": args.draws,
        "level": args.level,
        "first_stage_floor": args.first_stage_floor,
        "seed": seed,
    }
    meta = {"version": __version__, "seed": seed, "config_hash": config_hash(config)}

    sample = load_sample(args.input, schema, delimiter=args.delimiter)
    stats = compute_stratum_stats(sample)
    grid = _grid_for(args, sample)
    fit = fit_cross_fitted(sample, grid, spec, n_folds=args.folds, seed=seed,
                           pool_threshold=pool_threshold)
    estimate = estimate_lpte if args.effect == "interval" else estimate_ldte
    result = estimate(sample, fit, stats, grid, args.first_stage_floor)
    if args.inference == "bootstrap":
        band = bootstrap_band(sample, fit, stats, grid, n_draws=args.draws,
                              level=args.level, seed=seed,
                              interval=args.effect == "interval", result=result)
        variance = None
    else:
        variance = analytic_variance(sample, fit, stats, grid, result)
        band = analytic_band(result, variance, args.level)

    payload = estimate_payload(result, band, variance, meta)
    _write_artifacts(args, payload,
                     ["threshold", "beta", "se", "ci_lower", "ci_upper"],
                     estimate_rows(result, band))

    print(f"{'threshold':>12} {'beta':>12} {'se':>12} {'ci_lower':>12} {'ci_upper':>12}")
    for j, t in enumerate(result.thresholds):
        print(f"{t:12.6g} {result.beta[j]:12.6g} {band.se[j]:12.6g} "
              f"{band.lower[j]:12.6g} {band.upper[j]:12.6g}")
    print(f"first stage: {result.first_stage:.6g}   n: {sample.n}   "
          f"strata: {sample.n_strata}   method: {band.method}")
    return 0


def _write_artifacts(args, payload, fieldnames, rows) -> None:
    prefix = args.output
    if args.format in ("json", "both"):
        write_json(f"{prefix}.json", payload)
    if args.format in ("csv", "both"):
        write_csv(f"{prefix}.csv", fieldnames, rows)


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def _cmd_simulate(args) -> int:
    _check_common(args)
    if args.reps < 1:
        raise UsageError("--reps must be >= 1")
    seed = _resolve_seed(args)
    if args.benchmark_defaults:
        dgp = DgpConfig()
    else:
        dgp = DgpConfig(n_strata=args.n_strata, covariate_dim=args.covariate_dim,
                        target_pi1=args.target)
    estimators = tuple(_comma_list(args.estimators))
    unknown = set(estimators) - set(DEFAULT_ESTIMATORS)
    if unknown:
        raise UsageError(f"unknown estimator(s) {sorted(unknown)}; "
                         f"choose from {list(DEFAULT_ESTIMATORS)}")
    levels = tuple(float(v) for v in _comma_list(args.quantiles))
    options = parse_learner_config(args.learner_config) if args.learner_config else {}
    ml_spec, _ = _build_learner("gbt", options)
    config = {
        "command": "simulate",
        "dgp": {k: getattr(dgp, k) for k in
                ("a1", "a0", "b1", "b0", "c1", "c0", "n_strata", "covariate_dim",
                 "target_pi1")},
        "n": args.n,
        "reps": args.reps,
        "quantiles": list(levels),
        "estimators": list(estimators),
        "ml_learner": _spec_dict(ml_spec),
        "folds": args.folds,
        "level": args.level,
        "ref_size": args.ref_size,
        "ref_seed": args.ref_seed,
        "seed": seed,
    }
    meta = {"version": __version__, "seed": seed, "config_hash": config_hash(config)}

    report = run_monte_carlo(dgp, n=args.n, reps=args.reps, quantile_levels=levels,
                             estimators=estimators, seed=seed, level=args.level,
                             ml_spec=ml_spec, n_folds=args.folds,
                             ref_size=args.ref_size, ref_seed=args.ref_seed,
                             workers=args.threads)
    payload = report.to_dict()
    payload["meta"] = meta
    _write_artifacts(args, payload,
                     ["estimator", "quantile", "rmse", "ci_length", "coverage"],
                     mc_report_rows(report))

    mid = len(report.thresholds) // 2
    print(f"{'estimator':>16} {'rmse@median':>12} {'ci_len@median':>14} {'min cover':>10}")
    for name in report.estimators:
        m = report.metrics[name]
        print(f"{name:>16} {m['rmse'][mid]:12.5f} {m['ci_length'][mid]:14.5f} "
              f"{m['coverage'].min():10.3f}")
    print(f"replications: {report.reps}   n: {report.n}   failures: {report.failures}")
    return 0


# ---------------------------------------------------------------------------
# randomize
# ---------------------------------------------------------------------------

def _cmd_randomize(args) -> int:
    seed = _resolve_seed(args)
    df = pd.read_csv(args.input, delimiter=args.delimiter)
    if args.stratum_col not in df.columns:
        raise IvdistError(f"{args.input}: missing stratum column {args.stratum_col!r}")
    if args.assign_col in df.columns:
        raise UsageError(
            f"output column {args.assign_col!r} already exists in {args.input}")
    if args.scheme == "block":
        if args.block_size is None:
            raise UsageError("--block-size is required for the block scheme")
        scheme = StratifiedBlock(block_size=args.block_size, target=args.target)
    elif args.scheme == "efron":
        scheme = EfronBiasedCoin(bias=args.bias, target=args.target)
    elif args.scheme == "wei":
        scheme = WeiAdaptive(target=args.target)
    else:
        scheme = SimpleRandom(target=args.target)

    strata = df[args.stratum_col].to_numpy()
    draws = assign(scheme, strata, seed)
    out = df.copy()
    out[args.assign_col] = draws
    out.to_csv(args.output, index=False, lineterminator="\r\n")

    print(f"{'stratum':>12} {'n':>8} {'treated':>8} {'pi_hat':>10} {'deviation':>12}")
    for row in imbalance_report(draws, strata, scheme):
        print(f"{str(row.stratum):>12} {row.n:>8} {row.n_treated:>8} "
              f"{row.pi_hat:10.4f} {row.deviation:12.3g}")
    print(f"wrote {len(out)} rows to {args.output}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ivdist",
        description="Distributional treatment effects under stratified "
                    "assignment with imperfect compliance.")
    parser.add_argument("--version", action="version", version=f"ivdist {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="estimate effects from a delimited file")
    est.add_argument("--input", required=True)
    est.add_argument("--outcome-col", required=True)
    est.add_argument("--treat-col", required=True)
    est.add_argument("--assign-col", required=True)
    est.add_argument("--stratum-col", required=True)
    est.add_argument("--covariate-cols", default="",
                     help="comma-separated covariate column names")
    est.add_argument("--delimiter", default=",")
    est.add_argument("--learner", choices=("zero", "ridge", "gbt"), default="gbt")
    est.add_argument("--learner-config", help="key = value file of hyperparameters")
    est.add_argument("--folds", type=int, default=2)
    grid = est.add_mutually_exclusive_group()
    grid.add_argument("--thresholds", help="explicit comma-separated thresholds")
    grid.add_argument("--quantile-count", type=int, default=9)
    grid.add_argument("--integer-grid", action="store_true",
                      help="use the distinct outcome values as the grid")
    est.add_argument("--grid-cap", type=float, default=None,
                     help="largest outcome value kept in the integer grid")
    est.add_argument("--effect", choices=("cdf", "interval"), default="cdf")
    est.add_argument("--inference", choices=("analytic", "bootstrap"), default="analytic")
    est.add_argument("--draws", type=int, default=500,
                     help="bootstrap draws when --inference bootstrap")
    est.add_argument("--level", type=float, default=0.95)
    est.add_argument("--first-stage-floor", type=float, default=DEFAULT_FIRST_STAGE_FLOOR)
    est.add_argument("--seed", type=int, default=None)
    est.add_argument("--output", required=True, help="artifact path prefix")
    est.add_argument("--format", choices=("json", "csv", "both"), default="both")
    est.set_defaults(func=_cmd_estimate)

    sim = sub.add_parser("simulate", help="run the benchmark Monte Carlo study")
    sim.add_argument("--benchmark-defaults", action="store_true",
                     help="use the built-in benchmark generator verbatim")
    sim.add_argument("--n", type=int, default=1000)
    sim.add_argument("--reps", type=int, default=200)
    sim.add_argument("--quantiles",
                     default=",".join(str(q) for q in DEFAULT_QUANTILE_LEVELS))
    sim.add_argument("--estimators", default=",".join(DEFAULT_ESTIMATORS))
    sim.add_argument("--n-strata", type=int, default=4)
    sim.add_argument("--covariate-dim", type=int, default=20)
    sim.add_argument("--target", type=float, default=0.5)
    sim.add_argument("--learner-config", help="key = value file for the ML learner")
    sim.add_argument("--folds", type=int, default=2)
    sim.add_argument("--level", type=float, default=0.95)
    sim.add_argument("--ref-size", type=int, default=DEFAULT_REFERENCE_SIZE)
    sim.add_argument("--ref-seed", type=int, default=DEFAULT_REFERENCE_SEED)
    sim.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                     help="parallel workers (default: all cores); results are "
                          "identical for any value")
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--output", required=True, help="artifact path prefix")
    sim.add_argument("--format", choices=("json", "csv", "both"), default="both")
    sim.set_defaults(func=_cmd_simulate)

    rnd = sub.add_parser("randomize", help="draw a stratified assignment column")
    rnd.add_argument("--input", required=True)
    rnd.add_argument("--stratum-col", required=True)
    rnd.add_argument("--scheme", choices=("simple", "block", "efron", "wei"),
                     default="simple")
    rnd.add_argument("--target", type=float, default=0.5)
    rnd.add_argument("--block-size", type=int, default=None)
    rnd.add_argument("--bias", type=float, default=2.0 / 3.0,
                     help="Efron coin bias in (1/2, 1]")
    rnd.add_argument("--assign-col", default="assignment")
    rnd.add_argument("--delimiter", default=",")
    rnd.add_argument("--seed", type=int, default=None)
    rnd.add_argument("--output", required=True)
    rnd.set_defaults(func=_cmd_randomize)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except IvdistError as exc:
        print(f"error[{type(exc).__name__}]: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error[FileNotFoundError]: {exc}", file=sys.stderr)
        return 1
    except (ValueError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
