"""Benchmark data-generating process and Monte Carlo study runner.

The generator draws a uniform stratifier W (cut into equal-length intervals
to form strata), independent standard-normal covariates, and a single shared
noise term that drives both potential outcomes and treatment uptake, so
uptake is endogenous.  Treatment shifts the outcome by a constant, which
still produces a nontrivial distributional effect.  Potential treatment
states are generated so that no unit is a defier.

The Monte Carlo runner fixes one large reference draw, takes the evaluation
thresholds from the quantiles of its observed outcome, reads the true effect
off its latent compliers, and then repeatedly generates fresh samples,
estimates, and aggregates RMSE, confidence-interval length, and coverage per
estimator and threshold.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence, Union

import numpy as np

from .data import ExperimentSample, ThresholdGrid, compute_stratum_stats, make_sample
from .estimator import (
    DEFAULT_FIRST_STAGE_FLOOR,
    estimate_ldte,
    estimate_unadjusted,
)
from .exceptions import NoCompliersError, WeakFirstStageError
from .inference import analytic_band, analytic_variance
from .learners import GradientBoostedTrees, LearnerSpec, RidgeLogistic, ZeroLearner
from .nuisance import fit_cross_fitted
from .randomization import CarScheme, SimpleRandom, assign

DEFAULT_QUANTILE_LEVELS = tuple(np.round(np.arange(1, 10) * 0.1, 1))
DEFAULT_REFERENCE_SIZE = 10 ** 6
DEFAULT_REFERENCE_SEED = 202406

UNADJUSTED = "unadjusted"
LINEAR_ADJUSTED = "linear-adjusted"
ML_ADJUSTED = "ml-adjusted"
DEFAULT_ESTIMATORS = (UNADJUSTED, LINEAR_ADJUSTED, ML_ADJUSTED)

# linear adjustment = near-unpenalized logistic regression; the tiny ridge
# keeps the Hessian invertible under collinearity
LINEAR_SPEC = RidgeLogistic(penalty=1e-6)


@dataclass(frozen=True)
class DgpConfig:
    """Structural constants and design knobs of the benchmark generator."""

    a1: float = 2.0
    a0: float = 1.0
    b1: float = 1.0
    b0: float = -1.0
    c1: float = 3.0
    c0: float = 3.0
    n_strata: int = 4
    covariate_dim: int = 20
    target_pi1: Union[float, tuple] = 0.5
    scheme: Optional[CarScheme] = None  # None: within-stratum Bernoulli(target)

    def __post_init__(self):
        if self.n_strata < 1:
            raise ValueError("n_strata must be >= 1")
        if self.covariate_dim < 0:
            raise ValueError("covariate_dim must be >= 0")
        targets = self.target_pi1 if isinstance(self.target_pi1, tuple) else (self.target_pi1,)
        if not all(0.0 < t < 1.0 for t in targets):
            raise ValueError("target_pi1 must lie in (0, 1)")

    def resolved_scheme(self) -> CarScheme:
        if self.scheme is not None:
            return self.scheme
        if isinstance(self.target_pi1, tuple):
            return SimpleRandom(dict(enumerate(self.target_pi1)))
        return SimpleRandom(self.target_pi1)


@dataclass(frozen=True)
class GeneratedSample:
    """Observed sample plus the latent ground truth behind it.

    ``compliance`` codes: 0 never-taker, 1 complier, 2 always-taker.
    """

    sample: ExperimentSample
    y0: np.ndarray
    y1: np.ndarray
    d0: np.ndarray
    d1: np.ndarray
    compliance: np.ndarray


def _column(x: np.ndarray, k: int) -> np.ndarray:
    return x[:, k] if k < x.shape[1] else np.zeros(x.shape[0])


def generate(config: DgpConfig, n: int, seed: int) -> GeneratedSample:
    """Draw ``n`` units from the benchmark process; deterministic given seed."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 11]))
    w = rng.uniform(0.0, 1.0, size=n)
    x = rng.standard_normal((n, config.covariate_dim))
    eps = rng.standard_normal(n)

    stratum = np.minimum((w * config.n_strata).astype(np.int64), config.n_strata - 1)
    x1, x2, x3 = _column(x, 0), _column(x, 1), _column(x, 2)
    x4, x5 = _column(x, 3), _column(x, 4)
    b_val = np.sin(np.pi * x1 * x2) + 2.0 * (x3 - 0.5) ** 2 + x4 + 0.5 * x5 + 0.1 * w
    c_val = 0.1 * (x1 + np.logaddexp(0.0, x2) + w)

    base = b_val + eps
    y0 = config.a0 + base
    y1 = config.a1 + base
    d0 = (config.b0 + c_val > config.c0 * eps).astype(np.int8)
    d1 = np.where(d0 == 1, np.int8(1),
                  (config.b1 + c_val > config.c1 * eps).astype(np.int8))

    assign_seed = int(np.random.SeedSequence([int(seed), 13]).generate_state(1, np.uint64)[0])
    z = assign(config.resolved_scheme(), stratum, assign_seed)

    d = np.where(z == 1, d1, d0).astype(np.int8)
    y = np.where(d == 1, y1, y0)
    sample = make_sample(y, d, z, stratum + 1, x)
    return GeneratedSample(sample=sample, y0=y0, y1=y1, d0=d0, d1=d1,
                           compliance=(d0.astype(np.int64) + d1.astype(np.int64)))


def complier_effect(gen: GeneratedSample, thresholds: np.ndarray) -> np.ndarray:
    """True effect: difference of latent potential-outcome CDFs on compliers."""
    compliers = gen.d1 > gen.d0
    if not compliers.any():
        raise NoCompliersError("reference draw contains no compliers")
    y1c = np.sort(gen.y1[compliers])
    y0c = np.sort(gen.y0[compliers])
    m = y1c.size
    t = np.asarray(thresholds, dtype=np.float64)
    return (np.searchsorted(y1c, t, side="right")
            - np.searchsorted(y0c, t, side="right")) / m


def ground_truth(config: DgpConfig, grid: ThresholdGrid, n_ref: int, seed: int) -> np.ndarray:
    """Per-threshold true effect approximated on a fresh reference draw."""
    return complier_effect(generate(config, n_ref, seed), grid.thresholds)


def _reference_targets_impl(config: DgpConfig, levels: tuple, ref_size: int,
                            ref_seed: int) -> tuple:
    gen = generate(config, ref_size, ref_seed)
    cuts = np.quantile(gen.sample.outcome, np.asarray(levels), method="inverted_cdf")
    thresholds = np.unique(cuts)
    truth = complier_effect(gen, thresholds)
    thresholds.setflags(write=False)
    truth.setflags(write=False)
    return thresholds, truth


_reference_targets_cached = lru_cache(maxsize=4)(_reference_targets_impl)


def _reference_targets(config: DgpConfig, levels: tuple, ref_size: int,
                       ref_seed: int) -> tuple:
    """Grid thresholds (reference observed-outcome quantiles) and true effect."""
    try:
        return _reference_targets_cached(config, levels, ref_size, ref_seed)
    except TypeError:  # config holds an unhashable scheme target
        return _reference_targets_impl(config, levels, ref_size, ref_seed)


@dataclass(frozen=True)
class McReport:
    """Aggregated Monte Carlo metrics per estimator and threshold."""

    thresholds: np.ndarray
    quantile_levels: tuple
    truth: np.ndarray
    metrics: dict
    failures: dict
    n: int
    reps: int
    level: float
    seed: int
    ref_size: int
    ref_seed: int
    estimators: tuple

    def to_dict(self) -> dict:
        return {
            "thresholds": self.thresholds.tolist(),
            "quantile_levels": list(self.quantile_levels),
            "truth": self.truth.tolist(),
            "metrics": {name: {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                               for k, v in m.items()}
                        for name, m in self.metrics.items()},
            "failures": dict(self.failures),
            "n": self.n,
            "reps": self.reps,
            "level": self.level,
            "seed": self.seed,
            "ref_size": self.ref_size,
            "ref_seed": self.ref_seed,
            "estimators": list(self.estimators),
        }


def mc_report_rows(report: McReport) -> list:
    """Long-format rows (estimator, quantile, rmse, ci_length, coverage)."""
    j_count = len(report.thresholds)
    # grid quantiles can collapse on ties; fall back to threshold values then
    labels = (report.quantile_levels if len(report.quantile_levels) == j_count
              else tuple(report.thresholds.tolist()))
    rows = []
    for name in report.estimators:
        m = report.metrics[name]
        for j in range(j_count):
            rows.append({
                "estimator": name,
                "quantile": labels[j],
                "rmse": m["rmse"][j],
                "ci_length": m["ci_length"][j],
                "coverage": m["coverage"][j],
            })
    return rows


def _child_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1, np.uint64)[0])


def _replicate(config: DgpConfig, n: int, thresholds: np.ndarray, estimators: tuple,
               rep_seed: int, level: float, ml_spec: LearnerSpec, n_folds: int,
               first_stage_floor: float) -> dict:
    """One replication: generate, estimate, band; returns per-estimator rows."""
    grid = ThresholdGrid(thresholds)
    gen = generate(config, n, rep_seed)
    sample = gen.sample
    stats = compute_stratum_stats(sample)
    out = {}
    for name in estimators:
        try:
            if name == UNADJUSTED:
                fit = fit_cross_fitted(sample, grid, ZeroLearner())
                result = estimate_unadjusted(sample, stats, grid, first_stage_floor)
            else:
                spec = LINEAR_SPEC if name == LINEAR_ADJUSTED else ml_spec
                fit = fit_cross_fitted(sample, grid, spec, n_folds=n_folds, seed=rep_seed)
                result = estimate_ldte(sample, fit, stats, grid, first_stage_floor)
            band = analytic_band(result, analytic_variance(sample, fit, stats, grid, result),
                                 level)
            out[name] = (result.beta, band.se, band.lower, band.upper)
        except WeakFirstStageError:
            out[name] = None
    return out


def run_monte_carlo(config: DgpConfig, n: int, reps: int,
                    quantile_levels: Sequence[float] = DEFAULT_QUANTILE_LEVELS,
                    estimators: Sequence[str] = DEFAULT_ESTIMATORS,
                    seed: int = 0, level: float = 0.95,
                    ml_spec: LearnerSpec = GradientBoostedTrees(),
                    n_folds: int = 2,
                    ref_size: int = DEFAULT_REFERENCE_SIZE,
                    ref_seed: int = DEFAULT_REFERENCE_SEED,
                    first_stage_floor: float = DEFAULT_FIRST_STAGE_FLOOR,
                    workers: int = 1) -> McReport:
    """Run the Monte Carlo study and aggregate metrics.

    Replication r uses the sub-seed derived from ``(seed, r)``, so reports
    are identical for identical arguments regardless of ``workers``.
    Replications that fail with a weak first stage are counted and excluded;
    more than 1% of failures for any estimator aborts the study.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    estimators = tuple(estimators)
    levels = tuple(float(q) for q in quantile_levels)
    thresholds, truth = _reference_targets(config, levels, int(ref_size), int(ref_seed))

    args = [(config, n, thresholds, estimators, _child_seed(seed, r), level,
             ml_spec, n_folds, first_stage_floor) for r in range(reps)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_replicate_star, args, chunksize=8))
    else:
        results = [_replicate(*a) for a in args]

    metrics = {}
    failures = {}
    for name in estimators:
        rows = [r[name] for r in results if r[name] is not None]
        n_fail = reps - len(rows)
        failures[name] = n_fail
        if n_fail > 0.01 * reps:
            raise WeakFirstStageError(
                f"{n_fail} of {reps} replications failed for {name!r}")
        betas = np.stack([r[0] for r in rows])
        ses = np.stack([r[1] for r in rows])
        lower = np.stack([r[2] for r in rows])
        upper = np.stack([r[3] for r in rows])
        covered = (lower <= truth[None, :]) & (truth[None, :] <= upper)
        metrics[name] = {
            "rmse": np.sqrt(np.mean((betas - truth[None, :]) ** 2, axis=0)),
            "ci_length": np.mean(upper - lower, axis=0),
            "coverage": covered.mean(axis=0),
            "beta_mean": betas.mean(axis=0),
            "beta_sd": betas.std(axis=0, ddof=1) if betas.shape[0] > 1 else np.zeros(betas.shape[1]),
            "se_median": np.median(ses, axis=0),
        }
    return McReport(thresholds=np.asarray(thresholds), quantile_levels=levels,
                    truth=np.asarray(truth), metrics=metrics, failures=failures,
                    n=n, reps=reps, level=level, seed=seed, ref_size=int(ref_size),
                    ref_seed=int(ref_seed), estimators=estimators)


def _replicate_star(args):
    return _replicate(*args)
