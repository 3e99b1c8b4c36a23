"""Point estimators for distributional and interval treatment effects.

The adjusted estimator averages, for each arm z, the augmented terms

    Xi_Y[z, i](y) = 1{Z_i = z} (1{Y_i <= y} - mu_hat_z(y, S_i, X_i)) / pi_hat_z(S_i)
                    + mu_hat_z(y, S_i, X_i)
    Xi_D[z, i]    = 1{Z_i = z} (D_i - eta_hat_z(S_i, X_i)) / pi_hat_z(S_i)
                    + eta_hat_z(S_i, X_i)

and forms ``beta(y) = mean(Xi_Y[1] - Xi_Y[0]) / mean(Xi_D[1] - Xi_D[0])``.
The denominator (the first stage) does not depend on the threshold grid.
With all-zero nuisance predictions this reduces algebraically to the
unadjusted stratified estimator, which :func:`estimate_unadjusted` also
computes directly from within-cell means as an independent code path.

Empirical assignment shares ``pi_hat`` are used rather than design targets:
this makes several finite-sample identities hold exactly (see the test
suite) and matches the plug-in variance estimator.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import ExperimentSample, StratumStats, ThresholdGrid
from .exceptions import InvalidStrataError, WeakFirstStageError
from .nuisance import NuisanceFit, interval_mu_all

DEFAULT_FIRST_STAGE_FLOOR = 0.01

EFFECT_CDF = "cdf"
EFFECT_INTERVAL = "interval"


@dataclass(frozen=True)
class XiTerms:
    """Augmented per-unit terms; ``xi_y`` is (2, J, n) and ``xi_d`` is (2, n)."""

    xi_y: np.ndarray
    xi_d: np.ndarray


@dataclass(frozen=True)
class LdteResult:
    """Per-threshold effect estimates with the shared first stage.

    ``beta[j] = numerator[j] / first_stage``; ``effect`` records whether the
    thresholds index CDF levels ("cdf") or intervals between consecutive
    thresholds ("interval").
    """

    thresholds: np.ndarray
    beta: np.ndarray
    first_stage: float
    numerator: np.ndarray
    effect: str
    diagnostics: dict


def _check_stats(stats: StratumStats) -> None:
    if not stats.valid:
        empty = [(s, z) for s in range(stats.n_by_arm.shape[0])
                 for z in (0, 1) if stats.n_by_arm[s, z] == 0]
        raise InvalidStrataError(f"empty (stratum, arm) cells: {empty}")


def _indicators(sample: ExperimentSample, grid: ThresholdGrid) -> np.ndarray:
    return (sample.outcome[None, :] <= grid.thresholds[:, None]).astype(np.float64)


def _augment(indicator_or_d, prediction, in_arm, inv_pi):
    # AIPW form: 1{Z=z} (target - prediction) / pi_hat_z + prediction
    return in_arm * (indicator_or_d - prediction) * inv_pi + prediction


def compute_xi_terms(sample: ExperimentSample, fit: NuisanceFit, stats: StratumStats,
                     grid: ThresholdGrid, interval: bool = False) -> XiTerms:
    """Evaluate the augmented terms for every unit, arm, and threshold.

    With ``interval=True`` the indicators are ``1{y_{j-1} < Y <= y_j}`` and
    the CDF predictions are replaced by their consecutive differences.
    """
    _check_stats(stats)
    ind = _indicators(sample, grid)
    mu = fit.mu_hat
    if interval:
        ind = np.diff(ind, axis=0, prepend=0.0)
        mu = interval_mu_all(fit)
    j_count = len(grid)
    xi_y = np.empty((2, j_count, sample.n))
    xi_d = np.empty((2, sample.n))
    d = sample.treatment_received.astype(np.float64)
    for z in (0, 1):
        in_arm = (sample.assignment == z).astype(np.float64)
        inv_pi = 1.0 / stats.pi_hat[sample.stratum, z]
        xi_d[z] = _augment(d, fit.eta_hat[z], in_arm, inv_pi)
        xi_y[z] = _augment(ind, mu[z], in_arm[None, :], inv_pi[None, :])
    return XiTerms(xi_y=xi_y, xi_d=xi_d)


def _ratio_result(grid, xi, effect, diagnostics, first_stage_floor):
    first_stage = float(np.mean(xi.xi_d[1] - xi.xi_d[0]))
    if abs(first_stage) < first_stage_floor:
        raise WeakFirstStageError(
            f"|first stage| = {abs(first_stage):.3g} below floor {first_stage_floor}")
    numerator = np.mean(xi.xi_y[1] - xi.xi_y[0], axis=1)
    return LdteResult(
        thresholds=grid.thresholds.copy(), beta=numerator / first_stage,
        first_stage=first_stage, numerator=numerator, effect=effect,
        diagnostics=diagnostics)


def _diagnostics(fit: Optional[NuisanceFit], floor: float) -> dict:
    diag = {"pi_source": "empirical", "first_stage_floor": floor}
    if fit is None:
        diag.update(learner="none", n_folds=0, pooled_strata=False)
    else:
        diag.update(learner=type(fit.spec).__name__, learner_spec=repr(fit.spec),
                    n_folds=fit.n_folds, pooled_strata=fit.pooled)
    return diag


def estimate_ldte(sample: ExperimentSample, fit: NuisanceFit, stats: StratumStats,
                  grid: ThresholdGrid,
                  first_stage_floor: float = DEFAULT_FIRST_STAGE_FLOOR) -> LdteResult:
    """Adjusted distributional effect at each grid threshold."""
    xi = compute_xi_terms(sample, fit, stats, grid)
    return _ratio_result(grid, xi, EFFECT_CDF, _diagnostics(fit, first_stage_floor),
                         first_stage_floor)


def estimate_lpte(sample: ExperimentSample, fit: NuisanceFit, stats: StratumStats,
                  grid: ThresholdGrid,
                  first_stage_floor: float = DEFAULT_FIRST_STAGE_FLOOR) -> LdteResult:
    """Adjusted interval (probability-mass) effect; shares the LDTE first stage."""
    xi = compute_xi_terms(sample, fit, stats, grid, interval=True)
    return _ratio_result(grid, xi, EFFECT_INTERVAL, _diagnostics(fit, first_stage_floor),
                         first_stage_floor)


def estimate_unadjusted(sample: ExperimentSample, stats: StratumStats, grid: ThresholdGrid,
                        first_stage_floor: float = DEFAULT_FIRST_STAGE_FLOOR,
                        interval: bool = False) -> LdteResult:
    """Stratified estimator from within-cell means, no regression adjustment.

    Numerator and denominator are stratum-share weighted differences of
    within-(stratum, arm) means; this is an independent computation path that
    must agree with :func:`estimate_ldte` under the Zero learner.
    """
    _check_stats(stats)
    ind = _indicators(sample, grid)
    if interval:
        ind = np.diff(ind, axis=0, prepend=0.0)
    d = sample.treatment_received.astype(np.float64)
    numerator = np.zeros(len(grid))
    first_stage = 0.0
    for s in range(sample.n_strata):
        in_s = sample.stratum == s
        arm1 = in_s & (sample.assignment == 1)
        arm0 = in_s & (sample.assignment == 0)
        p_s = stats.p_hat[s]
        numerator += p_s * (ind[:, arm1].mean(axis=1) - ind[:, arm0].mean(axis=1))
        first_stage += p_s * (d[arm1].mean() - d[arm0].mean())
    if abs(first_stage) < first_stage_floor:
        raise WeakFirstStageError(
            f"|first stage| = {abs(first_stage):.3g} below floor {first_stage_floor}")
    return LdteResult(
        thresholds=grid.thresholds.copy(), beta=numerator / first_stage,
        first_stage=first_stage, numerator=numerator,
        effect=EFFECT_INTERVAL if interval else EFFECT_CDF,
        diagnostics=_diagnostics(None, first_stage_floor))
