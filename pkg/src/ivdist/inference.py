"""Standard errors and confidence bands for the effect estimates.

Two routes are provided.  The analytic route plugs the fitted nuisances,
empirical assignment shares, and the point estimate into the influence-
function variance: per-unit terms ``phi_tilde`` are demeaned within each
(arm, stratum) cell, a stratum-level term ``xi_hat`` captures the between-
stratum contribution, and the three mean squares are divided by the squared
first stage.  The bootstrap route resamples rows with replacement, re-using
the original sample's nuisance predictions (looked up by original row index)
while recomputing the assignment shares on each draw.  Both produce pointwise
normal bands.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import ExperimentSample, StratumStats, ThresholdGrid
from .estimator import EFFECT_INTERVAL, LdteResult, estimate_ldte, estimate_lpte
from .exceptions import (
    DegenerateBootstrapDrawError,
    InvalidLevelError,
    InvalidStrataError,
)
from .nuisance import NuisanceFit, interval_mu_all

METHOD_ANALYTIC = "analytic"
METHOD_BOOTSTRAP = "bootstrap"

_SQRT2 = math.sqrt(2.0)
_LOG_2PI = math.log(2.0 * math.pi)


def normal_quantile(p: float) -> float:
    """Standard-normal quantile, accurate to well below 1e-8 on (1e-10, 1-1e-10).

    A closed-form initial guess (tail asymptotic for small tail mass, scaled
    logit elsewhere) is polished by Newton iterations on the log-CDF, which
    converge monotonically because the log-CDF is concave.
    """
    if not 0.0 < p < 1.0:
        raise ValueError(f"quantile argument must lie in (0, 1), got {p}")
    if p == 0.5:
        return 0.0
    q = p if p < 0.5 else 1.0 - p
    if q < 0.04:
        u = -2.0 * math.log(q)
        z = -math.sqrt(u - math.log(u) - _LOG_2PI)
    else:
        z = 0.5877 * math.log(q / (1.0 - q))
    for _ in range(10):
        cdf = 0.5 * math.erfc(-z / _SQRT2)
        pdf = math.exp(-0.5 * z * z - 0.5 * _LOG_2PI)
        step = (math.log(cdf) - math.log(q)) * cdf / pdf
        z -= step
        if abs(step) < 1e-14 * (1.0 + abs(z)):
            break
    return z if p < 0.5 else -z


@dataclass(frozen=True)
class VarianceEstimate:
    """Plug-in variance per threshold.

    ``omega_hat`` is the estimated asymptotic variance of sqrt(n) times the
    estimator and ``se = sqrt(omega_hat / n)``.  ``components`` holds the
    three mean squares (treated-arm phi, control-arm phi, stratum xi) before
    division by the squared first stage.
    """

    omega_hat: np.ndarray
    se: np.ndarray
    components: dict


@dataclass(frozen=True)
class ConfidenceBand:
    """Pointwise normal band around the point estimate."""

    level: float
    lower: np.ndarray
    upper: np.ndarray
    method: str
    se: np.ndarray
    draws: Optional[int] = None
    rejected_draws: int = 0


def _group_mean_by_stratum(values: np.ndarray, mask: np.ndarray,
                           stratum: np.ndarray, n_strata: int) -> np.ndarray:
    """Mean of values[:, i] over the masked rows of each stratum; (J, S)."""
    counts = np.bincount(stratum[mask], minlength=n_strata).astype(np.float64)
    sums = np.empty((values.shape[0], n_strata))
    for j in range(values.shape[0]):
        sums[j] = np.bincount(stratum[mask], weights=values[j, mask], minlength=n_strata)
    return sums / counts[None, :]


def analytic_variance(sample: ExperimentSample, fit: NuisanceFit, stats: StratumStats,
                      grid: ThresholdGrid, result: LdteResult) -> VarianceEstimate:
    """Influence-function plug-in variance for ``result``.

    ``fit`` and ``stats`` must be the objects used for the point estimate;
    interval-effect results are handled by differencing the indicators and
    CDF predictions.
    """
    if not stats.valid:
        raise InvalidStrataError("some stratum has an empty assignment arm")
    interval = result.effect == EFFECT_INTERVAL
    ind = (sample.outcome[None, :] <= grid.thresholds[:, None]).astype(np.float64)
    mu = fit.mu_hat
    if interval:
        ind = np.diff(ind, axis=0, prepend=0.0)
        mu = interval_mu_all(fit)
    beta = result.beta[:, None]
    d = sample.treatment_received.astype(np.float64)[None, :]
    z = sample.assignment.astype(np.float64)
    s_codes = sample.stratum
    inv_pi1 = (1.0 / stats.pi_hat[:, 1])[s_codes][None, :]
    inv_pi0 = (1.0 / stats.pi_hat[:, 0])[s_codes][None, :]

    phi1 = ((1.0 - inv_pi1) * mu[1] - mu[0] + ind * inv_pi1
            - beta * ((1.0 - inv_pi1) * fit.eta_hat[1][None, :]
                      - fit.eta_hat[0][None, :] + d * inv_pi1))
    phi0 = ((inv_pi0 - 1.0) * mu[0] + mu[1] - ind * inv_pi0
            - beta * ((inv_pi0 - 1.0) * fit.eta_hat[0][None, :]
                      + fit.eta_hat[1][None, :] - d * inv_pi0))

    arm1 = z == 1
    arm0 = ~arm1
    n_strata = sample.n_strata
    phi1 = phi1 - _group_mean_by_stratum(phi1, arm1, s_codes, n_strata)[:, s_codes]
    phi0 = phi0 - _group_mean_by_stratum(phi0, arm0, s_codes, n_strata)[:, s_codes]

    score = ind - beta * d
    xi_by_stratum = (_group_mean_by_stratum(score, arm1, s_codes, n_strata)
                     - _group_mean_by_stratum(score, arm0, s_codes, n_strata))
    xi = xi_by_stratum[:, s_codes]

    comp_arm1 = np.mean(z[None, :] * phi1 ** 2, axis=1)
    comp_arm0 = np.mean((1.0 - z)[None, :] * phi0 ** 2, axis=1)
    comp_xi = np.mean(xi ** 2, axis=1)
    omega = (comp_arm1 + comp_arm0 + comp_xi) / result.first_stage ** 2
    return VarianceEstimate(
        omega_hat=omega, se=np.sqrt(omega / sample.n),
        components={"arm1_phi_sq": comp_arm1, "arm0_phi_sq": comp_arm0,
                    "xi_sq": comp_xi})


def _check_level(level: float) -> float:
    if not 0.0 < level < 1.0:
        raise InvalidLevelError(f"confidence level must lie in (0, 1), got {level}")
    return normal_quantile(0.5 * (1.0 + level))


def analytic_band(result: LdteResult, variance: VarianceEstimate,
                  level: float = 0.95) -> ConfidenceBand:
    """Pointwise band ``beta +/- z_{(1+level)/2} * se``."""
    mult = _check_level(level)
    half = mult * variance.se
    return ConfidenceBand(level=level, lower=result.beta - half,
                          upper=result.beta + half, method=METHOD_ANALYTIC,
                          se=variance.se.copy())


def _resampled_betas(sample: ExperimentSample, fit: NuisanceFit, grid: ThresholdGrid,
                     index_draws, interval: bool = False) -> np.ndarray:
    """Effect estimates for explicit lists of resampled row indices.

    Nuisance predictions are looked up by original row index; assignment
    shares are recomputed on each draw.
    """
    ind = (sample.outcome[None, :] <= grid.thresholds[:, None]).astype(np.float64)
    mu = fit.mu_hat
    if interval:
        ind = np.diff(ind, axis=0, prepend=0.0)
        mu = interval_mu_all(fit)
    d = sample.treatment_received.astype(np.float64)
    z = sample.assignment.astype(np.int64)
    n_strata = sample.n_strata
    betas = np.empty((len(index_draws), len(grid)))
    for b, idx in enumerate(index_draws):
        s_b = sample.stratum[idx]
        z_b = z[idx]
        counts = np.zeros((n_strata, 2), dtype=np.int64)
        np.add.at(counts, (s_b, z_b), 1)
        totals = counts.sum(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv_pi = totals[:, None] / counts  # rows of absent strata unused
        num = np.zeros(len(grid))
        den = 0.0
        for arm in (0, 1):
            in_arm = (z_b == arm).astype(np.float64)
            w = inv_pi[s_b, arm]
            sign = 1.0 if arm == 1 else -1.0
            den += sign * np.mean(in_arm * (d[idx] - fit.eta_hat[arm, idx]) * w
                                  + fit.eta_hat[arm, idx])
            num += sign * np.mean(in_arm[None, :] * (ind[:, idx] - mu[arm][:, idx]) * w[None, :]
                                  + mu[arm][:, idx], axis=1)
        betas[b] = num / den
    return betas


def _degenerate_draw(sample: ExperimentSample, idx: np.ndarray) -> bool:
    counts = np.zeros((sample.n_strata, 2), dtype=np.int64)
    np.add.at(counts, (sample.stratum[idx], sample.assignment[idx].astype(np.int64)), 1)
    present = counts.sum(axis=1) > 0
    return bool((counts[present] == 0).any())


def bootstrap_band(sample: ExperimentSample, fit: NuisanceFit, stats: StratumStats,
                   grid: ThresholdGrid, n_draws: int, level: float, seed: int,
                   interval: bool = False,
                   result: Optional[LdteResult] = None) -> ConfidenceBand:
    """Empirical-bootstrap band, centered at the original-sample estimate.

    Each of the ``n_draws`` draws resamples n rows with replacement; a draw
    in which some represented stratum loses an entire arm is rejected and
    redrawn.  If rejections exceed 10% of ``n_draws`` the procedure aborts
    with :class:`DegenerateBootstrapDrawError`.  Deterministic given ``seed``.
    """
    if n_draws < 2:
        raise ValueError("n_draws must be >= 2")
    mult = _check_level(level)
    if result is None:
        result = (estimate_lpte if interval else estimate_ldte)(sample, fit, stats, grid)
    draws = []
    rejected = 0
    for b in range(n_draws):
        for attempt in range(1000):
            rng = np.random.default_rng(np.random.SeedSequence([int(seed), b, attempt]))
            idx = rng.integers(0, sample.n, size=sample.n)
            if not _degenerate_draw(sample, idx):
                break
            rejected += 1
            if rejected > 0.1 * n_draws:
                raise DegenerateBootstrapDrawError(
                    f"{rejected} of {n_draws} bootstrap draws had an empty "
                    "(stratum, arm) cell")
        else:
            raise DegenerateBootstrapDrawError(
                f"draw {b} kept producing empty (stratum, arm) cells")
        draws.append(idx)
    betas = _resampled_betas(sample, fit, grid, draws, interval=interval)
    se = betas.std(axis=0, ddof=1)
    half = mult * se
    return ConfidenceBand(level=level, lower=result.beta - half,
                          upper=result.beta + half, method=METHOD_BOOTSTRAP,
                          se=se, draws=n_draws, rejected_draws=rejected)
