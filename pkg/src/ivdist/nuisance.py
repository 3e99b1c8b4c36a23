"""Cross-fitted conditional CDF and compliance models.

For each arm z, stratum s, fold l, and threshold y, a binary model is trained
on the rows with ``Z == z`` in stratum s outside fold l, with target
``1{Y <= y}`` (CDF model) or ``D`` (compliance model).  Its predictions are
stored for the fold-l rows of stratum s, for every unit regardless of the
unit's own arm, so each row ends up with out-of-fold predictions for both
arms.

Strata whose smallest (arm, stratum) cell falls below ``pool_threshold`` are
pooled: models are then trained per arm on all strata jointly, with one-hot
stratum indicators appended to the covariates.  CDF predictions are forced to
be nondecreasing across the threshold grid by a running maximum so that
interval probabilities stay nonnegative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import ExperimentSample, ThresholdGrid, compute_stratum_stats
from .exceptions import (
    CellTooSmallError,
    EmptyTrainingCellError,
    IndexOutOfRangeError,
    InvalidStrataError,
)
from .learners import LearnerSpec, ZeroLearner, fit_binary

DEFAULT_POOL_THRESHOLD = 50


@dataclass(frozen=True)
class NuisanceFit:
    """Out-of-fold predictions for every unit, threshold, and arm.

    Attributes
    ----------
    mu_hat : ndarray, shape (2, J, n)
        ``mu_hat[z, j, i]`` estimates P(Y <= y_j | Z=z, S_i, X_i);
        nondecreasing in j for each (z, i).
    eta_hat : ndarray, shape (2, n)
        ``eta_hat[z, i]`` estimates P(D = 1 | Z=z, S_i, X_i).
    fold_of : ndarray, shape (n,)
        Fold index of each unit; the models behind unit i's predictions never
        saw fold ``fold_of[i]``.
    """

    mu_hat: np.ndarray
    eta_hat: np.ndarray
    fold_of: np.ndarray
    spec: LearnerSpec
    n_folds: int
    pooled: bool
    train_sizes: dict

    @property
    def n_thresholds(self) -> int:
        return self.mu_hat.shape[1]


def fold_assign(sample: ExperimentSample, n_folds: int, seed: int) -> np.ndarray:
    """Deal units into folds, stratified jointly by (arm, stratum).

    Within each (z, s) cell the units are shuffled and dealt round-robin, so
    per-fold cell counts differ by at most one.  Raises
    :class:`CellTooSmallError` if any cell has fewer than ``n_folds`` units.
    """
    if n_folds < 2:
        raise ValueError("n_folds must be >= 2")
    fold_of = np.empty(sample.n, dtype=np.int64)
    for s in range(sample.n_strata):
        for z in (0, 1):
            cell = np.flatnonzero((sample.stratum == s) & (sample.assignment == z))
            if cell.size < n_folds:
                raise CellTooSmallError(
                    f"cell (z={z}, stratum={sample.stratum_labels[s]!r}) has "
                    f"{cell.size} units, fewer than {n_folds} folds")
            rng = np.random.default_rng(np.random.SeedSequence([int(seed), z, s]))
            perm = rng.permutation(cell)
            fold_of[perm] = np.arange(cell.size) % n_folds
    return fold_of


def _one_hot_strata(sample: ExperimentSample) -> np.ndarray:
    # first level dropped; the intercept absorbs it
    cols = [(sample.stratum == s).astype(np.float64) for s in range(1, sample.n_strata)]
    if not cols:
        return np.empty((sample.n, 0))
    return np.column_stack(cols)


def fit_cross_fitted(sample: ExperimentSample, grid: ThresholdGrid, spec: LearnerSpec,
                     n_folds: int = 2, seed: int = 0,
                     pool_threshold: int = DEFAULT_POOL_THRESHOLD) -> NuisanceFit:
    """Train per-(arm, stratum, fold, threshold) models and collect predictions.

    Deterministic given ``(sample, grid, spec, n_folds, seed)``.  The Zero
    learner skips training entirely and emits exact zeros with all units in
    fold 0.
    """
    n = sample.n
    j_count = len(grid)
    if isinstance(spec, ZeroLearner):
        return NuisanceFit(
            mu_hat=np.zeros((2, j_count, n)), eta_hat=np.zeros((2, n)),
            fold_of=np.zeros(n, dtype=np.int64), spec=spec, n_folds=n_folds,
            pooled=False, train_sizes={})

    stats = compute_stratum_stats(sample)
    if not stats.valid:
        raise InvalidStrataError("some stratum has an empty assignment arm")
    fold_of = fold_assign(sample, n_folds, seed)
    pooled = bool(stats.n_by_arm.min() < pool_threshold)

    x = sample.covariates
    if pooled:
        x = np.column_stack([x, _one_hot_strata(sample)]) if sample.n_strata > 1 else x
        groups = [np.ones(n, dtype=bool)]
        group_names = ["pooled"]
    else:
        groups = [sample.stratum == s for s in range(sample.n_strata)]
        group_names = list(sample.stratum_labels)

    targets = (sample.outcome[None, :] <= grid.thresholds[:, None]).astype(np.float64)
    d_target = sample.treatment_received.astype(np.float64)

    mu_hat = np.zeros((2, j_count, n))
    eta_hat = np.zeros((2, n))
    train_sizes = {}
    for z in (0, 1):
        in_arm = sample.assignment == z
        for g_idx, g_mask in enumerate(groups):
            for fold in range(n_folds):
                train = g_mask & in_arm & (fold_of != fold)
                if not train.any():
                    raise EmptyTrainingCellError(
                        f"no training rows for (z={z}, group={group_names[g_idx]!r}, "
                        f"fold={fold})")
                apply_to = g_mask & (fold_of == fold)
                train_sizes[(z, group_names[g_idx], fold)] = int(train.sum())
                if not apply_to.any():
                    continue
                x_tr, x_ap = x[train], x[apply_to]
                eta_hat[z, apply_to] = fit_binary(spec, x_tr, d_target[train])(x_ap)
                for j in range(j_count):
                    mu_hat[z, j, apply_to] = fit_binary(spec, x_tr, targets[j, train])(x_ap)

    np.maximum.accumulate(mu_hat, axis=1, out=mu_hat)
    return NuisanceFit(mu_hat=mu_hat, eta_hat=eta_hat, fold_of=fold_of, spec=spec,
                       n_folds=n_folds, pooled=pooled, train_sizes=train_sizes)


def predict_interval_mu(fit: NuisanceFit, j: int) -> np.ndarray:
    """Interval probability P(y_{j-1} < Y <= y_j) for 1-based threshold index j.

    ``j == 1`` returns the CDF prediction at the first threshold (the lower
    endpoint is -inf).  Values are nonnegative by the monotonicity of
    ``mu_hat`` across the grid.
    """
    j_count = fit.n_thresholds
    if not 1 <= j <= j_count:
        raise IndexOutOfRangeError(f"threshold index {j} outside 1..{j_count}")
    if j == 1:
        return fit.mu_hat[:, 0, :].copy()
    return fit.mu_hat[:, j - 1, :] - fit.mu_hat[:, j - 2, :]


def interval_mu_all(fit: NuisanceFit) -> np.ndarray:
    """All interval probabilities, shape (2, J, n); differences of mu_hat."""
    return np.diff(fit.mu_hat, axis=1, prepend=0.0)
