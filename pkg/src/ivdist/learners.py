"""Binary-outcome learners used for the conditional CDF and compliance models.

Three learner families are provided:

* ``ZeroLearner`` predicts 0 everywhere; it turns the adjusted estimator into
  the plain stratified estimator and anchors equivalence tests.
* ``RidgeLogistic`` is an L2-penalized logistic regression fitted by Newton
  iterations with step halving.  The intercept is not penalized, so an
  infinite penalty degenerates to the (clipped) cell mean.
* ``GradientBoostedTrees`` is least-squares boosting on the 0/1 target with
  depth-limited CART trees, written in-house so that fits are bit-for-bit
  deterministic: split candidates are midpoints of sorted distinct feature
  values and ties in gain resolve to the lowest feature index, then the
  lowest threshold.

All probability predictions are clipped to ``[clip, 1 - clip]`` except for
the Zero learner, which emits exact zeros.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .exceptions import LearnerDivergenceWarning

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


@dataclass(frozen=True)
class ZeroLearner:
    """Predicts 0 for every unit; no data is consulted."""

    clip: float = 0.0


@dataclass(frozen=True)
class RidgeLogistic:
    penalty: float = 1.0
    max_iter: int = 100
    tol: float = 1e-8
    clip: float = 1e-3

    def __post_init__(self):
        if self.penalty < 0:
            raise ValueError("penalty must be >= 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not 0.0 <= self.clip < 0.5:
            raise ValueError("clip must lie in [0, 0.5)")


@dataclass(frozen=True)
class GradientBoostedTrees:
    n_trees: int = 100
    max_depth: int = 3
    learning_rate: float = 0.1
    min_leaf: int = 10
    clip: float = 1e-3

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning_rate must lie in (0, 1]")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")
        if not 0.0 <= self.clip < 0.5:
            raise ValueError("clip must lie in [0, 0.5)")


LearnerSpec = Union[ZeroLearner, RidgeLogistic, GradientBoostedTrees]

Predictor = Callable[[np.ndarray], np.ndarray]


# ---------------------------------------------------------------------------
# gradient boosted trees
# ---------------------------------------------------------------------------

@njit(cache=True)
def _boost_fit(x, y, n_trees, max_depth, learning_rate, min_leaf):
    """Fit least-squares boosted trees; returns (base, feat, thr, val).

    Trees use a dense binary layout: node k has children 2k+1 / 2k+2 and
    feat[t, k] == -1 marks a leaf whose prediction is val[t, k].  Each
    feature is argsorted once; node membership is tracked per row so split
    search walks the presorted order instead of re-sorting per node.
    """
    n, d = x.shape
    max_nodes = 2 ** (max_depth + 1) - 1
    feat = np.full((n_trees, max_nodes), -1, dtype=np.int64)
    thr = np.zeros((n_trees, max_nodes), dtype=np.float64)
    val = np.zeros((n_trees, max_nodes), dtype=np.float64)

    order = np.empty((d, n), dtype=np.int64)
    for f in range(d):
        order[f] = np.argsort(x[:, f], kind="mergesort")

    base = y.mean()
    pred = np.full(n, base)
    node_of = np.empty(n, dtype=np.int64)
    node_size = np.zeros(max_nodes, dtype=np.int64)
    node_sum = np.zeros(max_nodes, dtype=np.float64)
    node_depth = np.zeros(max_nodes, dtype=np.int64)
    stack = np.empty(max_nodes, dtype=np.int64)

    for t in range(n_trees):
        resid = y - pred
        tot0 = 0.0
        for i in range(n):
            node_of[i] = 0
            tot0 += resid[i]
        node_size[0] = n
        node_sum[0] = tot0
        node_depth[0] = 0
        stack[0] = 0
        top = 1
        while top > 0:
            top -= 1
            node = stack[top]
            m = node_size[node]
            tot = node_sum[node]
            val[t, node] = tot / m
            if node_depth[node] >= max_depth or m < 2 * min_leaf:
                continue
            best_score = tot * tot / m
            best_feat = -1
            best_thr = 0.0
            for f in range(d):
                cnt = 0
                csum = 0.0
                prev = 0.0
                for pos in range(n):
                    i = order[f, pos]
                    if node_of[i] != node:
                        continue
                    v = x[i, f]
                    if (cnt >= min_leaf and m - cnt >= min_leaf and v > prev):
                        score = (csum * csum / cnt
                                 + (tot - csum) * (tot - csum) / (m - cnt))
                        if score > best_score:
                            best_score = score
                            best_feat = f
                            best_thr = 0.5 * (prev + v)
                    csum += resid[i]
                    cnt += 1
                    prev = v
            if best_feat < 0:
                continue
            feat[t, node] = best_feat
            thr[t, node] = best_thr
            left = 2 * node + 1
            right = 2 * node + 2
            n_left = 0
            sum_left = 0.0
            for i in range(n):
                if node_of[i] == node:
                    if x[i, best_feat] <= best_thr:
                        node_of[i] = left
                        n_left += 1
                        sum_left += resid[i]
                    else:
                        node_of[i] = right
            node_size[left] = n_left
            node_sum[left] = sum_left
            node_depth[left] = node_depth[node] + 1
            node_size[right] = m - n_left
            node_sum[right] = tot - sum_left
            node_depth[right] = node_depth[node] + 1
            stack[top] = right
            top += 1
            stack[top] = left
            top += 1
        for i in range(n):
            pred[i] += learning_rate * val[t, node_of[i]]
    return base, feat, thr, val


@njit(cache=True)
def _boost_predict(x, base, feat, thr, val, learning_rate):
    n = x.shape[0]
    n_trees = feat.shape[0]
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        acc = 0.0
        for t in range(n_trees):
            k = 0
            while feat[t, k] >= 0:
                if x[i, feat[t, k]] <= thr[t, k]:
                    k = 2 * k + 1
                else:
                    k = 2 * k + 2
            acc += val[t, k]
        out[i] = base + learning_rate * acc
    return out


def _fit_gbt(spec: GradientBoostedTrees, x: np.ndarray, y: np.ndarray) -> Predictor:
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    base, feat, thr, val = _boost_fit(
        x, y, spec.n_trees, spec.max_depth, spec.learning_rate, spec.min_leaf)

    def predict(x_new: np.ndarray) -> np.ndarray:
        x_new = np.ascontiguousarray(x_new, dtype=np.float64)
        raw = _boost_predict(x_new, base, feat, thr, val, spec.learning_rate)
        return np.clip(raw, spec.clip, 1.0 - spec.clip)

    return predict


# ---------------------------------------------------------------------------
# ridge logistic regression
# ---------------------------------------------------------------------------

def _sigmoid(eta: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(eta, -35.0, 35.0)))


def _penalized_deviance(eta, y, w, pen):
    # -loglik = sum log(1 + exp(eta)) - y * eta, evaluated stably
    return float(np.logaddexp(0.0, eta).sum() - y @ eta + 0.5 * pen @ (w * w))


def _fit_ridge_logistic(spec: RidgeLogistic, x: np.ndarray, y: np.ndarray) -> Predictor:
    m, d = x.shape
    mean = float(y.mean())

    def constant(value: float) -> Predictor:
        v = float(np.clip(value, spec.clip, 1.0 - spec.clip))
        return lambda x_new: np.full(x_new.shape[0], v)

    if mean in (0.0, 1.0):
        # pure cell: the unpenalized intercept is infinite, so the model is
        # the clipped constant by definition rather than by divergence
        return constant(mean)

    xd = np.column_stack([np.ones(m), x])
    pen = np.full(d + 1, spec.penalty)
    pen[0] = 0.0
    w = np.zeros(d + 1)
    obj = _penalized_deviance(xd @ w, y, w, pen)
    converged = False
    for _ in range(spec.max_iter):
        eta = xd @ w
        p = _sigmoid(eta)
        grad = xd.T @ (y - p) - pen * w
        wts = np.maximum(p * (1.0 - p), 1e-10)
        hess = (xd * wts[:, None]).T @ xd
        hess[np.diag_indices_from(hess)] += pen + 1e-12
        try:
            delta = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            delta = np.linalg.lstsq(hess, grad, rcond=None)[0]
        step = 1.0
        for _ in range(30):
            w_new = w + step * delta
            obj_new = _penalized_deviance(xd @ w_new, y, w_new, pen)
            if obj_new <= obj:
                break
            step *= 0.5
        else:
            w_new, obj_new = w, obj
        moved = float(np.max(np.abs(w_new - w)))
        w, obj = w_new, obj_new
        if moved < spec.tol:
            converged = True
            break
    if not converged:
        warnings.warn(
            f"ridge logistic did not converge in {spec.max_iter} iterations; "
            "falling back to the cell mean", LearnerDivergenceWarning)
        return constant(mean)

    coef = w.copy()

    def predict(x_new: np.ndarray) -> np.ndarray:
        eta = coef[0] + x_new @ coef[1:]
        return np.clip(_sigmoid(eta), spec.clip, 1.0 - spec.clip)

    return predict


def fit_binary(spec: LearnerSpec, x: np.ndarray, y: np.ndarray) -> Predictor:
    """Fit ``spec`` to a 0/1 target and return a probability predictor."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if isinstance(spec, ZeroLearner):
        return lambda x_new: np.zeros(x_new.shape[0])
    if isinstance(spec, RidgeLogistic):
        return _fit_ridge_logistic(spec, x, y)
    if isinstance(spec, GradientBoostedTrees):
        return _fit_gbt(spec, x, y)
    raise TypeError(f"unknown learner spec {spec!r}")
