"""Experiment data model, stratum bookkeeping, and dataset ingestion.

The central type is :class:`ExperimentSample`, an immutable columnar view of a
randomized experiment with imperfect compliance: outcome ``Y``, received
treatment ``D``, assignment ``Z``, stratum ``S``, and optional covariates
``X``.  Stratum labels from input files are re-encoded to dense integer codes
``0..S-1``; the original labels are preserved for reporting.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .exceptions import (
    DegenerateOutcomeError,
    EmptyDatasetError,
    MissingColumnError,
    NonBinaryColumnError,
    NonFiniteValueError,
)


def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ExperimentSample:
    """Validated experiment data with dense stratum codes.

    Attributes
    ----------
    outcome : ndarray of float64, shape (n,)
        Observed outcome Y.
    treatment_received : ndarray of int8, shape (n,)
        Received treatment D, values in {0, 1}.
    assignment : ndarray of int8, shape (n,)
        Random assignment Z, values in {0, 1}.
    stratum : ndarray of int64, shape (n,)
        Dense stratum codes 0..S-1.
    covariates : ndarray of float64, shape (n, d_x)
        Pre-treatment covariates; d_x may be 0.
    stratum_labels : tuple
        Original label for each code; ``stratum_labels[code]`` decodes a row.
    """

    outcome: np.ndarray
    treatment_received: np.ndarray
    assignment: np.ndarray
    stratum: np.ndarray
    covariates: np.ndarray
    stratum_labels: tuple

    def __post_init__(self):
        y = np.asarray(self.outcome, dtype=np.float64)
        d = np.asarray(self.treatment_received)
        z = np.asarray(self.assignment)
        s = np.asarray(self.stratum, dtype=np.int64)
        x = np.asarray(self.covariates, dtype=np.float64)
        n = y.shape[0]
        if n < 1:
            raise EmptyDatasetError("sample must contain at least one row")
        if x.ndim == 1:
            x = x.reshape(n, -1) if x.size else x.reshape(n, 0)
        if not (d.shape == (n,) and z.shape == (n,) and s.shape == (n,) and x.shape[0] == n):
            raise ValueError("all columns must share the same length")
        for name, col in (("treatment_received", d), ("assignment", z)):
            vals = np.unique(col)
            if not np.isin(vals, (0, 1)).all():
                raise NonBinaryColumnError(f"{name} contains values outside {{0, 1}}: {vals!r}")
        if not np.isfinite(y).all():
            raise NonFiniteValueError("outcome contains non-finite values")
        if x.size and not np.isfinite(x).all():
            raise NonFiniteValueError("covariates contain non-finite values")
        n_strata = len(self.stratum_labels)
        if s.min(initial=0) < 0 or (n_strata and s.max(initial=0) >= n_strata):
            raise ValueError("stratum codes must lie in 0..S-1")
        if n_strata and np.bincount(s, minlength=n_strata).min() == 0:
            raise ValueError("every stratum label must map to at least one row")
        object.__setattr__(self, "outcome", _frozen(y))
        object.__setattr__(self, "treatment_received", _frozen(d.astype(np.int8)))
        object.__setattr__(self, "assignment", _frozen(z.astype(np.int8)))
        object.__setattr__(self, "stratum", _frozen(s))
        object.__setattr__(self, "covariates", _frozen(x))
        object.__setattr__(self, "stratum_labels", tuple(self.stratum_labels))

    @property
    def n(self) -> int:
        return self.outcome.shape[0]

    @property
    def d_x(self) -> int:
        return self.covariates.shape[1]

    @property
    def n_strata(self) -> int:
        return len(self.stratum_labels)

    def decoded_strata(self) -> np.ndarray:
        """Original stratum label for every row (inverse of the encoding)."""
        return np.asarray(self.stratum_labels, dtype=object)[self.stratum]


def make_sample(outcome, treatment_received, assignment, stratum,
                covariates=None) -> ExperimentSample:
    """Build an :class:`ExperimentSample` from raw columns.

    ``stratum`` may hold arbitrary hashable labels; they are densely re-encoded
    in sorted label order.  ``covariates`` defaults to an (n, 0) matrix.
    """
    stratum = np.asarray(stratum)
    labels, codes = np.unique(stratum, return_inverse=True)
    n = len(codes)
    if covariates is None:
        covariates = np.empty((n, 0), dtype=np.float64)
    return ExperimentSample(
        outcome=np.asarray(outcome, dtype=np.float64),
        treatment_received=np.asarray(treatment_received),
        assignment=np.asarray(assignment),
        stratum=codes.astype(np.int64),
        covariates=np.asarray(covariates, dtype=np.float64),
        stratum_labels=tuple(labels.tolist()),
    )


@dataclass(frozen=True)
class StratumStats:
    """Per-stratum counts and empirical assignment probabilities.

    ``n_by_arm[s, z]`` counts units with stratum code ``s`` and assignment
    ``z``; ``pi_hat[s, z] = n_by_arm[s, z] / n_total[s]`` and
    ``p_hat[s] = n_total[s] / n``.  ``valid`` is False whenever some
    (stratum, arm) cell is empty, in which case estimation refuses the sample.
    """

    n: int
    n_total: np.ndarray
    n_by_arm: np.ndarray
    pi_hat: np.ndarray
    p_hat: np.ndarray
    valid: bool

    def __post_init__(self):
        object.__setattr__(self, "n_total", _frozen(np.asarray(self.n_total, dtype=np.int64)))
        object.__setattr__(self, "n_by_arm", _frozen(np.asarray(self.n_by_arm, dtype=np.int64)))
        object.__setattr__(self, "pi_hat", _frozen(np.asarray(self.pi_hat, dtype=np.float64)))
        object.__setattr__(self, "p_hat", _frozen(np.asarray(self.p_hat, dtype=np.float64)))


def compute_stratum_stats(sample: ExperimentSample) -> StratumStats:
    """Count units per (stratum, arm) and form the empirical probabilities.

    Counts are exact integers; a degenerate cell (an arm missing from some
    stratum) only clears ``valid`` so that diagnostics remain computable.
    """
    n_strata = sample.n_strata
    z = sample.assignment.astype(np.int64)
    n_by_arm = np.zeros((n_strata, 2), dtype=np.int64)
    np.add.at(n_by_arm, (sample.stratum, z), 1)
    n_total = n_by_arm.sum(axis=1)
    pi_hat = n_by_arm / n_total[:, None]
    p_hat = n_total / sample.n
    return StratumStats(
        n=sample.n,
        n_total=n_total,
        n_by_arm=n_by_arm,
        pi_hat=pi_hat,
        p_hat=p_hat,
        valid=bool((n_by_arm >= 1).all()),
    )


@dataclass(frozen=True)
class ThresholdGrid:
    """Strictly increasing evaluation thresholds y_1 < ... < y_J."""

    thresholds: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.thresholds, dtype=np.float64)
        if t.ndim != 1 or t.size == 0:
            raise ValueError("threshold grid must be a nonempty 1-d vector")
        if not np.isfinite(t).all():
            raise ValueError("threshold grid must be finite")
        if t.size > 1 and not (np.diff(t) > 0).all():
            raise ValueError("threshold grid must be strictly increasing")
        object.__setattr__(self, "thresholds", _frozen(t))

    def __len__(self) -> int:
        return self.thresholds.size


def load_sample(path, schema: Mapping[str, object], delimiter: str = ",") -> ExperimentSample:
    """Read a delimited file into a validated :class:`ExperimentSample`.

    Parameters
    ----------
    path : str or pathlib.Path
        Input file with a header row.
    schema : mapping
        Column-name map with keys ``outcome``, ``treatment``, ``assignment``,
        ``stratum``, and optionally ``covariates`` (a sequence of names).
    delimiter : str
        Field separator, comma by default.

    Raises
    ------
    MissingColumnError, NonBinaryColumnError, NonFiniteValueError,
    EmptyDatasetError
    """
    df = pd.read_csv(path, delimiter=delimiter)
    if df.shape[0] == 0:
        raise EmptyDatasetError(f"{path}: no data rows")
    cov_cols: Sequence[str] = tuple(schema.get("covariates") or ())
    needed = [schema["outcome"], schema["treatment"], schema["assignment"],
              schema["stratum"], *cov_cols]
    missing = [c for c in needed if c not in df.columns]
    if missing:
        raise MissingColumnError(f"{path}: missing column(s) {missing}")

    def _numeric(col, name):
        vals = pd.to_numeric(df[col], errors="coerce").to_numpy(dtype=np.float64)
        if np.isnan(vals).any():
            raise NonFiniteValueError(f"column {col!r} ({name}) has missing or non-numeric entries")
        return vals

    y = _numeric(schema["outcome"], "outcome")
    d = _numeric(schema["treatment"], "treatment received")
    z = _numeric(schema["assignment"], "assignment")
    for name, col in (("treatment received", d), ("assignment", z)):
        if not np.isin(col, (0.0, 1.0)).all():
            raise NonBinaryColumnError(f"{name} column contains values outside {{0, 1}}")
    if cov_cols:
        x = np.column_stack([_numeric(c, "covariate") for c in cov_cols])
    else:
        x = np.empty((len(df), 0), dtype=np.float64)
    return make_sample(y, d.astype(np.int8), z.astype(np.int8),
                       df[schema["stratum"]].to_numpy(), x)


def default_threshold_grid(sample: ExperimentSample, count: int = 9,
                           mode: str = "quantile", cap: float | None = None) -> ThresholdGrid:
    """Build an evaluation grid from the pooled outcome.

    ``mode="quantile"`` takes the nearest-rank ``count``-quantiles of Y at
    levels k/(count+1), k = 1..count, with duplicates removed.
    ``mode="integer"`` takes the sorted distinct outcome values, optionally
    truncated at ``cap`` (inclusive).
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    y = sample.outcome
    if y.min() == y.max():
        raise DegenerateOutcomeError("outcome is constant; no grid can be formed")
    if mode == "integer":
        vals = np.unique(y)
        if cap is not None:
            vals = vals[vals <= cap]
        if vals.size == 0:
            raise DegenerateOutcomeError(f"no outcome values at or below cap {cap}")
        return ThresholdGrid(vals)
    if mode != "quantile":
        raise ValueError(f"unknown grid mode {mode!r}")
    levels = np.arange(1, count + 1) / (count + 1)
    cuts = np.quantile(y, levels, method="inverted_cdf")
    return ThresholdGrid(np.unique(cuts))
