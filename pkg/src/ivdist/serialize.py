"""Canonical machine-readable output.

JSON artifacts are written with sorted keys and a fixed layout so that
re-reading an output file and re-serializing it reproduces the bytes exactly.
CSV artifacts follow RFC 4180 (CRLF line endings, quoted only when needed).
"""

from __future__ import annotations

import csv
import hashlib
import json
from typing import Optional

import numpy as np

from .estimator import LdteResult
from .inference import ConfidenceBand, VarianceEstimate


def _plain(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def canonical_json(payload: dict) -> str:
    """Serialize with sorted keys; byte-stable under load/dump round trips."""
    return json.dumps(_plain(payload), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(canonical_json(payload))


def write_csv(path, fieldnames, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _plain(v) for k, v in row.items()})


def config_hash(config: dict) -> str:
    """Stable digest of the run configuration (paths excluded by the caller)."""
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()


def estimate_payload(result: LdteResult, band: Optional[ConfidenceBand] = None,
                     variance: Optional[VarianceEstimate] = None,
                     meta: Optional[dict] = None) -> dict:
    """JSON payload for an estimation run: the result plus inference fields."""
    payload = {
        "thresholds": result.thresholds,
        "beta": result.beta,
        "first_stage": result.first_stage,
        "numerator": result.numerator,
        "effect": result.effect,
        "diagnostics": result.diagnostics,
    }
    if variance is not None:
        payload["omega_hat"] = variance.omega_hat
        payload["variance_components"] = variance.components
    if band is not None:
        payload.update({
            "se": band.se,
            "ci_lower": band.lower,
            "ci_upper": band.upper,
            "method": band.method,
            "level": band.level,
            "B": band.draws,
            "rejected_draws": band.rejected_draws,
        })
    if meta is not None:
        payload["meta"] = meta
    return _plain(payload)


def estimate_rows(result: LdteResult, band: Optional[ConfidenceBand] = None) -> list:
    """Flat per-threshold rows for the plot-ready CSV."""
    rows = []
    for j, t in enumerate(result.thresholds):
        row = {"threshold": t, "beta": result.beta[j]}
        if band is not None:
            row.update(se=band.se[j], ci_lower=band.lower[j], ci_upper=band.upper[j])
        rows.append(row)
    return rows
