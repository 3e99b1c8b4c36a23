"""Stratified assignment schemes for experiment-design dry runs and simulation.

Every scheme draws assignments stratum by stratum from an independent
substream seeded by ``(seed, stratum)``, so results are reproducible and do
not depend on how strata are interleaved in the input.  Sequential schemes
(biased coin, adaptive urn) see only their own stratum's history, in order of
appearance.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

from .exceptions import InvalidBlockSizeError, LengthMismatchError, UnknownStratumError

Target = Union[float, Mapping]


@dataclass(frozen=True)
class SimpleRandom:
    """Independent Bernoulli(pi_1(s)) assignment within each stratum."""

    target: Target = 0.5


@dataclass(frozen=True)
class StratifiedBlock:
    """Permuted-block randomization within strata.

    Every complete block of ``block_size`` consecutive units in a stratum
    contains exactly ``block_size * pi_1(s)`` treated units; a trailing
    incomplete block falls back to simple randomization at rate pi_1(s).
    """

    block_size: int
    target: Target = 0.5


@dataclass(frozen=True)
class EfronBiasedCoin:
    """Efron's biased coin for pi_1 = 1/2.

    When past treated exceed past controls within the stratum the next unit is
    treated with probability ``1 - bias``; when they trail, with probability
    ``bias``; ties flip a fair coin.  Strata with a target other than 1/2 fall
    back to simple randomization with a warning.
    """

    bias: float = 2.0 / 3.0
    target: Target = 0.5

    def __post_init__(self):
        if not 0.5 < self.bias <= 1.0:
            raise ValueError("bias must lie in (1/2, 1]")


@dataclass(frozen=True)
class WeiAdaptive:
    """Wei's adaptive urn for pi_1 = 1/2.

    The k-th unit of a stratum is treated with probability
    ``clip((1 - imbalance/(k-1)) / 2, 0, 1)`` where ``imbalance`` is
    (treated - control) among the k-1 earlier units; the first unit flips a
    fair coin.  Targets other than 1/2 fall back to simple randomization with
    a warning.
    """

    target: Target = 0.5


CarScheme = Union[SimpleRandom, StratifiedBlock, EfronBiasedCoin, WeiAdaptive]


@dataclass(frozen=True)
class ImbalanceRow:
    """One stratum's row of an imbalance report."""

    stratum: object
    n: int
    n_treated: int
    pi_hat: float
    target: float
    deviation: float


def _target_for(scheme: CarScheme, label) -> float:
    t = scheme.target
    if isinstance(t, Mapping):
        if label not in t:
            raise UnknownStratumError(f"no target probability for stratum {label!r}")
        p = float(t[label])
    else:
        p = float(t)
    if not 0.0 < p < 1.0:
        raise ValueError(f"target probability for stratum {label!r} must lie in (0, 1)")
    return p


def _stratum_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def _assign_block(rng, m: int, block_size: int, pi1: float) -> np.ndarray:
    treated_per_block = block_size * pi1
    if block_size < 2 or abs(treated_per_block - round(treated_per_block)) > 1e-9:
        raise InvalidBlockSizeError(
            f"block_size {block_size} with target {pi1} does not yield an integer block count")
    k = int(round(treated_per_block))
    out = np.empty(m, dtype=np.int8)
    full = m // block_size
    for b in range(full):
        block = np.zeros(block_size, dtype=np.int8)
        block[:k] = 1
        rng.shuffle(block)
        out[b * block_size:(b + 1) * block_size] = block
    tail = m - full * block_size
    if tail:
        out[full * block_size:] = rng.random(tail) < pi1
    return out


def _assign_efron(rng, m: int, bias: float) -> np.ndarray:
    out = np.empty(m, dtype=np.int8)
    imbalance = 0  # treated minus control so far
    for i in range(m):
        if imbalance > 0:
            p = 1.0 - bias
        elif imbalance < 0:
            p = bias
        else:
            p = 0.5
        out[i] = rng.random() < p
        imbalance += 2 * int(out[i]) - 1
    return out


def _assign_wei(rng, m: int) -> np.ndarray:
    out = np.empty(m, dtype=np.int8)
    imbalance = 0
    for i in range(m):
        p = 0.5 if i == 0 else min(max((1.0 - imbalance / i) / 2.0, 0.0), 1.0)
        out[i] = rng.random() < p
        imbalance += 2 * int(out[i]) - 1
    return out


def assign(scheme: CarScheme, strata, seed: int) -> np.ndarray:
    """Draw a 0/1 assignment vector for ``strata`` under ``scheme``.

    Deterministic given (scheme, strata order, seed).  ``strata`` may hold
    arbitrary labels; each distinct label gets its own substream.
    """
    strata = np.asarray(strata)
    labels, codes = np.unique(strata, return_inverse=True)
    out = np.zeros(strata.shape[0], dtype=np.int8)
    for idx, label in enumerate(labels):
        pi1 = _target_for(scheme, label)
        rows = np.flatnonzero(codes == idx)  # order of appearance
        rng = _stratum_rng(seed, idx)
        m = rows.size
        if isinstance(scheme, StratifiedBlock):
            draws = _assign_block(rng, m, scheme.block_size, pi1)
        elif isinstance(scheme, EfronBiasedCoin):
            if pi1 != 0.5:
                warnings.warn(
                    f"Efron's coin is defined for target 1/2; stratum {label!r} "
                    f"(target {pi1}) uses simple randomization instead")
                draws = (rng.random(m) < pi1).astype(np.int8)
            else:
                draws = _assign_efron(rng, m, scheme.bias)
        elif isinstance(scheme, WeiAdaptive):
            if pi1 != 0.5:
                warnings.warn(
                    f"Wei's urn is defined for target 1/2; stratum {label!r} "
                    f"(target {pi1}) uses simple randomization instead")
                draws = (rng.random(m) < pi1).astype(np.int8)
            else:
                draws = _assign_wei(rng, m)
        elif isinstance(scheme, SimpleRandom):
            draws = (rng.random(m) < pi1).astype(np.int8)
        else:
            raise TypeError(f"unknown scheme {scheme!r}")
        out[rows] = draws
    return out


def imbalance_report(assignment, strata, target: Target | CarScheme = 0.5) -> list[ImbalanceRow]:
    """Tabulate per-stratum treated shares against their targets.

    Returns one :class:`ImbalanceRow` per stratum in sorted label order with
    the realized share ``pi_hat`` and the deviation ``pi_hat - target``.
    """
    assignment = np.asarray(assignment)
    strata = np.asarray(strata)
    if assignment.shape[0] != strata.shape[0]:
        raise LengthMismatchError(
            f"assignment has {assignment.shape[0]} rows but strata has {strata.shape[0]}")
    scheme = target if isinstance(target, (SimpleRandom, StratifiedBlock,
                                           EfronBiasedCoin, WeiAdaptive)) else SimpleRandom(target)
    labels, codes = np.unique(strata, return_inverse=True)
    rows = []
    for idx, label in enumerate(labels):
        mask = codes == idx
        n = int(mask.sum())
        n1 = int(assignment[mask].sum())
        pi1 = _target_for(scheme, label)
        rows.append(ImbalanceRow(
            stratum=label, n=n, n_treated=n1,
            pi_hat=n1 / n, target=pi1, deviation=n1 / n - pi1))
    return rows
