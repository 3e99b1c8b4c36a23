import json
from pathlib import Path

import numpy as np
import pytest

from ivdist import (
    ThresholdGrid,
    ZeroLearner,
    compute_stratum_stats,
    fit_cross_fitted,
    load_sample,
)
from ivdist.nuisance import NuisanceFit

GOLDEN = Path(__file__).parent / "golden"

SIXROW_SCHEMA = {"outcome": "y", "treatment": "d", "assignment": "z",
                 "stratum": "s", "covariates": ["x"]}


@pytest.fixture(scope="session")
def sixrow_sample():
    return load_sample(GOLDEN / "sixrow.csv", SIXROW_SCHEMA)


@pytest.fixture(scope="session")
def sixrow_expected():
    return json.loads((GOLDEN / "sixrow_expected.json").read_text())


@pytest.fixture(scope="session")
def sixrow_grid(sixrow_expected):
    return ThresholdGrid(np.asarray(sixrow_expected["thresholds"]))


@pytest.fixture(scope="session")
def sixrow_stats(sixrow_sample):
    return compute_stratum_stats(sixrow_sample)


@pytest.fixture(scope="session")
def sixrow_zero_fit(sixrow_sample, sixrow_grid):
    return fit_cross_fitted(sixrow_sample, sixrow_grid, ZeroLearner())


@pytest.fixture(scope="session")
def sixrow_hand_fit(sixrow_sample, sixrow_expected):
    mu = np.asarray([sixrow_expected["hand_set_mu"]["0"],
                     sixrow_expected["hand_set_mu"]["1"]])
    eta = np.asarray([sixrow_expected["hand_set_eta"]["0"],
                      sixrow_expected["hand_set_eta"]["1"]])
    return NuisanceFit(mu_hat=mu, eta_hat=eta,
                       fold_of=np.zeros(sixrow_sample.n, dtype=np.int64),
                       spec=ZeroLearner(), n_folds=1, pooled=False, train_sizes={})
