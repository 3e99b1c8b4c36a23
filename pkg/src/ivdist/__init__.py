"""Distributional treatment effects for randomized experiments with
imperfect compliance under stratified (covariate-adaptive) assignment.

Assignment serves as an instrument for treatment received; effects are
identified for compliers.  The package provides regression-adjusted and
unadjusted estimators over a threshold grid, analytic and bootstrap
inference, stratified randomization schemes, and a Monte Carlo benchmark
harness.  See the ``ivdist`` command-line tool for file-based workflows.
"""

__version__ = "0.1.0"

from .data import (
    ExperimentSample,
    StratumStats,
    ThresholdGrid,
    compute_stratum_stats,
    default_threshold_grid,
    load_sample,
    make_sample,
)
from .estimator import (
    LdteResult,
    XiTerms,
    compute_xi_terms,
    estimate_ldte,
    estimate_lpte,
    estimate_unadjusted,
)
from .inference import (
    ConfidenceBand,
    VarianceEstimate,
    analytic_band,
    analytic_variance,
    bootstrap_band,
    normal_quantile,
)
from .learners import GradientBoostedTrees, RidgeLogistic, ZeroLearner
from .nuisance import NuisanceFit, fit_cross_fitted, fold_assign, predict_interval_mu
from .randomization import (
    EfronBiasedCoin,
    SimpleRandom,
    StratifiedBlock,
    WeiAdaptive,
    assign,
    imbalance_report,
)
from .simulation import (
    DgpConfig,
    GeneratedSample,
    McReport,
    generate,
    ground_truth,
    run_monte_carlo,
)

__all__ = [name for name in dir() if not name.startswith("_")]
