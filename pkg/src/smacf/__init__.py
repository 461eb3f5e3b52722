"""Stability-regularized matrix factorization for collaborative filtering.

Trainers (scikit-learn style estimators with ``fit`` / ``predict`` /
``get_params``):

* :class:`RSVD` -- regularized-SVD rating predictor (SGD baseline).
* :class:`SMARating` -- rating trainer whose loss adds hard-predictable
  entry subsets for better train/test stability.
* :class:`SMATopN` -- binary-grid top-N trainer with per-epoch
  decision-boundary subsets (modes: boundary, random, wma).

Plus MovieLens ingestion and seeded splitting, ranking metrics, an empirical
stability estimator, and an experiment runner with a CLI (``smacf``).
"""

from .config import ExperimentConfig
from .data import (
    RatingTriple,
    SparseRatingMatrix,
    SplitPair,
    binarize,
    load_movielens,
    load_split,
    save_split,
    split_train_test,
    subsample_entries,
)
from .metrics import (
    StabilityEstimate,
    TopNResult,
    evaluate_topn,
    generalization_gap,
    ndcg_at_n,
    precision_at_n,
    stability_estimate,
)
from .model import FactorModel, init_model, rmse
from .rating import RSVD, SMARating, SubsetPlan, build_plan, select_easy_entries, sma_objective
from .report import RunReport
from .runner import run_experiment, run_sparsity_sweep, run_stability, run_sweep
from .seeding import derive_seed
from .synthetic import synthetic_ratings
from .topn import SMATopN, WeightScheme, select_boundary_set, surrogate, weighted_loss
from .validation import ConfigError, DataError, DivergenceError

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataError",
    "DivergenceError",
    "ExperimentConfig",
    "FactorModel",
    "RSVD",
    "RatingTriple",
    "RunReport",
    "SMARating",
    "SMATopN",
    "SparseRatingMatrix",
    "SplitPair",
    "StabilityEstimate",
    "SubsetPlan",
    "TopNResult",
    "WeightScheme",
    "binarize",
    "build_plan",
    "derive_seed",
    "evaluate_topn",
    "generalization_gap",
    "init_model",
    "load_movielens",
    "load_split",
    "ndcg_at_n",
    "precision_at_n",
    "rmse",
    "run_experiment",
    "run_sparsity_sweep",
    "run_stability",
    "run_sweep",
    "save_split",
    "select_boundary_set",
    "select_easy_entries",
    "sma_objective",
    "split_train_test",
    "stability_estimate",
    "subsample_entries",
    "surrogate",
    "synthetic_ratings",
    "weighted_loss",
]
