"""Evaluation: top-N ranking metrics, generalization gap, empirical stability.

Ranking protocol: for each user with at least one test item, every item the
user did not rate in training is a candidate. Candidates are ranked by
predicted score, descending, with exact ties broken by ascending item index
so results do not depend on entry order. Precision@N divides by N even when a
user has fewer than N candidates (such users are counted separately); NDCG@N
normalizes by the ideal ranking of min(N, |test items|) relevant items.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import clone

from .data import SparseRatingMatrix, split_train_test
from .model import FactorModel
from .seeding import derive_seed
from .validation import ConfigError, DataError, DivergenceError, check_positive


@dataclass
class TopNResult:
    """Per-user recommendations plus the aggregated ranking metrics."""

    n: int
    precision_at: float
    ndcg_at: float
    users_evaluated: int
    users_skipped: int  # had test items but no unrated candidates
    users_short: int    # had fewer than n candidates (denominator stays n)
    per_user: list = field(default_factory=list)  # (user, recommended, hits)


def _ideal_dcg(n_relevant: int, n: int) -> float:
    return sum(1.0 / math.log2(i + 1) for i in range(1, min(n, n_relevant) + 1))


def evaluate_topn(model: FactorModel, train: SparseRatingMatrix,
                  test: SparseRatingMatrix, n: int) -> TopNResult:
    """Rank against held-out positives; computes Precision@n and NDCG@n at once."""
    check_positive("n", n)
    if test.nnz == 0:
        raise DataError("cannot evaluate on an empty test set")
    if train.m != test.m or train.n != test.n:
        raise DataError("train and test matrices must share dimensions")
    n_items = train.n
    tr_ptr, tr_items, _ = train.grouped_by_user()
    te_ptr, te_items, _ = test.grouped_by_user()
    scores = model.scores()
    item_order = np.arange(n_items)

    per_user = []
    precisions = []
    ndcgs = []
    skipped = 0
    short = 0
    for u in range(train.m):
        relevant = te_items[te_ptr[u]:te_ptr[u + 1]]
        if relevant.size == 0:
            continue
        rated = tr_items[tr_ptr[u]:tr_ptr[u + 1]]
        n_candidates = n_items - rated.size
        if n_candidates == 0:
            skipped += 1
            continue
        if n_candidates < n:
            short += 1
        s = scores[u].copy()
        s[rated] = -np.inf
        ranked = np.lexsort((item_order, -s))
        recommended = ranked[:min(n, n_candidates)]
        rel = np.isin(recommended, relevant)
        hits = int(rel.sum())
        dcg = float(np.sum((2.0 ** rel.astype(np.float64) - 1.0)
                           / np.log2(np.arange(2, recommended.size + 2))))
        ndcgs.append(dcg / _ideal_dcg(relevant.size, n))
        precisions.append(hits / n)
        per_user.append((u, recommended, hits))

    if not per_user:
        raise DataError("no evaluable users (every test user rated every item)")
    return TopNResult(
        n=n,
        precision_at=float(np.mean(precisions)),
        ndcg_at=float(np.mean(ndcgs)),
        users_evaluated=len(per_user),
        users_skipped=skipped,
        users_short=short,
        per_user=per_user,
    )


def precision_at_n(model, train, test, n: int) -> TopNResult:
    """Mean fraction of the top-n recommendations that are held-out positives."""
    return evaluate_topn(model, train, test, n)


def ndcg_at_n(model, train, test, n: int) -> TopNResult:
    """Mean position-discounted gain, normalized by the ideal ranking."""
    return evaluate_topn(model, train, test, n)


def generalization_gap(report, metric: str | None = None) -> float:
    """|final test metric - final train metric| from a run report.

    ``metric`` is the suffix shared by the ``train_``/``test_`` keys (for
    example ``rmse`` or ``precision_at_10``); by default the rating-task RMSE
    pair is used if present, else the precision pair.
    """
    fm = report.final_metrics
    if metric is None:
        candidates = [k[len("train_"):] for k in fm if k.startswith("train_")
                      and f"test_{k[len('train_'):]}" in fm]
        if not candidates:
            raise DataError("report has no matching train/test metric pair")
        metric = "rmse" if "rmse" in candidates else candidates[0]
    try:
        return abs(fm[f"test_{metric}"] - fm[f"train_{metric}"])
    except KeyError:
        raise DataError(f"report lacks train/test values for metric {metric!r}") from None


@dataclass
class StabilityEstimate:
    """Empirical estimate of how often the train/test error gap stays small.

    ``probability`` is the fraction of independent runs whose
    |test RMSE - train RMSE| fell strictly below ``epsilon``; higher means
    the training error is a more reliable proxy for unseen-entry error.
    """

    epsilon: float
    n_runs: int
    successes: int
    probability: float
    per_run_gaps: list
    runs: list = field(default_factory=list)  # dict rows for the CSV
    diverged: int = 0

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(
                fh, fieldnames=["run_index", "seed", "train_rmse", "test_rmse", "gap"])
            writer.writeheader()
            writer.writerows(self.runs)


def stability_estimate(data: SparseRatingMatrix, trainer, epsilon: float,
                       n_runs: int, seed: int, ratio: float = 0.9) -> StabilityEstimate:
    """Measure gap concentration over repeated fresh splits of the data.

    Each run t gets seed ``derive_seed(seed, t)``, used for both the split and
    the (cloned) trainer, so the whole estimate is reproducible from ``seed``
    alone. Diverged runs count as failures with an infinite gap.
    """
    if n_runs < 2:
        raise ConfigError(f"n_runs must be >= 2, got {n_runs}")
    if epsilon < 0:
        raise ConfigError(f"epsilon must be >= 0, got {epsilon}")
    gaps = []
    rows = []
    diverged = 0
    for t in range(n_runs):
        run_seed = derive_seed(seed, t)
        pair = split_train_test(data, ratio, run_seed)
        estimator = clone(trainer)
        estimator.set_params(seed=run_seed)
        try:
            estimator.fit(pair.train, pair.test)
            fm = estimator.report_.final_metrics
            if "train_rmse" not in fm or "test_rmse" not in fm:
                raise ConfigError("stability estimation needs a rating trainer "
                                  "reporting train/test RMSE")
            train_rmse, test_rmse = fm["train_rmse"], fm["test_rmse"]
            gap = abs(test_rmse - train_rmse)
        except DivergenceError:
            train_rmse = test_rmse = float("nan")
            gap = float("inf")
            diverged += 1
        gaps.append(gap)
        rows.append({"run_index": t, "seed": run_seed, "train_rmse": train_rmse,
                     "test_rmse": test_rmse, "gap": gap})
    successes = sum(1 for g in gaps if g < epsilon)
    return StabilityEstimate(
        epsilon=epsilon, n_runs=n_runs, successes=successes,
        probability=successes / n_runs, per_run_gaps=gaps, runs=rows,
        diverged=diverged)
