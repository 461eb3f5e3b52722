"""Rating-prediction trainers: the regularized-SVD baseline and its
stability-regularized extension.

The extension augments the usual observed-entry squared loss with extra loss
terms over "hard-predictable" entry subsets. Those subsets are built in three
steps, all seeded and frozen before the first epoch:

1. Score every observed entry against a baseline model; entries whose absolute
   residual is at most the baseline's overall RMSE are "easy". Keep each easy
   entry with probability ``p`` and each hard entry with probability ``1 - p``,
   yielding the selected set.
2. Shuffle the selected set and deal it into ``K`` near-equal parts.
3. For each part, the hard set is the complement of that part within the
   observed entries. Minimizing the mixture of the full-set loss and the K
   hard-set losses pulls the training error toward the unseen-entry error.

Because every hard set is just "all observed entries minus one part", the
combined objective collapses to a per-entry weighted squared loss; the SGD
loop is the baseline loop with precomputed entry weights. Setting all part
weights to zero reproduces the baseline trainer bit for bit.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from ._kernels import rating_epoch
from .data import SparseRatingMatrix
from .model import FactorModel, draw_factors, rmse
from .report import RunReport
from .seeding import BASELINE_STREAM, PARTITION_STREAM, SELECTION_STREAM, derive_seed
from .validation import (
    ConfigError,
    DataError,
    DivergenceError,
    check_positive,
    check_selection_probability,
)


@dataclass(eq=False)
class SubsetPlan:
    """A frozen selection/partition plan over a train matrix's entry positions.

    All index arrays hold positions into the train matrix's entry arrays.
    ``parts`` are pairwise disjoint and union to ``omega_prime``;
    ``hard_sets[k]`` is the complement of ``parts[k]``.
    """

    n_entries: int
    omega_prime: np.ndarray
    parts: list
    hard_sets: list
    lambdas: np.ndarray
    seed: int
    baseline_rmse: float | None = None

    @property
    def n_parts(self) -> int:
        return len(self.parts)

    def entry_weights(self) -> np.ndarray:
        """Per-entry SGD weights for the combined objective.

        Entry weight = lambda_0 + sum over containing hard sets of
        ``lambda_k * |entries| / |hard set k|``; with all part lambdas zero
        this is exactly ``lambda_0`` (the baseline update, unscaled).
        """
        w = np.full(self.n_entries, float(self.lambdas[0]))
        for lam, hard in zip(self.lambdas[1:], self.hard_sets):
            if hard.size == 0:
                warnings.warn("empty hard set contributes no weight", stacklevel=2)
                continue
            w[hard] += float(lam) * self.n_entries / hard.size
        return w

    def describe(self) -> str:
        """Audit listing: sizes, mixture weights, selection seed, baseline error."""
        lines = [
            f"entries={self.n_entries}",
            f"selected={self.omega_prime.size}",
            f"part_sizes={[int(p.size) for p in self.parts]}",
            f"hard_sizes={[int(h.size) for h in self.hard_sets]}",
            f"lambdas={[float(l) for l in self.lambdas]}",
            f"seed={self.seed}",
        ]
        if self.baseline_rmse is not None:
            lines.append(f"baseline_rmse={self.baseline_rmse!r}")
        return "\n".join(lines)


def select_easy_entries(train: SparseRatingMatrix, baseline: FactorModel,
                        p: float, seed: int) -> np.ndarray:
    """Probabilistic selection of easily predicted entries against a baseline.

    An entry is easy when its absolute residual under the baseline is at most
    the baseline's RMSE over all observed entries. Easy entries are kept with
    probability ``p`` (> 0.5), hard ones with probability ``1 - p``. Returns
    sorted entry positions; deterministic for a fixed seed.
    """
    check_selection_probability("p", p)
    if train.nnz == 0:
        raise DataError("cannot select entries from an empty matrix")
    threshold = rmse(baseline, train)
    resid = np.abs(train.vals - baseline.predict_pairs(train.rows, train.cols))
    rho = np.random.default_rng(seed).random(train.nnz)
    include = np.where(resid <= threshold, rho <= p, rho <= 1.0 - p)
    return np.flatnonzero(include)


def build_plan(train: SparseRatingMatrix, omega_prime: np.ndarray, K: int,
               lambdas, seed: int, baseline_rmse: float | None = None) -> SubsetPlan:
    """Deal the selected entries into K parts and derive the hard sets.

    Parts are near-equal (sizes differ by at most one). If there are fewer
    selected entries than parts, the empty parts are dropped with a warning
    and the part lambdas are re-indexed to the surviving parts.
    """
    if K < 1:
        raise ConfigError(f"K must be >= 1, got {K}")
    omega_prime = np.asarray(omega_prime, dtype=np.int64)
    if omega_prime.size:
        if omega_prime.min() < 0 or omega_prime.max() >= train.nnz:
            raise ConfigError("omega_prime positions out of range")
        if np.unique(omega_prime).size != omega_prime.size:
            raise ConfigError("omega_prime positions must be unique")
    lambdas = np.asarray(lambdas, dtype=np.float64)
    if lambdas.shape != (K + 1,):
        raise ConfigError(f"need K+1 = {K + 1} lambdas, got {lambdas.size}")
    if np.any(lambdas < 0):
        raise ConfigError("lambdas must be non-negative")

    rng = np.random.default_rng(seed)
    dealt = np.array_split(rng.permutation(omega_prime), K)
    parts = [np.sort(part) for part in dealt if part.size]
    if len(parts) < K:
        warnings.warn(
            f"only {omega_prime.size} selected entries for K={K}; "
            f"keeping {len(parts)} non-empty parts", stacklevel=2)
        lambdas = np.concatenate([lambdas[:1], lambdas[1:len(parts) + 1]])

    hard_sets = []
    for part in parts:
        mask = np.ones(train.nnz, dtype=bool)
        mask[part] = False
        hard_sets.append(np.flatnonzero(mask))
    return SubsetPlan(train.nnz, np.sort(omega_prime), parts, hard_sets,
                      lambdas, seed, baseline_rmse)


def sma_objective(model: FactorModel, train: SparseRatingMatrix,
                  plan: SubsetPlan, mu1: float, mu2: float) -> float:
    """Combined objective: lambda-weighted mean squared errors plus L2 terms.

    Uses unclamped predictions (this is the quantity SGD actually descends;
    the clamp applies at evaluation time only).
    """
    resid = train.vals - model.predict_pairs(train.rows, train.cols, clamped=False)
    sq = resid * resid
    total = float(plan.lambdas[0]) * float(np.mean(sq))
    for lam, hard in zip(plan.lambdas[1:], plan.hard_sets):
        if hard.size == 0:
            warnings.warn("empty hard set contributes 0 to the objective", stacklevel=2)
            continue
        total += float(lam) * float(np.mean(sq[hard]))
    total += mu1 * float(np.sum(model.U * model.U))
    total += mu2 * float(np.sum(model.V * model.V))
    return total


def _entry_rmse(U, V, offset, clamp, rows, cols, vals):
    """(clamped, raw) RMSE pair; they coincide when no clamp is configured."""
    preds = np.einsum("ij,ij->i", U[rows], V[cols]) + offset
    d_raw = vals - preds
    raw = float(np.sqrt(np.mean(d_raw * d_raw)))
    if clamp is None:
        return raw, raw
    d = vals - np.clip(preds, clamp[0], clamp[1])
    return float(np.sqrt(np.mean(d * d))), raw


def _fit_rating_sgd(train, test, *, rank, lr, mu1, mu2, max_epochs, conv_eps,
                    init_scale, clamp, center, seed, weights, init=None):
    """Shared SGD loop for both rating trainers.

    One epoch visits every observed entry once, in an order drawn from the
    run RNG. Stops early when the train-RMSE delta between consecutive epochs
    falls below ``conv_eps``. Returns (model, epoch rows, convergence epoch).
    """
    m, n = train.m, train.n
    rng = np.random.default_rng(seed)
    if init is not None:
        U = np.array(init[0], dtype=np.float64)
        V = np.array(init[1], dtype=np.float64)
        if U.shape != (m, rank) or V.shape != (n, rank):
            raise ConfigError("init factors have the wrong shape")
    else:
        U, V = draw_factors(rng, m, n, rank, init_scale)

    offset = float(np.mean(train.vals)) if center else 0.0
    target = train.vals - offset
    if weights is None:
        weights = np.ones(train.nnz, dtype=np.float64)

    rows_i32 = np.ascontiguousarray(train.rows, dtype=np.int32)
    cols_i32 = np.ascontiguousarray(train.cols, dtype=np.int32)

    epoch_rows = []
    convergence_epoch = None
    prev = None
    armed = False
    for epoch in range(1, max_epochs + 1):
        order = rng.permutation(train.nnz)
        rating_epoch(U, V, rows_i32, cols_i32, target, weights, order,
                     float(lr), float(mu1), float(mu2))
        train_rmse, raw_rmse = _entry_rmse(U, V, offset, clamp,
                                           train.rows, train.cols, train.vals)
        if not np.isfinite(raw_rmse):
            raise DivergenceError(epoch, "train RMSE")
        row = {"epoch": epoch, "train_rmse": train_rmse}
        if test is not None:
            row["test_rmse"] = _entry_rmse(U, V, offset, clamp,
                                           test.rows, test.cols, test.vals)[0]
        epoch_rows.append(row)
        # Stopping rule on the raw (unclamped) error: the clamp can pin early
        # reported RMSE at a boundary while SGD is still moving. The delta test
        # arms only after one epoch improved by more than conv_eps, because
        # small symmetric init gives SGD a flat cold start whose first deltas
        # would otherwise trip the threshold immediately.
        if prev is not None:
            delta = prev - raw_rmse
            if delta > conv_eps:
                armed = True
            elif armed and abs(delta) < conv_eps:
                convergence_epoch = epoch
                break
        prev = raw_rmse

    model = FactorModel(U, V, clamp=clamp, offset=offset, seed=seed)
    return model, epoch_rows, convergence_epoch


class RSVD(BaseEstimator):
    """Regularized-SVD rating predictor trained by SGD over observed entries.

    Parameters follow the usual SGD matrix-factorization recipe: ``rank``
    latent features, learning rate ``lr``, L2 coefficients ``mu1``/``mu2`` for
    the user and item factors, at most ``max_epochs`` passes with early stop
    once the train-RMSE delta drops below ``conv_eps``. ``clamp`` bounds
    predictions at evaluation time (never inside the gradient); ``center``
    optionally removes the global mean before factorizing.
    """

    trainer_name = "rsvd"

    def __init__(self, rank=20, lr=0.001, mu1=0.06, mu2=0.06, max_epochs=250,
                 conv_eps=1e-4, init_scale=0.01, clamp=None, center=False, seed=0):
        self.rank = rank
        self.lr = lr
        self.mu1 = mu1
        self.mu2 = mu2
        self.max_epochs = max_epochs
        self.conv_eps = conv_eps
        self.init_scale = init_scale
        self.clamp = clamp
        self.center = center
        self.seed = seed

    def _check_params(self):
        check_positive("rank", self.rank)
        check_positive("lr", self.lr)
        check_positive("mu1", self.mu1, strict=False)
        check_positive("mu2", self.mu2, strict=False)
        check_positive("max_epochs", self.max_epochs)
        check_positive("conv_eps", self.conv_eps, strict=False)
        check_positive("init_scale", self.init_scale, strict=False)
        if self.clamp is not None and self.clamp[0] > self.clamp[1]:
            raise ConfigError(f"clamp low {self.clamp[0]} exceeds high {self.clamp[1]}")

    def _base_kwargs(self):
        return dict(rank=self.rank, lr=self.lr, mu1=self.mu1, mu2=self.mu2,
                    max_epochs=self.max_epochs, conv_eps=self.conv_eps,
                    init_scale=self.init_scale, clamp=self.clamp,
                    center=self.center, seed=self.seed)

    def _config_echo(self):
        echo = {"trainer": self.trainer_name}
        for key, value in self.get_params().items():
            if isinstance(value, tuple):
                value = list(value)
            elif isinstance(value, np.ndarray):
                value = value.tolist()
            elif isinstance(value, (FactorModel,)):
                value = f"<model {value.m}x{value.n} rank={value.rank}>"
            echo[key] = value
        return echo

    def _finalize(self, model, train, test, epoch_rows, convergence_epoch):
        final = {"train_rmse": rmse(model, train)}
        if test is not None:
            final["test_rmse"] = rmse(model, test)
        self.model_ = model
        self.n_epochs_ = len(epoch_rows)
        self.report_ = RunReport(
            config=self._config_echo(), seed=self.seed, epochs=epoch_rows,
            final_metrics=final, convergence_epoch=convergence_epoch)
        return self

    def fit(self, train: SparseRatingMatrix, test: SparseRatingMatrix | None = None,
            init=None):
        """Fit on the observed entries; records per-epoch RMSE in ``report_``."""
        self._check_params()
        if train.nnz == 0:
            raise DataError("cannot train on an empty matrix")
        model, epoch_rows, conv = _fit_rating_sgd(
            train, test, weights=None, init=init, **self._base_kwargs())
        return self._finalize(model, train, test, epoch_rows, conv)

    def predict(self, users, items):
        """Clamped predictions for parallel user/item index arrays."""
        if not hasattr(self, "model_"):
            raise RuntimeError("estimator is not fitted")
        return self.model_.predict_pairs(users, items)


class SMARating(RSVD):
    """Stability-regularized rating trainer.

    Fits a baseline (or uses the one provided), selects easy entries with
    probability ``p``, partitions them into ``K`` parts, and descends the
    combined objective over the full entry set plus the K hard sets. The plan
    is computed once before epoch 1 and frozen. ``lambdas`` holds the K+1
    mixture weights (position 0 is the full-set weight); ``None`` means equal
    weights ``1 / (K + 1)``.

    The baseline, the selection draws, and the partition shuffle each use
    their own seed stream derived from ``seed``, so the main SGD stream is
    identical to :class:`RSVD`'s; with all part lambdas zero the two trainers
    produce bitwise-identical models.
    """

    trainer_name = "sma_rating"

    def __init__(self, rank=20, lr=0.001, mu1=0.06, mu2=0.06, max_epochs=250,
                 conv_eps=1e-4, init_scale=0.01, clamp=None, center=False, seed=0,
                 K=3, p=0.8, lambdas=None, baseline=None):
        super().__init__(rank=rank, lr=lr, mu1=mu1, mu2=mu2, max_epochs=max_epochs,
                         conv_eps=conv_eps, init_scale=init_scale, clamp=clamp,
                         center=center, seed=seed)
        self.K = K
        self.p = p
        self.lambdas = lambdas
        self.baseline = baseline

    def _resolve_lambdas(self):
        if self.lambdas is None:
            return np.full(self.K + 1, 1.0 / (self.K + 1))
        lam = np.asarray(self.lambdas, dtype=np.float64)
        if lam.shape != (self.K + 1,):
            raise ConfigError(f"lambdas must have K+1 = {self.K + 1} entries, got {lam.size}")
        return lam

    def fit(self, train: SparseRatingMatrix, test: SparseRatingMatrix | None = None,
            init=None):
        self._check_params()
        if self.K < 1:
            raise ConfigError(f"K must be >= 1, got {self.K}")
        check_selection_probability("p", self.p)
        if train.nnz == 0:
            raise DataError("cannot train on an empty matrix")
        lambdas = self._resolve_lambdas()

        baseline = self.baseline
        if baseline is None:
            base = RSVD(**{**self._base_kwargs(), "seed": derive_seed(self.seed, BASELINE_STREAM)})
            baseline = base.fit(train).model_
        selected = select_easy_entries(train, baseline, self.p,
                                       derive_seed(self.seed, SELECTION_STREAM))
        plan = build_plan(train, selected, self.K, lambdas,
                          derive_seed(self.seed, PARTITION_STREAM),
                          baseline_rmse=rmse(baseline, train))
        weights = plan.entry_weights()

        model, epoch_rows, conv = _fit_rating_sgd(
            train, test, weights=weights, init=init, **self._base_kwargs())
        self.baseline_ = baseline
        self.plan_ = plan
        return self._finalize(model, train, test, epoch_rows, conv)
