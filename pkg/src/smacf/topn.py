"""Top-N trainers over the full binary grid.

Observed entries are the +1 cells; every other cell of the m x n grid is
treated as -1 during training (the task is "will this user rate this item").
The objective is a weighted surrogate loss (squared, log, or exponential in
the margin) over the whole grid, optionally augmented with a second loss term
over a per-epoch subset:

* ``boundary`` mode picks the cells whose current prediction lies inside
  ``[-gamma, gamma]``, i.e. the cells the model is least sure about;
* ``random`` mode picks a uniform random subset of the same size the boundary
  rule selected on epoch 1 (an ablation isolating the selection strategy);
* ``wma`` mode adds nothing (plain weighted matrix approximation).

Positive cells get weight ``w_pos`` and negative cells ``w_neg`` to counter
the extreme class imbalance of implicit-feedback data.
"""

from __future__ import annotations

import warnings

import numpy as np
from sklearn.base import BaseEstimator

from ._kernels import EXP_CLAMP, LOSS_EXP, LOSS_LOG, LOSS_MSE, topn_epoch
from .data import SparseRatingMatrix
from .model import FactorModel, draw_factors
from .report import RunReport
from .seeding import SELECTION_STREAM, derive_seed
from .validation import (
    ConfigError,
    DataError,
    DivergenceError,
    check_choice,
    check_positive,
)

LOSS_CODES = {"mse": LOSS_MSE, "log": LOSS_LOG, "exp": LOSS_EXP}
MODES = ("boundary", "random", "wma")


def surrogate(kind: str, rhat, r):
    """Value and d(value)/d(rhat) of a surrogate loss at prediction ``rhat``.

    ``r`` is the binary label in {+1, -1}. Kinds: ``mse`` is the squared error
    ``(rhat - r)^2``; ``log`` is ``log(1 + exp(-rhat * r))``; ``exp`` is
    ``exp(-rhat * r)`` with the exponent clamped at ``EXP_CLAMP`` so extreme
    early-training predictions stay finite.
    """
    check_choice("loss", kind, LOSS_CODES)
    rhat = np.asarray(rhat, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    x = -rhat * r
    if kind == "mse":
        value = (rhat - r) ** 2
        grad = 2.0 * (rhat - r)
    elif kind == "log":
        value = np.logaddexp(0.0, x)
        grad = -r / (1.0 + np.exp(-x))
    else:
        value = np.exp(np.minimum(x, EXP_CLAMP))
        grad = -r * value
    return value, grad


class WeightScheme:
    """Per-label loss weights for the imbalanced binary task."""

    def __init__(self, w_pos: float = 1.0, w_neg: float = 0.03):
        check_positive("w_pos", w_pos)
        check_positive("w_neg", w_neg)
        self.w_pos = float(w_pos)
        self.w_neg = float(w_neg)

    def __repr__(self):
        return f"WeightScheme(w_pos={self.w_pos}, w_neg={self.w_neg})"


def positive_grid(matrix: SparseRatingMatrix) -> np.ndarray:
    """Dense uint8 grid marking the +1 cells; rejects non-binarized input."""
    if matrix.nnz and not np.all(matrix.vals == 1.0):
        raise DataError("top-N training expects a binarized matrix (all values +1)")
    grid = np.zeros((matrix.m, matrix.n), dtype=np.uint8)
    grid[matrix.rows, matrix.cols] = 1
    return grid


def weighted_loss(model: FactorModel, positives: SparseRatingMatrix,
                  weights: WeightScheme, kind: str = "exp",
                  cells: np.ndarray | None = None) -> float:
    """Mean weighted surrogate loss over grid cells.

    With ``cells=None`` the mean runs over the full m x n grid (positives from
    the matrix, everything else -1); otherwise over the given flattened cell
    ids. Builds dense m x n scratch arrays, so it is meant for datasets that
    fit in memory, not web-scale ones.
    """
    obs = positive_grid(positives)
    if cells is None:
        scores = model.scores()
        labels = np.where(obs, 1.0, -1.0)
        w = np.where(obs, weights.w_pos, weights.w_neg)
        value, _ = surrogate(kind, scores, labels)
        return float(np.mean(w * value))
    cells = np.asarray(cells, dtype=np.int64)
    if cells.size == 0:
        raise DataError("weighted loss over an empty cell set is undefined")
    i, j = np.divmod(cells, positives.n)
    preds = model.predict_pairs(i, j, clamped=False)
    labels = np.where(obs[i, j], 1.0, -1.0)
    w = np.where(obs[i, j], weights.w_pos, weights.w_neg)
    value, _ = surrogate(kind, preds, labels)
    return float(np.mean(w * value))


def select_boundary_set(model: FactorModel, gamma: float) -> np.ndarray:
    """Flattened ids of all grid cells predicted inside [-gamma, gamma].

    The interval is closed, so gamma = 0 selects exactly the cells predicted
    0. Returns row-major flat ids (cell = i * n + j).
    """
    if gamma < 0:
        raise ConfigError(f"gamma must be >= 0, got {gamma}")
    scores = model.scores()
    return np.flatnonzero(np.abs(scores) <= gamma).astype(np.int64)


def _grid_loss(scores, obs, w_pos, w_neg, kind):
    labels = np.where(obs, 1.0, -1.0)
    w = np.where(obs, w_pos, w_neg)
    value, _ = surrogate(kind, scores, labels)
    return float(np.mean(w * value))


class SMATopN(BaseEstimator):
    """Top-N recommender trained by SGD over the full binary grid.

    One epoch visits all m*n cells once in a seeded shuffled order. The
    stability subset is refreshed from the previous epoch's predictions at
    the start of every epoch, per ``mode`` (see module docstring). Cells in
    the subset get gradient weight ``lambda0 + lambda1 * mn / |subset|`` on
    top of their label weight; others get ``lambda0``. With ``lambda1 = 0``
    (or in ``wma`` mode) this is plain weighted matrix approximation.

    ``eval_every > 0`` adds test Precision@``eval_n`` to every that-many-th
    epoch row; it costs a full ranking pass, so it defaults to off.
    """

    trainer_name = "sma_topn"

    def __init__(self, rank=100, lr=0.001, mu1=0.001, mu2=0.001, max_epochs=2000,
                 conv_eps=1e-4, init_scale=0.01, seed=0, loss="exp",
                 w_pos=1.0, w_neg=0.03, gamma=0.3, lambda0=1.0, lambda1=1.0,
                 mode="boundary", eval_every=0, eval_n=10):
        self.rank = rank
        self.lr = lr
        self.mu1 = mu1
        self.mu2 = mu2
        self.max_epochs = max_epochs
        self.conv_eps = conv_eps
        self.init_scale = init_scale
        self.seed = seed
        self.loss = loss
        self.w_pos = w_pos
        self.w_neg = w_neg
        self.gamma = gamma
        self.lambda0 = lambda0
        self.lambda1 = lambda1
        self.mode = mode
        self.eval_every = eval_every
        self.eval_n = eval_n

    def _check_params(self):
        check_positive("rank", self.rank)
        check_positive("lr", self.lr)
        check_positive("mu1", self.mu1, strict=False)
        check_positive("mu2", self.mu2, strict=False)
        check_positive("max_epochs", self.max_epochs)
        check_positive("conv_eps", self.conv_eps, strict=False)
        check_positive("init_scale", self.init_scale, strict=False)
        check_choice("loss", self.loss, LOSS_CODES)
        check_choice("mode", self.mode, MODES)
        check_positive("w_pos", self.w_pos)
        check_positive("w_neg", self.w_neg)
        check_positive("lambda0", self.lambda0)
        # lambda1 = 0 is the documented reduction to plain weighted MA.
        check_positive("lambda1", self.lambda1, strict=False)
        if self.gamma < 0:
            raise ConfigError(f"gamma must be >= 0, got {self.gamma}")
        check_positive("eval_n", self.eval_n)

    def _config_echo(self):
        echo = {"trainer": self.trainer_name}
        echo.update(self.get_params())
        return echo

    def fit(self, train: SparseRatingMatrix, test: SparseRatingMatrix | None = None,
            init=None):
        """Fit on a binarized matrix (positives +1, the rest implicit -1)."""
        self._check_params()
        if train.nnz == 0:
            raise DataError("cannot train on an empty matrix")
        m, n = train.m, train.n
        mn = m * n
        obs = positive_grid(train)
        loss_code = LOSS_CODES[self.loss]

        rng = np.random.default_rng(self.seed)
        sel_rng = np.random.default_rng(derive_seed(self.seed, SELECTION_STREAM))
        if init is not None:
            U = np.array(init[0], dtype=np.float64)
            V = np.array(init[1], dtype=np.float64)
            if U.shape != (m, self.rank) or V.shape != (n, self.rank):
                raise ConfigError("init factors have the wrong shape")
        else:
            U, V = draw_factors(rng, m, n, self.rank, self.init_scale)

        selected = np.zeros((m, n), dtype=np.uint8)
        scores = U @ V.T
        n_target = None

        epoch_rows = []
        convergence_epoch = None
        prev = None
        armed = False
        for epoch in range(1, self.max_epochs + 1):
            if self.mode == "boundary":
                mask = np.abs(scores) <= self.gamma
                selected = mask.astype(np.uint8)
                count = int(mask.sum())
            elif self.mode == "random":
                if n_target is None:
                    # match the boundary rule's epoch-1 size so the ablation
                    # isolates the selection strategy, not the subset size
                    n_target = int((np.abs(scores) <= self.gamma).sum())
                selected = np.zeros((m, n), dtype=np.uint8)
                if n_target:
                    flat = sel_rng.permutation(mn)[:n_target]
                    selected.ravel()[flat] = 1
                count = n_target
            else:
                count = 0
            if count == 0 and self.mode != "wma":
                # static message so the default filter reports it once per run
                warnings.warn("empty stability subset, extra loss term skipped",
                              stacklevel=2)
            bonus = self.lambda1 * mn / count if (count and self.mode != "wma") else 0.0

            order = rng.permutation(mn)
            topn_epoch(U, V, obs, selected, float(bonus), order, loss_code,
                       float(self.w_pos), float(self.w_neg), float(self.lambda0),
                       float(self.lr), float(self.mu1), float(self.mu2))

            scores = U @ V.T
            if not np.isfinite(scores).all():
                raise DivergenceError(epoch, "predictions")
            train_loss = _grid_loss(scores, obs, self.w_pos, self.w_neg, self.loss)
            if not np.isfinite(train_loss):
                raise DivergenceError(epoch, "train loss")
            row = {
                "epoch": epoch,
                "train_loss": train_loss,
                "selected": count,
                "selected_frac": count / mn,
            }
            if self.eval_every and test is not None and epoch % self.eval_every == 0:
                from .metrics import evaluate_topn
                snap = FactorModel(U, V, seed=self.seed)
                row[f"test_precision_at_{self.eval_n}"] = evaluate_topn(
                    snap, train, test, self.eval_n).precision_at
            epoch_rows.append(row)
            # same armed delta rule as the rating loop: ignore the flat
            # cold-start epochs, stop once progress stalls after moving
            if prev is not None:
                delta = prev - train_loss
                if delta > self.conv_eps:
                    armed = True
                elif armed and abs(delta) < self.conv_eps:
                    convergence_epoch = epoch
                    break
            prev = train_loss

        model = FactorModel(U, V, seed=self.seed)
        weights = WeightScheme(self.w_pos, self.w_neg)
        final = {"train_loss": weighted_loss(model, train, weights, self.loss)}
        if test is not None:
            from .metrics import evaluate_topn
            result = evaluate_topn(model, train, test, self.eval_n)
            final[f"test_precision_at_{self.eval_n}"] = result.precision_at
            final[f"test_ndcg_at_{self.eval_n}"] = result.ndcg_at
        self.model_ = model
        self.n_epochs_ = len(epoch_rows)
        self.report_ = RunReport(
            config=self._config_echo(), seed=self.seed, epochs=epoch_rows,
            final_metrics=final, convergence_epoch=convergence_epoch)
        return self

    def predict(self, users, items):
        """Raw preference scores for parallel user/item index arrays."""
        if not hasattr(self, "model_"):
            raise RuntimeError("estimator is not fitted")
        return self.model_.predict_pairs(users, items)
