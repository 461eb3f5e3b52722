"""Synthetic MovieLens-like rating data.

Used by the test suite and demos so the pipeline can be exercised end to end
without downloading a real dataset. Ratings come from a noisy low-rank model
with user/item biases; which cells are observed follows a popularity-skewed
distribution (some items get rated far more than others), which is what makes
top-N ranking on the result non-trivial.
"""

from __future__ import annotations

import numpy as np

from .data import SparseRatingMatrix
from .validation import ConfigError


def synthetic_ratings(m: int = 400, n: int = 300, nnz: int = 20000, rank: int = 8,
                      noise: float = 0.7, seed: int = 0, popularity_skew: float = 0.8,
                      activity_spread: float = 0.7) -> SparseRatingMatrix:
    """Generate an m x n sparse rating matrix with integer ratings in 1..5.

    ``noise`` is the stddev of the additive Gaussian noise on the latent
    rating; ``popularity_skew`` is the Zipf exponent of item popularity and
    ``activity_spread`` the lognormal sigma of user activity.
    """
    if nnz > m * n:
        raise ConfigError(f"nnz={nnz} exceeds grid size {m * n}")
    if nnz < 1:
        raise ConfigError("nnz must be >= 1")
    rng = np.random.default_rng(seed)

    item_w = (np.arange(1, n + 1, dtype=np.float64)) ** (-popularity_skew)
    rng.shuffle(item_w)
    user_w = np.exp(activity_spread * rng.standard_normal(m))
    log_w = np.log(user_w)[:, None] + np.log(item_w)[None, :]

    # Gumbel top-k = weighted sampling of nnz distinct cells
    keys = log_w + rng.gumbel(size=(m, n))
    flat = np.argpartition(keys.ravel(), m * n - nnz)[m * n - nnz:]
    flat = np.sort(flat)
    rows = (flat // n).astype(np.int32)
    cols = (flat % n).astype(np.int32)

    P = rng.standard_normal((m, rank)) / np.sqrt(rank)
    Q = rng.standard_normal((n, rank))
    user_bias = 0.45 * rng.standard_normal(m)
    item_bias = 0.45 * rng.standard_normal(n)
    latent = np.einsum("ij,ij->i", P[rows], Q[cols])
    raw = 3.6 + user_bias[rows] + item_bias[cols] + 1.1 * latent \
        + noise * rng.standard_normal(nnz)
    vals = np.clip(np.rint(raw), 1.0, 5.0)

    return SparseRatingMatrix(
        m, n, rows, cols, vals,
        user_ids=np.arange(m, dtype=np.int64),
        item_ids=np.arange(n, dtype=np.int64),
        timestamps=np.zeros(nnz, dtype=np.int64),
    )
