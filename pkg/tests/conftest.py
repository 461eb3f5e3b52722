"""Shared fixtures: tiny deterministic datasets and real-dataset discovery.

The desk-scale experiment tests need the MovieLens 100K ratings file
(u.data). Point SMACF_ML100K at it, or drop it at data/ml-100k/u.data under
the repo root; without it those tests skip with an explanatory message.
"""

import os

import numpy as np
import pytest

from smacf import SparseRatingMatrix, synthetic_ratings

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
ML100K_ENV = "SMACF_ML100K"


def ml100k_path():
    candidate = os.environ.get(ML100K_ENV)
    if candidate and os.path.exists(candidate):
        return candidate
    default = os.path.join(REPO_ROOT, "data", "ml-100k", "u.data")
    if os.path.exists(default):
        return default
    return None


requires_ml100k = pytest.mark.skipif(
    ml100k_path() is None,
    reason=f"MovieLens 100K not found; set {ML100K_ENV} or place data/ml-100k/u.data "
           "(grouplens.org/datasets/movielens/100k; not redistributable with this repo, "
           "and this sandbox has no way to download it)")


def make_matrix(m, n, entries):
    """Build a SparseRatingMatrix from (row, col, val) triples."""
    rows = np.array([e[0] for e in entries], dtype=np.int32)
    cols = np.array([e[1] for e in entries], dtype=np.int32)
    vals = np.array([e[2] for e in entries], dtype=np.float64)
    return SparseRatingMatrix(m, n, rows, cols, vals,
                              user_ids=np.arange(m, dtype=np.int64),
                              item_ids=np.arange(n, dtype=np.int64))


def write_ratings_file(path, matrix, sep="\t"):
    """Write a matrix in MovieLens format (raw ids)."""
    users, items, vals, ts = matrix.raw_entries()
    with open(path, "w", encoding="utf-8") as fh:
        for u, i, v, t in zip(users, items, vals, ts):
            v_txt = str(int(v)) if float(v).is_integer() else repr(float(v))
            fh.write(f"{u}{sep}{i}{sep}{v_txt}{sep}{t}\n")
    return str(path)


@pytest.fixture(scope="session")
def small_synth():
    """Small synthetic dataset shared by pipeline tests."""
    return synthetic_ratings(m=80, n=60, nnz=1800, seed=11)


@pytest.fixture(scope="session")
def synth_file(small_synth, tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "ratings.tsv"
    return write_ratings_file(path, small_synth)
