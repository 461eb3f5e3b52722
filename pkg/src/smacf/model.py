"""Factor-model representation: prediction, RMSE, initialization, persistence.

A model is the pair of feature matrices ``U`` (``m x r``) and ``V``
(``n x r``); the predicted matrix is ``U @ V.T`` plus an optional scalar
offset (used only when training centered the data on the global mean).
Rating-task models additionally carry a prediction clamp that is applied at
evaluation time only, never inside gradient computations.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass

import numpy as np

from .data import SparseRatingMatrix
from .validation import DataError, check_indices, check_positive

MODEL_MAGIC = "SMACF-MODEL"
MODEL_VERSION = 1


@dataclass(eq=False)
class FactorModel:
    """Low-rank factor pair with optional evaluation clamp.

    Immutable by convention once training returns it; nothing in this package
    mutates a returned model, so instances may be shared across threads.
    """

    U: np.ndarray
    V: np.ndarray
    clamp: tuple[float, float] | None = None
    offset: float = 0.0
    seed: int | None = None

    @property
    def m(self) -> int:
        return self.U.shape[0]

    @property
    def n(self) -> int:
        return self.V.shape[0]

    @property
    def rank(self) -> int:
        return self.U.shape[1]

    def _apply_clamp(self, preds):
        if self.clamp is None:
            return preds
        lo, hi = self.clamp
        return np.clip(preds, lo, hi)

    def predict(self, i: int, j: int) -> float:
        """Predicted value for one (user, item) pair, clamped if configured."""
        check_indices("user index", i, self.m)
        check_indices("item index", j, self.n)
        raw = float(self.U[i] @ self.V[j]) + self.offset
        return float(self._apply_clamp(raw))

    def predict_pairs(self, rows, cols, clamped: bool = True) -> np.ndarray:
        """Vectorized predictions for parallel index arrays."""
        rows = check_indices("user index", rows, self.m)
        cols = check_indices("item index", cols, self.n)
        raw = np.einsum("ij,ij->i", self.U[rows], self.V[cols]) + self.offset
        return self._apply_clamp(raw) if clamped else raw

    def scores(self) -> np.ndarray:
        """Full unclamped prediction matrix ``U @ V.T`` (+ offset)."""
        return self.U @ self.V.T + self.offset

    def save(self, path) -> None:
        """Write the model in the versioned flat binary format.

        Layout: one ASCII line ``SMACF-MODEL <version>``, one JSON header line
        with keys ``m, n, rank, clamp, offset, seed``, then the raw bytes of
        ``U`` followed by ``V`` (float64, little-endian, row-major).
        """
        header = {
            "m": self.m, "n": self.n, "rank": self.rank,
            "clamp": list(self.clamp) if self.clamp else None,
            "offset": self.offset, "seed": self.seed,
        }
        with open(path, "wb") as fh:
            fh.write(f"{MODEL_MAGIC} {MODEL_VERSION}\n".encode())
            fh.write((json.dumps(header) + "\n").encode())
            fh.write(np.ascontiguousarray(self.U, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(self.V, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "FactorModel":
        with open(path, "rb") as fh:
            magic = fh.readline().decode().split()
            if len(magic) != 2 or magic[0] != MODEL_MAGIC:
                raise DataError(f"{path}: not a {MODEL_MAGIC} file")
            if int(magic[1]) != MODEL_VERSION:
                raise DataError(f"{path}: unsupported model version {magic[1]}")
            header = json.loads(fh.readline().decode())
            m, n, r = header["m"], header["n"], header["rank"]
            body = fh.read()
        expected = (m + n) * r * 8
        if len(body) != expected:
            raise DataError(f"{path}: expected {expected} payload bytes, got {len(body)}")
        flat = np.frombuffer(body, dtype="<f8")
        U = flat[: m * r].reshape(m, r).copy()
        V = flat[m * r:].reshape(n, r).copy()
        clamp = tuple(header["clamp"]) if header["clamp"] else None
        return cls(U, V, clamp=clamp, offset=header.get("offset", 0.0), seed=header.get("seed"))


def draw_factors(rng: np.random.Generator, m: int, n: int, rank: int, scale: float):
    """Draw U then V i.i.d. uniform on [-scale, scale] from the given stream."""
    U = rng.uniform(-scale, scale, size=(m, rank))
    V = rng.uniform(-scale, scale, size=(n, rank))
    return U, V


def init_model(m: int, n: int, rank: int, seed: int, scale: float = 0.01,
               clamp: tuple[float, float] | None = None) -> FactorModel:
    """Fresh factor model with uniform [-scale, scale] entries.

    Uses the same draw order as the trainers, so ``init_model(seed=s)``
    reproduces the factors a trainer seeded with ``s`` starts from.
    """
    for name, v in (("m", m), ("n", n), ("rank", rank)):
        check_positive(name, v)
    if scale < 0:
        check_positive("scale", scale, strict=False)
    U, V = draw_factors(np.random.default_rng(seed), m, n, rank, scale)
    return FactorModel(U, V, clamp=clamp, seed=seed)


def rmse(model: FactorModel, data) -> float:
    """Root mean square error over an entry set.

    ``data`` is a :class:`SparseRatingMatrix` or a ``(rows, cols, vals)``
    triple. Predictions are clamped when the model carries a clamp.
    """
    if isinstance(data, SparseRatingMatrix):
        rows, cols, vals = data.rows, data.cols, data.vals
    else:
        rows, cols, vals = data
    if len(vals) == 0:
        raise DataError("rmse over an empty entry set is undefined")
    resid = np.asarray(vals, dtype=np.float64) - model.predict_pairs(rows, cols)
    return float(np.sqrt(np.mean(resid * resid)))
