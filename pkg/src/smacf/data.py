"""MovieLens-format ingestion, seeded train/test splits, and the binary transform.

Supported file layouts:

* ``ml100k`` -- TAB-separated ``user item rating timestamp`` (the u.data layout)
* ``ml1m``   -- ``user::item::rating::timestamp``

Raw ids are compacted to dense indices at load time; only users and items
actually present get a row or column. All functions here build new arrays and
never mutate their inputs, so they are safe to call from concurrent threads.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace

import numpy as np

from .validation import ConfigError, DataError, check_ratio

SEPARATORS = {"ml100k": "\t", "ml1m": "::"}
RATING_RANGE = (1.0, 5.0)


@dataclass(frozen=True)
class RatingTriple:
    """One parsed ratings line, still carrying raw (un-compacted) ids."""

    user_raw_id: int
    item_raw_id: int
    rating: float
    timestamp: int


@dataclass(eq=False)
class SparseRatingMatrix:
    """Observed entries of an ``m x n`` rating matrix in COO layout.

    ``rows``/``cols`` hold dense indices in ``[0, m) x [0, n)``. ``user_ids``
    and ``item_ids`` map a dense index back to its raw id; both are sorted
    ascending, so the mapping does not depend on entry order. ``timestamps``
    is retained for file-format fidelity and never used in training.
    """

    m: int
    n: int
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    user_ids: np.ndarray
    item_ids: np.ndarray
    timestamps: np.ndarray | None = None

    @property
    def nnz(self) -> int:
        return int(self.rows.shape[0])

    def entry_keys(self) -> np.ndarray:
        """One int64 key per (row, col) pair: ``row * n + col``. Unique per entry."""
        return self.rows.astype(np.int64) * self.n + self.cols.astype(np.int64)

    def take(self, positions: np.ndarray) -> "SparseRatingMatrix":
        """Sub-matrix holding the entries at ``positions``; id maps are shared."""
        ts = None if self.timestamps is None else self.timestamps[positions]
        return SparseRatingMatrix(
            self.m, self.n, self.rows[positions], self.cols[positions],
            self.vals[positions], self.user_ids, self.item_ids, ts,
        )

    def grouped_by_user(self):
        """Group entries by user: ``(indptr, items, order)``.

        ``order`` is a stable sort of entry positions by user index;
        user ``u``'s items are ``items[indptr[u]:indptr[u + 1]]``.
        """
        order = np.argsort(self.rows, kind="stable")
        sorted_rows = self.rows[order]
        indptr = np.searchsorted(sorted_rows, np.arange(self.m + 1))
        return indptr, self.cols[order], order

    def raw_entries(self):
        """Entries as (raw user id, raw item id, value, timestamp) arrays."""
        ts = self.timestamps
        if ts is None:
            ts = np.zeros(self.nnz, dtype=np.int64)
        return self.user_ids[self.rows], self.item_ids[self.cols], self.vals, ts

    def validate(self) -> None:
        """Check the structural invariants; raises DataError on violation."""
        if self.nnz and (self.rows.min() < 0 or self.rows.max() >= self.m):
            raise DataError("user index out of bounds")
        if self.nnz and (self.cols.min() < 0 or self.cols.max() >= self.n):
            raise DataError("item index out of bounds")
        if np.unique(self.entry_keys()).size != self.nnz:
            raise DataError("duplicate (user, item) entry")


@dataclass(eq=False)
class SplitPair:
    """A seeded 2-way partition of a rating matrix's entries."""

    train: SparseRatingMatrix
    test: SparseRatingMatrix
    ratio: float
    seed: int


def _parse_rating_file(path, fmt: str):
    """Parse a ratings file into raw-id arrays plus any `# key=value` header."""
    if fmt not in SEPARATORS:
        raise ConfigError(f"format must be one of {sorted(SEPARATORS)}, got {fmt!r}")
    sep = SEPARATORS[fmt]
    users, items, vals, stamps = [], [], [], []
    header: dict[str, str] = {}
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for token in line[1:].split():
                    if "=" in token:
                        key, _, value = token.partition("=")
                        header[key] = value
                continue
            parts = line.split(sep)
            if len(parts) != 4:
                raise DataError(f"{path}:{lineno}: expected 4 {fmt} fields, got {len(parts)}")
            try:
                u, i = int(parts[0]), int(parts[1])
                r = float(parts[2])
                t = int(parts[3])
            except ValueError:
                raise DataError(f"{path}:{lineno}: malformed field in {line!r}") from None
            if u < 0 or i < 0:
                raise DataError(f"{path}:{lineno}: negative id")
            if not (RATING_RANGE[0] <= r <= RATING_RANGE[1]):
                raise DataError(f"{path}:{lineno}: rating {r} outside {RATING_RANGE}")
            users.append(u)
            items.append(i)
            vals.append(r)
            stamps.append(t)
    if not users:
        raise DataError(f"{path}: no rating lines")
    return (
        np.asarray(users, dtype=np.int64),
        np.asarray(items, dtype=np.int64),
        np.asarray(vals, dtype=np.float64),
        np.asarray(stamps, dtype=np.int64),
        header,
    )


def _compact(raw_users, raw_items, vals, stamps, source: str) -> SparseRatingMatrix:
    user_ids, rows = np.unique(raw_users, return_inverse=True)
    item_ids, cols = np.unique(raw_items, return_inverse=True)
    m, n = user_ids.size, item_ids.size
    rows = rows.astype(np.int32)
    cols = cols.astype(np.int32)
    keys = rows.astype(np.int64) * n + cols
    uniq, counts = np.unique(keys, return_counts=True)
    if uniq.size != keys.size:
        key = uniq[np.argmax(counts > 1)]
        u_raw = user_ids[key // n]
        i_raw = item_ids[key % n]
        raise DataError(f"{source}: duplicate rating for user {u_raw}, item {i_raw}")
    return SparseRatingMatrix(m, n, rows, cols, vals, user_ids, item_ids, stamps)


def load_movielens(path, fmt: str = "ml100k") -> SparseRatingMatrix:
    """Load a MovieLens ratings file and compact its ids to dense indices.

    Duplicate (user, item) pairs reject the whole file: MovieLens guarantees
    uniqueness, so a duplicate signals corruption rather than a repeat rating.
    """
    raw_users, raw_items, vals, stamps, _ = _parse_rating_file(path, fmt)
    return _compact(raw_users, raw_items, vals, stamps, str(path))


def split_train_test(matrix: SparseRatingMatrix, ratio: float, seed: int) -> SplitPair:
    """Partition the observed entries uniformly at random into train and test.

    The split is global over entries (not per-user stratified) and is an exact
    partition: disjoint index pairs whose union is the original entry set.
    Both sides keep the full ``m x n`` shape and share the id maps.
    """
    check_ratio("ratio", ratio)
    if matrix.nnz < 2:
        raise DataError(f"need at least 2 entries to split, got {matrix.nnz}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(matrix.nnz)
    n_train = int(round(ratio * matrix.nnz))
    n_train = min(max(n_train, 1), matrix.nnz - 1)
    train_pos = np.sort(perm[:n_train])
    test_pos = np.sort(perm[n_train:])
    return SplitPair(matrix.take(train_pos), matrix.take(test_pos), ratio, seed)


def binarize(matrix: SparseRatingMatrix) -> SparseRatingMatrix:
    """Map every observed rating to +1 (the "will rate" signal).

    Unobserved cells are not materialized here; the top-N trainer treats them
    as -1 on the fly. Idempotent, and the entry set is unchanged.
    """
    return replace(matrix, vals=np.ones(matrix.nnz, dtype=np.float64))


def subsample_entries(matrix: SparseRatingMatrix, fraction: float, seed: int) -> SparseRatingMatrix:
    """Keep a seeded uniform fraction of the entries (for sparsity sweeps)."""
    if not (0.0 < fraction <= 1.0):
        raise ConfigError(f"fraction must lie in (0, 1], got {fraction!r}")
    if fraction == 1.0:
        return matrix
    rng = np.random.default_rng(seed)
    keep = int(round(fraction * matrix.nnz))
    if keep < 1:
        raise DataError(f"fraction {fraction} of {matrix.nnz} entries is empty")
    return matrix.take(np.sort(rng.permutation(matrix.nnz)[:keep]))


def _format_value(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def save_split(pair: SplitPair, out_dir) -> tuple[str, str]:
    """Write a split as two TAB files with a ``# seed=.. ratio=..`` header line.

    Raw ids are written, so the files are themselves valid ``ml100k``-format
    inputs; :func:`load_split` reads the pair back with shared id maps.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    header = f"# seed={pair.seed} ratio={pair.ratio!r}\n"
    for name, side in (("train.tsv", pair.train), ("test.tsv", pair.test)):
        path = os.path.join(out_dir, name)
        users, items, vals, ts = side.raw_entries()
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(header)
            for u, i, v, t in zip(users, items, vals, ts):
                fh.write(f"{u}\t{i}\t{_format_value(v)}\t{t}\n")
        paths.append(path)
    return tuple(paths)


def load_split(split_dir) -> SplitPair:
    """Read back a cached split, rebuilding the shared id maps from the union."""
    sides = []
    headers = []
    for name in ("train.tsv", "test.tsv"):
        arrays = _parse_rating_file(os.path.join(split_dir, name), "ml100k")
        sides.append(arrays[:4])
        headers.append(arrays[4])
    if headers[0] != headers[1]:
        raise DataError(f"{split_dir}: train/test header lines disagree")
    try:
        seed = int(headers[0]["seed"])
        ratio = float(headers[0]["ratio"])
    except (KeyError, ValueError):
        raise DataError(f"{split_dir}: missing or malformed '# seed=.. ratio=..' header") from None

    all_users = np.concatenate([sides[0][0], sides[1][0]])
    all_items = np.concatenate([sides[0][1], sides[1][1]])
    user_ids = np.unique(all_users)
    item_ids = np.unique(all_items)
    m, n = user_ids.size, item_ids.size

    matrices = []
    for raw_u, raw_i, vals, ts in sides:
        rows = np.searchsorted(user_ids, raw_u).astype(np.int32)
        cols = np.searchsorted(item_ids, raw_i).astype(np.int32)
        matrices.append(SparseRatingMatrix(m, n, rows, cols, vals, user_ids, item_ids, ts))
        matrices[-1].validate()

    train, test = matrices
    overlap = np.intersect1d(train.entry_keys(), test.entry_keys())
    if overlap.size:
        raise DataError(f"{split_dir}: train and test share {overlap.size} entries")
    return SplitPair(train, test, ratio, seed)
