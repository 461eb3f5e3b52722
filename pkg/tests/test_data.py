"""Ingestion, splitting, binarization, and the split cache."""

import numpy as np
import pytest
from scipy import stats

from smacf import (
    DataError,
    SparseRatingMatrix,
    binarize,
    load_movielens,
    load_split,
    save_split,
    split_train_test,
    subsample_entries,
)
from smacf.validation import ConfigError

from conftest import make_matrix, write_ratings_file


class TestLoadMovielens:
    def test_single_line(self, tmp_path):
        path = tmp_path / "u.data"
        path.write_text("1\t1\t5\t0\n")
        matrix = load_movielens(path, "ml100k")
        assert (matrix.m, matrix.n, matrix.nnz) == (1, 1, 1)
        assert matrix.rows[0] == 0 and matrix.cols[0] == 0
        assert matrix.vals[0] == 5.0

    def test_id_map_collapse(self, tmp_path):
        path = tmp_path / "u.data"
        path.write_text("7\t42\t4\t0\n9\t42\t2\t0\n")
        matrix = load_movielens(path, "ml100k")
        assert (matrix.m, matrix.n, matrix.nnz) == (2, 1, 2)
        assert list(matrix.user_ids) == [7, 9]
        assert list(matrix.item_ids) == [42]

    def test_ml1m_separator(self, tmp_path):
        path = tmp_path / "ratings.dat"
        path.write_text("1::101::5::978300760\n1::102::3::978302109\n")
        matrix = load_movielens(path, "ml1m")
        assert (matrix.m, matrix.n, matrix.nnz) == (1, 2, 2)
        assert matrix.timestamps[0] == 978300760

    def test_malformed_line_reports_number(self, tmp_path):
        path = tmp_path / "u.data"
        path.write_text("1\t1\t5\t0\n1\t2\tfive\t0\n")
        with pytest.raises(DataError, match=":2:"):
            load_movielens(path, "ml100k")

    def test_wrong_field_count(self, tmp_path):
        path = tmp_path / "u.data"
        path.write_text("1\t1\t5\n")
        with pytest.raises(DataError, match="expected 4"):
            load_movielens(path, "ml100k")

    def test_rating_out_of_range(self, tmp_path):
        path = tmp_path / "u.data"
        path.write_text("1\t1\t9\t0\n")
        with pytest.raises(DataError, match="outside"):
            load_movielens(path, "ml100k")

    def test_negative_id(self, tmp_path):
        path = tmp_path / "u.data"
        path.write_text("-1\t1\t3\t0\n")
        with pytest.raises(DataError, match="negative id"):
            load_movielens(path, "ml100k")

    def test_duplicate_pair_rejected(self, tmp_path):
        path = tmp_path / "u.data"
        path.write_text("3\t8\t5\t0\n3\t8\t4\t0\n")
        with pytest.raises(DataError, match="user 3, item 8"):
            load_movielens(path, "ml100k")

    def test_empty_file(self, tmp_path):
        path = tmp_path / "u.data"
        path.write_text("")
        with pytest.raises(DataError, match="no rating"):
            load_movielens(path, "ml100k")

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            load_movielens(tmp_path / "nope.data", "ml100k")

    def test_unknown_format(self, tmp_path):
        path = tmp_path / "u.data"
        path.write_text("1\t1\t5\t0\n")
        with pytest.raises(ConfigError):
            load_movielens(path, "netflix")

    def test_raw_id_round_trip(self, tmp_path, small_synth):
        path = write_ratings_file(tmp_path / "r.tsv", small_synth)
        loaded = load_movielens(path, "ml100k")
        users, items, vals, _ = loaded.raw_entries()
        orig_u, orig_i, orig_v, _ = small_synth.raw_entries()
        # compare as sets of (raw user, raw item, value)
        got = sorted(zip(users.tolist(), items.tolist(), vals.tolist()))
        want = sorted(zip(orig_u.tolist(), orig_i.tolist(), orig_v.tolist()))
        assert got == want


class TestSplit:
    def test_sizes(self, small_synth):
        pair = split_train_test(small_synth, 0.9, 1)
        assert pair.train.nnz == round(0.9 * small_synth.nnz)
        assert pair.train.nnz + pair.test.nnz == small_synth.nnz

    def test_exact_partition(self, small_synth):
        pair = split_train_test(small_synth, 0.8, 5)
        train_keys = set(pair.train.entry_keys().tolist())
        test_keys = set(pair.test.entry_keys().tolist())
        assert not (train_keys & test_keys)
        assert train_keys | test_keys == set(small_synth.entry_keys().tolist())

    def test_shared_shape_and_id_maps(self, small_synth):
        pair = split_train_test(small_synth, 0.9, 2)
        for side in (pair.train, pair.test):
            assert (side.m, side.n) == (small_synth.m, small_synth.n)
            assert side.user_ids is small_synth.user_ids
            assert side.item_ids is small_synth.item_ids

    def test_deterministic(self, small_synth):
        a = split_train_test(small_synth, 0.9, 7)
        b = split_train_test(small_synth, 0.9, 7)
        assert np.array_equal(a.train.entry_keys(), b.train.entry_keys())
        assert np.array_equal(a.test.entry_keys(), b.test.entry_keys())

    def test_different_seeds_differ(self, small_synth):
        a = split_train_test(small_synth, 0.9, 7)
        b = split_train_test(small_synth, 0.9, 8)
        assert not np.array_equal(a.train.entry_keys(), b.train.entry_keys())

    def test_ratio_validation(self, small_synth):
        for bad in (0.0, 1.0, -0.1, 1.4):
            with pytest.raises(ConfigError):
                split_train_test(small_synth, bad, 0)

    def test_too_few_entries(self):
        matrix = make_matrix(1, 1, [(0, 0, 3.0)])
        with pytest.raises(DataError):
            split_train_test(matrix, 0.5, 0)

    def test_tiny_matrix_keeps_both_sides_nonempty(self):
        matrix = make_matrix(2, 1, [(0, 0, 3.0), (1, 0, 4.0)])
        pair = split_train_test(matrix, 0.9, 0)
        assert pair.train.nnz == 1 and pair.test.nnz == 1

    def test_per_user_fraction_uniformity(self):
        # 1000 users x 100 ratings each; Pearson GOF of per-user test counts
        # against the global 10% rate must not reject at alpha = 0.01
        m, per_user = 1000, 100
        rows = np.repeat(np.arange(m, dtype=np.int32), per_user)
        cols = np.tile(np.arange(per_user, dtype=np.int32), m)
        vals = np.full(m * per_user, 3.0)
        matrix = SparseRatingMatrix(m, per_user, rows, cols, vals,
                                    np.arange(m), np.arange(per_user))
        pair = split_train_test(matrix, 0.9, 123)
        counts = np.bincount(pair.test.rows, minlength=m)
        expected = per_user * 0.1
        stat = float(np.sum((counts - expected) ** 2 / expected))
        p_value = stats.chi2.sf(stat, df=m - 1)
        assert p_value > 0.01


class TestBinarize:
    def test_values_become_one(self, small_synth):
        binary = binarize(small_synth)
        assert np.all(binary.vals == 1.0)
        assert binary.nnz == small_synth.nnz

    def test_low_ratings_also_positive(self):
        matrix = make_matrix(1, 2, [(0, 0, 1.0), (0, 1, 4.0)])
        binary = binarize(matrix)
        assert list(binary.vals) == [1.0, 1.0]

    def test_idempotent(self, small_synth):
        once = binarize(small_synth)
        twice = binarize(once)
        assert np.array_equal(once.vals, twice.vals)
        assert np.array_equal(once.entry_keys(), twice.entry_keys())


class TestSubsample:
    def test_full_fraction_is_identity(self, small_synth):
        assert subsample_entries(small_synth, 1.0, 3) is small_synth

    def test_half(self, small_synth):
        sub = subsample_entries(small_synth, 0.5, 3)
        assert abs(sub.nnz - 0.5 * small_synth.nnz) <= 1

    def test_fraction_validation(self, small_synth):
        for bad in (0.0, -0.5, 1.5):
            with pytest.raises(ConfigError):
                subsample_entries(small_synth, bad, 0)


class TestSplitCache:
    def test_round_trip(self, tmp_path, small_synth):
        pair = split_train_test(small_synth, 0.9, 17)
        save_split(pair, tmp_path)
        loaded = load_split(tmp_path)
        assert loaded.seed == 17
        assert loaded.ratio == 0.9
        assert (loaded.train.m, loaded.train.n) == (small_synth.m, small_synth.n)
        for orig, back in ((pair.train, loaded.train), (pair.test, loaded.test)):
            assert back.nnz == orig.nnz
            got = sorted(zip(*[a.tolist() for a in back.raw_entries()[:3]]))
            want = sorted(zip(*[a.tolist() for a in orig.raw_entries()[:3]]))
            assert got == want

    def test_header_mismatch(self, tmp_path, small_synth):
        pair = split_train_test(small_synth, 0.9, 17)
        save_split(pair, tmp_path)
        test_file = tmp_path / "test.tsv"
        lines = test_file.read_text().splitlines()
        lines[0] = "# seed=99 ratio=0.9"
        test_file.write_text("\n".join(lines) + "\n")
        with pytest.raises(DataError, match="disagree"):
            load_split(tmp_path)

    def test_overlap_detected(self, tmp_path):
        header = "# seed=1 ratio=0.5\n"
        (tmp_path / "train.tsv").write_text(header + "1\t1\t3\t0\n1\t2\t4\t0\n")
        (tmp_path / "test.tsv").write_text(header + "1\t1\t3\t0\n")
        with pytest.raises(DataError, match="share"):
            load_split(tmp_path)

    def test_missing_header(self, tmp_path):
        (tmp_path / "train.tsv").write_text("1\t1\t3\t0\n")
        (tmp_path / "test.tsv").write_text("1\t2\t3\t0\n")
        with pytest.raises(DataError, match="header"):
            load_split(tmp_path)
