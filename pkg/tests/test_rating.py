"""Subset selection, partition plans, the combined objective, reductions."""

import warnings

import numpy as np
import pytest

from smacf import (
    RSVD,
    FactorModel,
    SMARating,
    build_plan,
    rmse,
    select_easy_entries,
    sma_objective,
    split_train_test,
)
from smacf.validation import ConfigError

from conftest import make_matrix


def exact_model_for(matrix, rank=2, seed=0):
    """Factor pair that reproduces the matrix exactly on its observed entries."""
    rng = np.random.default_rng(seed)
    U = rng.uniform(0.5, 1.5, (matrix.m, rank))
    V = rng.uniform(0.5, 1.5, (matrix.n, rank))
    vals = np.einsum("ij,ij->i", U[matrix.rows], V[matrix.cols])
    exact = make_matrix(matrix.m, matrix.n,
                        list(zip(matrix.rows.tolist(), matrix.cols.tolist(), vals)))
    return FactorModel(U, V), exact


class TestSelectEasyEntries:
    def test_perfect_baseline_p_one_selects_all(self):
        base = make_matrix(3, 3, [(i, j, 1.0) for i in range(3) for j in range(3)])
        model, exact = exact_model_for(base)
        selected = select_easy_entries(exact, model, p=1.0, seed=0)
        assert np.array_equal(selected, np.arange(exact.nnz))

    def test_hard_entries_excluded_at_p_one(self):
        # residuals {0, 0, 0, 10}: threshold is 5, so only the last is hard
        matrix = make_matrix(2, 2, [(0, 0, 3.0), (0, 1, 3.0), (1, 0, 3.0), (1, 1, 3.0)])
        U = np.array([[3.0], [3.0]])
        V = np.array([[1.0], [1.0]])
        V2 = V.copy()
        model = FactorModel(U, V2)
        hard = make_matrix(2, 2, [(0, 0, 3.0), (0, 1, 3.0), (1, 0, 3.0), (1, 1, 13.0)])
        selected = select_easy_entries(hard, model, p=1.0, seed=4)
        assert np.array_equal(selected, np.array([0, 1, 2]))

    def test_inclusion_rates(self):
        # 1e5 entries, zero baseline: residual = |value|, threshold = rms(value)
        rng = np.random.default_rng(1)
        nnz = 100_000
        m = n = 400
        rows = rng.integers(0, m, nnz).astype(np.int32)
        cols = rng.integers(0, n, nnz).astype(np.int32)
        vals = rng.normal(0.0, 1.0, nnz)
        from smacf import SparseRatingMatrix
        matrix = SparseRatingMatrix(m, n, rows, cols, vals, np.arange(m), np.arange(n))
        model = FactorModel(np.zeros((m, 1)), np.zeros((n, 1)))
        threshold = rmse(model, matrix)
        easy = np.abs(vals) <= threshold

        p = 0.8
        selected = select_easy_entries(matrix, model, p=p, seed=7)
        mask = np.zeros(nnz, dtype=bool)
        mask[selected] = True
        easy_rate = mask[easy].mean()
        hard_rate = mask[~easy].mean()
        assert abs(easy_rate - p) < 0.01
        assert abs(hard_rate - (1 - p)) < 0.01
        # and within 3 sigma of the Bernoulli rates
        for rate, prob, count in ((easy_rate, p, easy.sum()),
                                  (hard_rate, 1 - p, (~easy).sum())):
            sigma = np.sqrt(prob * (1 - prob) / count)
            assert abs(rate - prob) <= 3 * sigma

    def test_deterministic(self, small_synth):
        model = FactorModel(np.zeros((small_synth.m, 1)), np.zeros((small_synth.n, 1)))
        a = select_easy_entries(small_synth, model, 0.8, seed=3)
        b = select_easy_entries(small_synth, model, 0.8, seed=3)
        assert np.array_equal(a, b)

    def test_p_validation(self, small_synth):
        model = FactorModel(np.zeros((small_synth.m, 1)), np.zeros((small_synth.n, 1)))
        for bad in (0.5, 0.2, 1.1, 0.0):
            with pytest.raises(ConfigError):
                select_easy_entries(small_synth, model, bad, seed=0)


class TestBuildPlan:
    def test_single_part(self, small_synth):
        omega = np.arange(0, small_synth.nnz, 2)
        plan = build_plan(small_synth, omega, K=1, lambdas=(0.5, 0.5), seed=1)
        assert plan.n_parts == 1
        assert np.array_equal(plan.parts[0], omega)
        expected_hard = np.setdiff1d(np.arange(small_synth.nnz), omega)
        assert np.array_equal(plan.hard_sets[0], expected_hard)

    def test_dealing_sizes(self, small_synth):
        omega = np.arange(10)
        plan = build_plan(small_synth, omega, K=3, lambdas=np.full(4, 0.25), seed=2)
        assert sorted(p.size for p in plan.parts) == [3, 3, 4]

    def test_partition_invariants_random(self, small_synth):
        rng = np.random.default_rng(0)
        for trial in range(30):
            k = int(rng.integers(1, 6))
            size = int(rng.integers(0, small_synth.nnz))
            omega = rng.choice(small_synth.nnz, size=size, replace=False)
            lambdas = rng.uniform(0.1, 1.0, k + 1)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                plan = build_plan(small_synth, omega, k, lambdas, seed=trial)
            union = (np.concatenate(plan.parts)
                     if plan.parts else np.array([], dtype=np.int64))
            assert np.array_equal(np.sort(union), np.sort(omega))
            for a_idx in range(len(plan.parts)):
                for b_idx in range(a_idx + 1, len(plan.parts)):
                    assert np.intersect1d(plan.parts[a_idx], plan.parts[b_idx]).size == 0
            for part, hard in zip(plan.parts, plan.hard_sets):
                assert np.array_equal(hard, np.setdiff1d(np.arange(small_synth.nnz), part))

    def test_membership_counts_exhaustive(self):
        # every entry is in K-1 hard sets if selected, K otherwise
        matrix = make_matrix(10, 10, [(i, j, 3.0) for i in range(10) for j in range(10)])
        omega = np.arange(0, 100, 3)
        k = 4
        plan = build_plan(matrix, omega, k, np.full(k + 1, 0.2), seed=9)
        in_omega = set(omega.tolist())
        for pos in range(100):
            count = sum(1 for hard in plan.hard_sets if pos in set(hard.tolist()))
            assert count == (k - 1 if pos in in_omega else k)

    def test_fewer_entries_than_parts(self, small_synth):
        omega = np.array([4, 9])
        with pytest.warns(UserWarning, match="non-empty"):
            plan = build_plan(small_synth, omega, K=5, lambdas=np.full(6, 1.0), seed=0)
        assert plan.n_parts == 2
        assert plan.lambdas.size == 3  # lambda0 plus one per surviving part

    def test_validation(self, small_synth):
        with pytest.raises(ConfigError):
            build_plan(small_synth, np.array([0]), K=0, lambdas=(1.0,), seed=0)
        with pytest.raises(ConfigError):
            build_plan(small_synth, np.array([0, 0]), K=1, lambdas=(0.5, 0.5), seed=0)
        with pytest.raises(ConfigError):
            build_plan(small_synth, np.array([small_synth.nnz]), K=1,
                       lambdas=(0.5, 0.5), seed=0)
        with pytest.raises(ConfigError):
            build_plan(small_synth, np.array([0]), K=1, lambdas=(0.5, -0.5), seed=0)
        with pytest.raises(ConfigError):
            build_plan(small_synth, np.array([0]), K=2, lambdas=(0.5, 0.5), seed=0)

    def test_describe_mentions_sizes(self, small_synth):
        plan = build_plan(small_synth, np.arange(10), 2, (0.4, 0.3, 0.3), seed=1,
                          baseline_rmse=0.5)
        text = plan.describe()
        assert "part_sizes" in text and "baseline_rmse" in text and "seed=1" in text


class TestSmaObjective:
    def test_perfect_model_zero(self):
        base = make_matrix(4, 4, [(i, j, 1.0) for i in range(4) for j in range(4)])
        model, exact = exact_model_for(base, seed=3)
        plan = build_plan(exact, np.arange(4), 2, np.full(3, 1 / 3), seed=0)
        assert sma_objective(model, exact, plan, 0.0, 0.0) == 0.0

    def test_reduces_to_mse(self, small_synth):
        rng = np.random.default_rng(2)
        model = FactorModel(rng.normal(size=(small_synth.m, 3)),
                            rng.normal(size=(small_synth.n, 3)))
        plan = build_plan(small_synth, np.arange(50), 2, (1.0, 0.0, 0.0), seed=0)
        resid = small_synth.vals - model.predict_pairs(small_synth.rows, small_synth.cols,
                                                       clamped=False)
        assert sma_objective(model, small_synth, plan, 0.0, 0.0) == pytest.approx(
            float(np.mean(resid ** 2)), rel=1e-15)

    def test_against_brute_force(self, small_synth):
        rng = np.random.default_rng(5)
        for trial in range(10):
            model = FactorModel(rng.normal(size=(small_synth.m, 2)),
                                rng.normal(size=(small_synth.n, 2)))
            omega = rng.choice(small_synth.nnz, size=200, replace=False)
            k = int(rng.integers(1, 4))
            lambdas = rng.uniform(0.1, 1.0, k + 1)
            mu1, mu2 = rng.uniform(0, 0.1, 2)
            plan = build_plan(small_synth, omega, k, lambdas, seed=trial)

            sq = []
            for i, j, v in zip(small_synth.rows, small_synth.cols, small_synth.vals):
                pred = float(model.U[i] @ model.V[j])
                sq.append((float(v) - pred) ** 2)
            sq = np.array(sq)
            expected = lambdas[0] * sq.mean()
            for lam, hard in zip(lambdas[1:], plan.hard_sets):
                expected += lam * sq[hard].mean()
            expected += mu1 * float(np.sum(model.U ** 2)) + mu2 * float(np.sum(model.V ** 2))

            assert sma_objective(model, small_synth, plan, mu1, mu2) == pytest.approx(
                expected, rel=1e-12)

    def test_weight_identity(self, small_synth):
        # sum of c_ij * squared residual == objective minus regularizers
        rng = np.random.default_rng(8)
        for trial in range(10):
            model = FactorModel(rng.normal(size=(small_synth.m, 2)),
                                rng.normal(size=(small_synth.n, 2)))
            omega = rng.choice(small_synth.nnz, size=300, replace=False)
            k = int(rng.integers(1, 4))
            lambdas = rng.uniform(0.1, 1.0, k + 1)
            plan = build_plan(small_synth, omega, k, lambdas, seed=trial)
            weights = plan.entry_weights()

            resid = small_synth.vals - model.predict_pairs(
                small_synth.rows, small_synth.cols, clamped=False)
            weighted_sum = float(np.sum(weights / small_synth.nnz * resid ** 2))
            objective = sma_objective(model, small_synth, plan, 0.0, 0.0)
            assert weighted_sum == pytest.approx(objective, rel=1e-12)


class TestSmaRatingTrainer:
    def test_reduction_is_bitwise(self, small_synth):
        pair = split_train_test(small_synth, 0.9, 3)
        kwargs = dict(rank=4, lr=0.01, mu1=0.02, mu2=0.02, max_epochs=40,
                      seed=11, clamp=(1.0, 5.0))
        rsvd = RSVD(**kwargs).fit(pair.train, pair.test)
        reduced = SMARating(**kwargs, K=3, p=0.8,
                            lambdas=(1.0, 0.0, 0.0, 0.0)).fit(pair.train, pair.test)
        assert np.array_equal(rsvd.model_.U, reduced.model_.U)
        assert np.array_equal(rsvd.model_.V, reduced.model_.V)
        assert rsvd.report_.epochs == reduced.report_.epochs

    def test_nontrivial_lambdas_change_model(self, small_synth):
        pair = split_train_test(small_synth, 0.9, 3)
        kwargs = dict(rank=4, lr=0.01, max_epochs=15, seed=11)
        rsvd = RSVD(**kwargs).fit(pair.train)
        sma = SMARating(**kwargs, K=3, p=0.8).fit(pair.train)
        assert not np.array_equal(rsvd.model_.U, sma.model_.U)

    def test_plan_is_exposed_and_frozen(self, small_synth):
        pair = split_train_test(small_synth, 0.9, 1)
        est = SMARating(rank=3, lr=0.01, max_epochs=8, seed=2, K=2, p=0.8)
        est.fit(pair.train)
        assert est.plan_.n_entries == pair.train.nnz
        assert est.plan_.baseline_rmse is not None
        assert est.plan_.n_parts == 2

    def test_external_baseline_used(self, small_synth):
        pair = split_train_test(small_synth, 0.9, 1)
        baseline = RSVD(rank=3, lr=0.01, max_epochs=10, seed=5).fit(pair.train).model_
        est = SMARating(rank=3, lr=0.01, max_epochs=8, seed=2, K=2, p=0.8,
                        baseline=baseline)
        est.fit(pair.train)
        assert est.baseline_ is baseline
        assert est.plan_.baseline_rmse == rmse(baseline, pair.train)

    def test_equal_lambda_default(self, small_synth):
        est = SMARating(rank=2, lr=0.01, max_epochs=4, seed=0, K=3)
        est.fit(small_synth)
        assert np.allclose(est.plan_.lambdas, 0.25)

    def test_lambda_length_validation(self, small_synth):
        est = SMARating(rank=2, max_epochs=2, K=2, lambdas=(0.5, 0.5))
        with pytest.raises(ConfigError):
            est.fit(small_synth)

    def test_determinism(self, small_synth):
        pair = split_train_test(small_synth, 0.9, 3)
        runs = [SMARating(rank=3, lr=0.01, max_epochs=10, seed=4, K=2).fit(pair.train)
                for _ in range(2)]
        assert np.array_equal(runs[0].model_.U, runs[1].model_.U)
        assert runs[0].plan_.omega_prime.tolist() == runs[1].plan_.omega_prime.tolist()
