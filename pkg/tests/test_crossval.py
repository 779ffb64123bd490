import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rbfgen.crossval import (
    CrossValConfig,
    MonotonicityTable,
    MultiQoiData,
    REFERENCE_SIGNS,
    fit_pls,
    l2o_folds,
    metrics,
    pls_reduce,
    read_dataset,
    reduced_mono_priors,
    run_l2o,
    synthetic_dataset,
    synthetic_truth,
    write_dataset,
    write_report,
)
from rbfgen.priors import Direction
from rbfgen.rbf import KernelSpec, assemble_phi


class TestFolds:
    def test_counts(self):
        assert len(l2o_folds(34)) == 561
        assert len(l2o_folds(3)) == 3

    def test_lexicographic(self):
        assert l2o_folds(4) == [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]

    def test_too_small(self):
        with pytest.raises(ValueError):
            l2o_folds(2)

    @given(st.integers(3, 40))
    def test_exhaustive(self, n):
        folds = l2o_folds(n)
        assert len(set(folds)) == len(folds) == math.comb(n, 2)
        assert all(i < j for i, j in folds)


class TestMetrics:
    def test_perfect(self):
        assert metrics([(1.0, 1.0), (-3.0, -3.0)]) == (0.0, 0.0)

    def test_single(self):
        are, aae = metrics([(11.0, 10.0)])
        assert are == pytest.approx(0.1)
        assert aae == 1.0

    def test_zero_truth_skipped_in_relative(self):
        are, aae = metrics([(11.0, 10.0), (0.5, 0.0)])
        assert are == pytest.approx(0.1)
        assert aae == pytest.approx(0.75)

    def test_empty(self):
        with pytest.raises(ValueError):
            metrics([])

    @settings(max_examples=30)
    @given(st.integers(0, 10_000))
    def test_permutation_invariant(self, seed):
        rng = np.random.default_rng(seed)
        P = rng.normal(size=(20, 2)) + 3
        a = metrics(P)
        b = metrics(P[rng.permutation(20)])
        assert a[0] == pytest.approx(b[0], rel=1e-12)
        assert a[1] == pytest.approx(b[1], rel=1e-12)


class TestPls:
    def test_first_direction_follows_response(self):
        rng = np.random.default_rng(0)
        X = np.column_stack([rng.normal(size=30), np.full(30, 2.0), np.full(30, -1.0)])
        W, _ = pls_reduce(X, X[:, 0], 1)
        np.testing.assert_allclose(np.abs(W[:, 0]), [1.0, 0.0, 0.0], atol=1e-12)

    def test_ncomp_range(self):
        X = np.random.default_rng(1).normal(size=(10, 4))
        with pytest.raises(ValueError):
            pls_reduce(X, X[:, 0], 0)
        with pytest.raises(ValueError):
            pls_reduce(X, X[:, 0], 5)

    def test_unit_norm_columns(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(25, 8))
        W, _ = pls_reduce(X, X @ rng.normal(size=8), 4)
        np.testing.assert_allclose(np.linalg.norm(W, axis=0), 1.0, atol=1e-12)

    def test_full_rank_matches_least_squares(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(30, 5))
        y = X @ rng.normal(size=5) + 0.3 * rng.normal(size=30)
        model = fit_pls(X, y, 5)
        Z = model.transform(X)
        Xs = (X - model.mean) / model.scale

        def ls_resid(A):
            A1 = np.column_stack([A, np.ones(len(y))])
            return y - A1 @ np.linalg.lstsq(A1, y, rcond=None)[0]

        np.testing.assert_allclose(ls_resid(Z), ls_resid(Xs), atol=1e-8)

    def test_deflation_reduces_residual(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(20, 6))
        y = rng.normal(size=20)
        model = fit_pls(X, y, 5)
        Xs = (X - model.mean) / model.scale
        norms = [np.linalg.norm(Xs)]
        Xk = Xs.copy()
        for a in range(5):
            t = Xk @ model.weights[:, a]
            Xk = Xk - np.outer(t, Xk.T @ t / (t @ t))
            norms.append(np.linalg.norm(Xk))
        assert all(b <= a + 1e-12 for a, b in zip(norms, norms[1:]))

    def test_deterministic(self):
        X = np.random.default_rng(5).normal(size=(12, 5))
        a, b = fit_pls(X, X[:, 1], 3), fit_pls(X, X[:, 1], 3)
        np.testing.assert_array_equal(a.weights, b.weights)


class TestTable:
    def test_entries_validated(self):
        with pytest.raises(ValueError):
            MonotonicityTable(np.array([[2, 0]]))

    def test_direction_mapping(self):
        t = MonotonicityTable(np.array([[1, 0], [-1, 1], [0, 0]]))
        assert t.directions(0) == [(0, Direction.NONDECREASING), (1, Direction.NONINCREASING)]
        assert t.directions(1) == [(1, Direction.NONDECREASING)]

    def test_csv_roundtrip(self, tmp_path):
        t = MonotonicityTable(REFERENCE_SIGNS)
        t.write_csv(tmp_path / "m.csv")
        np.testing.assert_array_equal(MonotonicityTable.read_csv(tmp_path / "m.csv").entries, REFERENCE_SIGNS)

    def test_plain_csv(self, tmp_path):
        (tmp_path / "m.csv").write_text("1,-1\n0,1\n")
        np.testing.assert_array_equal(MonotonicityTable.read_csv(tmp_path / "m.csv").entries, [[1, -1], [0, 1]])

    def test_reference_shape(self):
        assert REFERENCE_SIGNS.shape == (17, 5)


class TestSynthetic:
    def test_shapes_and_positivity(self):
        data, table = synthetic_dataset(34, seed=1)
        assert data.X.shape == (34, 17) and data.Y.shape == (34, 5)
        assert np.all(data.Y > 0)
        assert table.shape == (17, 5)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 1000), v=st.integers(0, 16), q=st.integers(0, 4))
    def test_trends_follow_table(self, seed, v, q):
        truth = synthetic_truth(seed)
        x = np.random.default_rng(seed).uniform(size=(8, 17))
        up = x.copy()
        up[:, v] = np.minimum(up[:, v] + 0.2, 1.0)
        delta = truth(up)[:, q] - truth(x)[:, q]
        sign = REFERENCE_SIGNS[v, q]
        if sign == 0:
            np.testing.assert_array_equal(delta, 0.0)
        else:
            assert np.all(sign * delta >= -1e-12)

    def test_noiseless_matches_truth(self):
        data, _ = synthetic_dataset(10, seed=4, noise=0.0)
        np.testing.assert_allclose(data.Y, synthetic_truth(4)(data.X))

    def test_csv_roundtrip(self, tmp_path):
        data, _ = synthetic_dataset(5, seed=0)
        write_dataset(tmp_path / "d.csv", data)
        back = read_dataset(tmp_path / "d.csv")
        np.testing.assert_array_equal(back.X, data.X)
        np.testing.assert_array_equal(back.Y, data.Y)
        assert back.q_names == data.q_names

    def test_seeded(self):
        a, _ = synthetic_dataset(10, seed=3)
        b, _ = synthetic_dataset(10, seed=3)
        np.testing.assert_array_equal(a.Y, b.Y)


class TestReducedPriors:
    def test_one_term_per_nonzero_entry(self):
        data, table = synthetic_dataset(20, seed=0)
        pls = fit_pls(data.X, data.Y[:, 0], 5)
        terms = reduced_mono_priors(data.X, pls, table, 0, 16, 1.0)
        assert len(terms) == int(np.count_nonzero(REFERENCE_SIGNS[:, 0]))
        assert all(t.points.shape == (16, 5) for t in terms)
        directions = {t.name: t.params["direction"] for t in terms}
        assert directions["mono_x1"] is Direction.NONDECREASING
        assert directions["mono_x4"] is Direction.NONINCREASING


class TestRunL2O:
    def test_bookkeeping_and_oracle(self):
        data, table = synthetic_dataset(8, seed=0)
        rep = run_l2o(data, table, CrossValConfig(method="baseline", ncomp=3))
        assert rep.n_folds == 28 and rep.n_predictions == 56
        for q, P in enumerate(rep.predictions):
            assert P.shape == (56, 5)
            yh, y = P[:, 3], P[:, 4]
            np.testing.assert_array_equal(y, data.Y[P[:, 2].astype(int), q])
            assert rep.are[q] == pytest.approx(np.mean(np.abs(yh - y) / np.abs(y)), abs=1e-12)
            assert rep.aae[q] == pytest.approx(np.mean(np.abs(yh - y)), abs=1e-12)
        rows = rep.rows()
        assert [r["qoi"] for r in rows] == ["q1", "q2", "q3", "q4", "q5", "overall"]
        assert rows[-1]["ARE"] == pytest.approx(np.mean(rep.are))

    def test_realizable_response(self):
        # every held-out response is a smooth function of the reduced inputs, so the
        # interpolant of the rest predicts it far better than a constant
        rng = np.random.default_rng(0)
        X = rng.uniform(size=(12, 3))
        y = 5.0 + X @ np.array([1.0, -2.0, 0.5])
        data = MultiQoiData(X, y[:, None], ("x1", "x2", "x3"), ("q1",))
        rep = run_l2o(data, None, CrossValConfig(method="baseline", ncomp=3, epsilon=0.5))
        # compare with predicting the mean of the ten retained responses
        naive = [
            abs(np.delete(y, [i, j]).mean() - y[k]) / y[k] for i, j in l2o_folds(12) for k in (i, j)
        ]
        assert rep.are[0] < 0.1 * np.mean(naive)

    def test_rbf_expansion_response_interpolated(self):
        rng = np.random.default_rng(1)
        X = rng.uniform(size=(6, 2))
        y = 3.0 + assemble_phi(X, X[:2], KernelSpec("gaussian", 1.0)) @ np.array([1.0, 2.0])
        data = MultiQoiData(X, y[:, None], ("x1", "x2"), ("q1",))
        rep = run_l2o(data, None, CrossValConfig(method="baseline", ncomp=2))
        assert np.isfinite(rep.are[0])

    def test_table_shape_checked(self):
        data, _ = synthetic_dataset(5, seed=0)
        with pytest.raises(ValueError):
            run_l2o(data, MonotonicityTable(np.zeros((3, 5), int)), CrossValConfig(method="baseline", ncomp=2))

    def test_rbfgen_runs_small(self, tmp_path):
        data, table = synthetic_dataset(5, seed=0)
        from rbfgen.training import TrainConfig

        cfg = CrossValConfig(method="rbfgen", ncomp=2, train=TrainConfig(iterations=5, batch_size=4, hidden=(4,)))
        rep = run_l2o(data, table, cfg)
        assert np.all(np.isfinite(rep.are))
        write_report(tmp_path / "r.csv", [rep])
        assert len((tmp_path / "r.csv").read_text().splitlines()) == 7
