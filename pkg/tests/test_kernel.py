import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dppcluster.kernel import (
    Bandwidth,
    RBFKernel,
    SymmetricDense,
    estimate_bandwidth,
    k_for_sparseness,
    knn_sparsify,
    principal_submatrix,
    rbf_kernel,
)


def brute_bandwidth(X):
    n = X.shape[0]
    tot = sum(((X[i] - X[j]) ** 2).sum() for i in range(n) for j in range(i + 1, n))
    return tot / (n * (n - 1) / 2)


class TestBandwidth:
    def test_two_points(self):
        X = np.array([[0.0, 0.0], [3.0, 4.0]])
        assert estimate_bandwidth(X).sigma2 == pytest.approx(25.0)

    def test_collinear_points(self):
        X = np.array([[0.0], [1.0], [3.0]])
        assert estimate_bandwidth(X).sigma2 == pytest.approx(14.0 / 3.0, rel=1e-14)

    def test_identical_points_rejected(self):
        with pytest.raises(ValueError, match="zero bandwidth"):
            estimate_bandwidth(np.ones((5, 2)))

    def test_nonpositive_sigma_rejected(self):
        with pytest.raises(ValueError):
            Bandwidth(0.0)

    @settings(max_examples=40, deadline=None)
    @given(arrays(np.float64, (7, 3), elements=st.floats(-10, 10)), st.floats(-50, 50))
    def test_matches_pair_sum_and_translation(self, X, shift):
        if np.ptp(X, axis=0).max() < 1e-3:
            return
        ref = brute_bandwidth(X)
        assert estimate_bandwidth(X).sigma2 == pytest.approx(ref, rel=1e-9)
        assert estimate_bandwidth(X + shift).sigma2 == pytest.approx(ref, rel=1e-6)


class TestRBF:
    def test_known_entries(self):
        s2 = 0.5
        # squared distance 2 * sigma2 = 1 between points 0 and 1
        X = np.array([[0.0], [1.0], [0.0]])
        L = rbf_kernel(X, Bandwidth(s2)).toarray()
        assert L[0, 2] == 1.0
        assert L[0, 1] == pytest.approx(np.exp(-1.0), rel=1e-15)
        assert np.all(np.diag(L) == 1.0)

    def test_psd_and_symmetric(self, rng):
        X = rng.standard_normal((150, 4))
        M = rbf_kernel(X, estimate_bandwidth(X)).toarray()
        assert np.array_equal(M, M.T)
        w = np.linalg.eigvalsh(M)
        assert w.min() >= -1e-8 * w.max()
        assert np.all((M > 0) & (M <= 1))

    def test_block_rows_do_not_change_values(self, rng):
        X = rng.standard_normal((37, 2))
        bw = estimate_bandwidth(X)
        a = rbf_kernel(X, bw).packed
        b = rbf_kernel(X, bw, block_rows=5).packed
        assert np.allclose(a, b, rtol=0, atol=1e-14)

    def test_packed_round_trip(self, rng):
        G = rng.standard_normal((6, 6))
        M = G + G.T
        S = SymmetricDense.from_dense(M)
        assert np.array_equal(S.toarray(), M)
        assert np.array_equal(S.diagonal(), np.diag(M))
        assert np.allclose(S.matvec(np.ones(6)), M.sum(1))

    def test_estimator(self, rng):
        X = rng.standard_normal((20, 2))
        est = RBFKernel().fit(X)
        assert est.bandwidth_.sigma2 == pytest.approx(brute_bandwidth(X))
        assert np.array_equal(est.transform(X).packed, rbf_kernel(X, est.bandwidth_).packed)
        assert RBFKernel(sigma2=2.0).get_params() == {"sigma2": 2.0}


class TestSubmatrix:
    def test_full_index_is_copy(self, small_kernel):
        _, L = small_kernel
        S = principal_submatrix(L, np.arange(L.order))
        assert np.array_equal(S.toarray(), L.toarray())

    def test_singleton(self, small_kernel):
        _, L = small_kernel
        S = principal_submatrix(L, [7])
        assert S.toarray().tolist() == [[1.0]]
        assert S.index_map.tolist() == [7]

    def test_commutes_with_subsetting(self, small_kernel):
        X, L = small_kernel
        idx = np.array([40, 3, 17, 9, 55])
        bw = estimate_bandwidth(X)
        direct = rbf_kernel(X, bw).toarray()[np.ix_(idx, idx)]
        assert np.array_equal(principal_submatrix(L, idx).toarray(), direct)

    def test_index_map_composes(self, small_kernel):
        _, L = small_kernel
        S = principal_submatrix(L, [10, 20, 30])
        T = principal_submatrix(S, [2, 0])
        assert T.index_map.tolist() == [30, 10]

    @pytest.mark.parametrize("idx", [[1, 1], [0, 60], [-1]])
    def test_bad_index(self, small_kernel, idx):
        with pytest.raises((ValueError, IndexError)):
            principal_submatrix(small_kernel[1], idx)

    def test_2x2_minors_nonnegative(self, small_kernel, rng):
        _, L = small_kernel
        for _ in range(50):
            idx = rng.choice(L.order, 2, replace=False)
            assert np.linalg.det(principal_submatrix(L, idx).toarray()) >= -1e-12


def brute_pattern(M, k):
    n = M.shape[0]
    keep = np.eye(n, dtype=bool)
    for i in range(n):
        cand = sorted((j for j in range(n) if j != i), key=lambda j: (-M[i, j], j))[:k]
        for j in cand:
            keep[i, j] = keep[j, i] = True
    return keep


class TestKnn:
    def test_full_k_is_dense(self, small_kernel):
        _, L = small_kernel
        S = knn_sparsify(L, L.order - 1)
        assert S.nnz == L.order**2
        assert np.array_equal(S.toarray(), L.toarray())

    def test_equidistant_tie_break(self):
        h = np.sqrt(3) / 2
        X = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, h]])
        L = rbf_kernel(X, 1.0)
        S = knn_sparsify(L, 1)
        P = S.toarray() != 0
        assert all(P[i, i] and P[i].sum() >= 2 for i in range(3))
        assert S.pattern_is_symmetric()

    def test_matches_brute_and_values(self, small_kernel):
        _, L = small_kernel
        M = L.toarray()
        for k in (1, 3, 8):
            S = knn_sparsify(L, k)
            P = S.toarray() != 0
            assert np.array_equal(P, brute_pattern(M, k))
            assert np.array_equal(S.toarray()[P], M[P])
            assert S.pattern_is_symmetric()
            assert np.all(np.diff(S.matrix.indices[S.matrix.indptr[0]:S.matrix.indptr[1]]) > 0)

    def test_sparseness_monotone(self, small_kernel):
        _, L = small_kernel
        s = [knn_sparsify(L, k).sparseness for k in range(1, L.order)]
        assert all(a >= b for a, b in zip(s, s[1:]))

    def test_r50_k8_near_eighty_percent(self, rng):
        X = rng.standard_normal((50, 5))
        S = knn_sparsify(rbf_kernel(X, estimate_bandwidth(X)), 8)
        assert abs(S.sparseness - 0.8) <= 0.05


class TestKForSparseness:
    def test_target_zero(self, small_kernel):
        _, L = small_kernel
        k, achieved, ok = k_for_sparseness(L, 0.0)
        assert k == L.order - 1 and ok and achieved == 0.0

    def test_r100_forty_percent(self, rng):
        X = rng.standard_normal((100, 5))
        k, achieved, ok = k_for_sparseness(rbf_kernel(X, estimate_bandwidth(X)), 0.4)
        assert ok and achieved >= 0.4
        assert abs(k - 50) <= 5

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000), st.floats(0.05, 0.85))
    def test_achieved_is_recount_and_maximal(self, seed, target):
        X = np.random.default_rng(seed).standard_normal((40, 3))
        L = rbf_kernel(X, estimate_bandwidth(X))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            k, achieved, ok = k_for_sparseness(L, target)
        assert achieved == pytest.approx(knn_sparsify(L, k).sparseness, abs=1e-15)
        if ok:
            assert achieved >= target
            assert abs(achieved - target) <= 0.02 + 2 * 40 / 1600 or k == 1
            if k < L.order - 1:
                assert knn_sparsify(L, k + 1).sparseness < target

    def test_unreachable_warns(self, rng):
        X = rng.standard_normal((10, 2))
        with pytest.warns(RuntimeWarning, match="unreachable"):
            k, _, ok = k_for_sparseness(rbf_kernel(X, estimate_bandwidth(X)), 0.99)
        assert k == 1 and not ok
