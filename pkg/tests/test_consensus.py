import warnings
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dppcluster.consensus import (
    BackendError,
    ConsensusConfig,
    ConsensusMatrix,
    DeterminantalConsensusClustering,
    Partition,
    accumulate,
    consensus_cluster,
    friend_closure,
    merge_small,
    prepare_backend,
    run_all,
    run_backend,
    select_candidate,
    threshold_scan,
    thresholds,
    validation_index,
    voronoi_partition,
)
from dppcluster.kernel import estimate_bandwidth, rbf_kernel
from dppcluster.metrics import adjusted_rand
from sklearn.metrics import silhouette_score

from conftest import blob_data
from oracles import closure_components, same_partition

partitions = st.integers(2, 12).flatmap(
    lambda n: st.lists(st.lists(st.integers(0, 3), min_size=n, max_size=n), min_size=1, max_size=6))


def matrix_from(parts):
    C = ConsensusMatrix(len(parts[0]))
    for p in parts:
        C.add(Partition.from_labels(p))
    return C


class TestPartition:
    def test_dense_ids_required(self):
        with pytest.raises(ValueError):
            Partition(np.array([0, 2]))
        with pytest.raises(ValueError):
            Partition(np.array([], dtype=int))

    def test_from_labels_first_appearance(self):
        p = Partition.from_labels([7, 3, 7, 9])
        assert p.labels.tolist() == [0, 1, 0, 2]
        assert p.k == 3 and p.sizes().tolist() == [2, 1, 1]
        assert [m.tolist() for m in p.members()] == [[0, 2], [1], [3]]


class TestVoronoi:
    def test_one_center(self):
        X = np.arange(5.0)[:, None]
        assert voronoi_partition(X, [2]).k == 1

    def test_all_centers(self):
        X = np.arange(5.0)[:, None]
        assert voronoi_partition(X, np.arange(5)).k == 5

    def test_hand_case(self):
        X = np.array([[0.0], [1.0], [10.0], [11.0]])
        assert voronoi_partition(X, [1, 2]).labels.tolist() == [0, 0, 1, 1]

    def test_tie_goes_to_smaller_center(self):
        X = np.array([[0.0], [1.0], [2.0]])
        assert voronoi_partition(X, [2, 0]).labels.tolist() == [0, 0, 1]

    def test_duplicate_points_empty_cell_dropped(self):
        X = np.array([[0.0], [0.0], [5.0]])
        p = voronoi_partition(X, [0, 1, 2])
        assert p.k == 2 and p.labels.tolist() == [0, 0, 1]

    def test_empty_centers(self):
        with pytest.raises(ValueError):
            voronoi_partition(np.zeros((3, 1)), [])


class TestConsensusMatrix:
    def test_half(self):
        C = matrix_from([[0, 0, 1], [0, 1, 1]])
        assert C.value(0, 1) == Fraction(1, 2)
        assert C.value(1, 2) == Fraction(1, 2)
        assert C.value(0, 2) == 0 and C.value(2, 2) == 1

    def test_identical_runs_binary(self):
        C = matrix_from([[0, 1, 1, 2]] * 5)
        assert set(np.unique(C.toarray()).tolist()) <= {0.0, 1.0}

    @settings(max_examples=50, deadline=None)
    @given(partitions)
    def test_counts_against_brute_force(self, parts):
        C = matrix_from(parts)
        n = len(parts[0])
        ref = sum((np.array(p)[:, None] == np.array(p)[None, :]).astype(int) for p in parts)
        assert np.array_equal(C.dense_counts(), ref)
        assert C.counts.max(initial=0) <= C.R == len(parts)
        # each run adds sum_k n_k^2 - n ordered off-diagonal pairs
        rowsum = (C.dense_counts().sum() - n * C.R)
        assert rowsum == sum(int((np.bincount(p) ** 2).sum()) - n for p in parts)

    @settings(max_examples=30, deadline=None)
    @given(partitions, st.randoms())
    def test_order_independent(self, parts, rnd):
        shuffled = list(parts)
        rnd.shuffle(shuffled)
        assert np.array_equal(matrix_from(parts).counts, matrix_from(shuffled).counts)

    def test_merge_and_accumulate(self):
        a, b = ConsensusMatrix(3), ConsensusMatrix(3)
        accumulate(a, Partition(np.array([0, 0, 1])))
        accumulate(b, Partition(np.array([0, 1, 1])))
        a.merge(b)
        assert a.R == 2 and a.value(0, 1) == Fraction(1, 2)

    def test_overflow(self):
        C = ConsensusMatrix(2, R=65535)
        with pytest.raises(OverflowError):
            C.add(Partition(np.array([0, 0])))

    def test_config_run_cap(self):
        with pytest.raises(ValueError):
            ConsensusConfig(R=65536)


class TestThresholds:
    @settings(max_examples=60, deadline=None)
    @given(partitions, st.floats(0.0, 1.0))
    def test_closure_matches_brute_force(self, parts, theta):
        C = matrix_from(parts)
        adj = C.toarray() >= theta
        assert same_partition(friend_closure(C, theta).labels, closure_components(adj))

    def test_extremes(self):
        C = matrix_from([[0, 0, 1, 1], [0, 0, 0, 1], [0, 1, 1, 1]])
        top = max(C.counts) / C.R
        assert friend_closure(C, top + 1e-9).k == 4
        assert friend_closure(C, 0.0).k == 1

    @settings(max_examples=30, deadline=None)
    @given(partitions)
    def test_monotone_in_theta(self, parts):
        C = matrix_from(parts)
        ks = [friend_closure(C, th).k for th in np.linspace(0, 1, 21)]
        assert all(a <= b for a, b in zip(ks, ks[1:]))

    def test_grid_distinct_values(self):
        C = matrix_from([[0, 0, 1, 1], [0, 0, 0, 1], [0, 1, 1, 1], [0, 0, 1, 1]])
        grid = thresholds(C, tau=0.3)
        observed = {c / 4 for c in C.counts.tolist()}
        assert set(grid.tolist()) == {v for v in observed if 0.3 < v < 1}
        assert np.all(np.diff(grid) > 0)

    def test_grid_quantiles(self, rng):
        parts = [rng.integers(0, 3, 40) for _ in range(200)]
        C = matrix_from(parts)
        grid = thresholds(C, tau=0.0, n_thresholds=10)
        assert grid.size == 10 and np.all(np.diff(grid) >= 0)

    def test_scan_warns_when_empty(self):
        C = matrix_from([[0, 1, 2]])
        with pytest.warns(RuntimeWarning, match="above tau"):
            out = threshold_scan(C, ConsensusConfig(tau=0.3))
        assert len(out) == 1 and out[0][1].k == 1


class TestMerge:
    def test_unchanged(self):
        C = matrix_from([[0, 0, 1, 1]])
        p = Partition(np.array([0, 0, 1, 1]))
        assert merge_small(C, p, 2) is p

    def test_two_clusters_singleton(self):
        C = matrix_from([[0, 0, 0, 1]])
        assert merge_small(C, Partition(np.array([0, 0, 0, 1])), 2).k == 1

    def test_planted_target(self):
        # clusters {0,1,2} {3,4,5} {6,7,8} and singleton {9}; C(9, 7) is the planted maximum
        n = 10
        counts = np.zeros((n, n), dtype=int)
        for a, b, c in ((9, 7, 5), (9, 1, 3), (9, 4, 3)):
            counts[a, b] = counts[b, a] = c
        iu = np.triu_indices(n, 1)
        C = ConsensusMatrix(n, counts[iu], R=10)
        p = Partition(np.array([0, 0, 0, 1, 1, 1, 2, 2, 2, 3]))
        out = merge_small(C, p, 2)
        assert out.k == 3 and out.labels[9] == out.labels[7]

    def test_tie_lexicographic(self):
        n = 5
        counts = np.zeros((n, n), dtype=int)
        # singleton 4 ties between point 0 (cluster a) and point 2 (cluster b)
        counts[4, 0] = counts[0, 4] = counts[4, 2] = counts[2, 4] = 3
        C = ConsensusMatrix(n, counts[np.triu_indices(n, 1)], R=4)
        out = merge_small(C, Partition(np.array([0, 0, 1, 1, 2])), 2)
        assert out.labels[4] == out.labels[0]

    @settings(max_examples=50, deadline=None)
    @given(partitions, st.integers(1, 6))
    def test_invariants(self, parts, min_size):
        C = matrix_from(parts)
        p = Partition.from_labels(parts[0])
        out = merge_small(C, p, min_size)
        assert out.k <= p.k
        assert out.k == 1 or out.sizes().min() >= min_size
        # merging only unions clusters
        for idx in p.members():
            assert np.unique(out.labels[idx]).size == 1


class TestValidationIndex:
    def test_singletons_zero(self, rng):
        X = rng.standard_normal((6, 2))
        L = rbf_kernel(X, estimate_bandwidth(X))
        assert validation_index(L, Partition(np.arange(6)), "ratio") == pytest.approx(0.0, abs=1e-12)

    def test_one_cluster_inf(self, rng):
        X = rng.standard_normal((6, 2))
        L = rbf_kernel(X, estimate_bandwidth(X))
        assert validation_index(L, Partition(np.zeros(6, dtype=int))) == np.inf

    def test_formula(self, rng):
        X = rng.standard_normal((9, 2))
        K = rbf_kernel(X, estimate_bandwidth(X)).toarray()
        lab = np.array([0, 0, 0, 1, 1, 2, 2, 2, 2])
        W = B = 0.0
        for c in range(3):
            idx = lab == c
            S = K[np.ix_(idx, idx)].sum()
            W += np.trace(K[np.ix_(idx, idx)]) - S / idx.sum()
            B += S / idx.sum()
        B -= K.sum() / 9
        p = Partition(lab)
        assert validation_index(K, p, "ratio") == pytest.approx(W / B, rel=1e-12)
        assert validation_index(K, p, "scaled") == pytest.approx(3 ** 0.75 * W / B, rel=1e-12)
        assert validation_index(K, p, "scaled", power=1.0) == pytest.approx(3 * W / B, rel=1e-12)

    def test_silhouette_matches_euclidean_for_linear_kernel(self, rng):
        X = rng.standard_normal((30, 3))
        lab = rng.integers(0, 3, 30)
        lab[:3] = [0, 1, 2]
        expected = silhouette_score(X, lab)
        assert validation_index(X @ X.T, Partition(lab), "silhouette") == pytest.approx(-expected, rel=1e-9)

    def test_combined_is_rank_sum(self, rng):
        X, y = blob_data(rng, n_per=10)
        K = rbf_kernel(X, estimate_bandwidth(X)).toarray()
        cands = [Partition(y), Partition(rng.permutation(y)), Partition(np.zeros_like(y)),
                 Partition.from_labels(np.arange(y.size) % 2)]
        values, best = select_candidate(K, cands)
        a = [validation_index(K, p, "scaled") for p in cands[:2] + cands[3:]]
        b = [validation_index(K, p, "silhouette") for p in cands[:2] + cands[3:]]
        ranks = [sum(x > v for v in a) + sum(x == v for v in a) / 2 + 0.5 for x in a]
        ranks = [r + sum(x > v for v in b) + sum(x == v for v in b) / 2 + 0.5 for r, x in zip(ranks, b)]
        assert np.isinf(values[2])
        np.testing.assert_allclose(np.delete(values, 2), ranks)
        assert best == 0

    def test_all_infinite_keeps_most_clusters(self, rng):
        K = np.eye(5)
        with pytest.warns(RuntimeWarning, match="infinite"):
            _, best = select_candidate(K, [Partition(np.zeros(5, dtype=int))] * 2)
        assert best == 0

    @pytest.mark.parametrize("kind", ["ratio", "scaled", "silhouette"])
    def test_true_split_wins(self, rng, kind):
        X, y = blob_data(rng, n_per=10)
        L = rbf_kernel(X, estimate_bandwidth(X))
        rand = rng.permutation(y)
        assert validation_index(L, Partition(y), kind) < validation_index(L, Partition(rand), kind)


@pytest.fixture(scope="module")
def blobs():
    rng = np.random.default_rng(8)
    return blob_data(rng, n_per=40, centers=((0, 0), (5, 0), (0, 5)), sd=0.6)


class TestBackends:
    def test_submatrix_shapes(self):
        cfg = ConsensusConfig(backend="submatrix", gamma=0.05)
        assert cfg.submatrix_shape(1000) == (4000, 50)
        assert ConsensusConfig(backend="submatrix", gamma=0.1).submatrix_shape(1000) == (500, 100)

    @given(st.floats(0.02, 0.5), st.integers(100, 5000))
    def test_budget(self, gamma, n):
        cfg = ConsensusConfig(backend="submatrix", gamma=gamma, t=1)
        M, r = cfg.submatrix_shape(n)
        try:
            cfg.check(n)
        except ValueError as exc:
            assert "budget" in str(exc) or "order" in str(exc)
            return
        assert M * r**3 < n**3

    def test_nngp_context(self, blobs):
        X, _ = blobs
        ctx = prepare_backend(X, ConsensusConfig(t=25))
        assert ctx.pairs.t == 25

    def test_submatrix_centers_inside_their_set(self, blobs):
        X, _ = blobs
        cfg = ConsensusConfig(backend="submatrix", gamma=0.2, t=5, R=5)
        ctx = prepare_backend(X, cfg)
        assert len(ctx.submatrices) == cfg.submatrix_shape(len(X))[0]
        sets = [set(p.global_indices().tolist()) for p in ctx.submatrices]
        for r in range(10):
            _, centers = run_backend(ctx, cfg, r)
            assert any(set(centers.tolist()) <= s for s in sets)

    def test_runs_reproducible_and_thread_independent(self, blobs):
        X, _ = blobs
        cfg = ConsensusConfig(R=12)
        ctx = prepare_backend(X, cfg)
        a, _ = run_backend(ctx, cfg, 7)
        b, _ = run_backend(ctx, cfg, 7)
        assert np.array_equal(a.labels, b.labels)
        C1, _ = run_all(ctx, cfg)
        C3, _ = run_all(ctx, ConsensusConfig(R=12, threads=3))
        assert np.array_equal(C1.counts, C3.counts)

    @pytest.mark.parametrize("backend", ["uniform", "kmeanspp"])
    def test_baseline_center_count(self, blobs, backend):
        X, _ = blobs
        cfg = ConsensusConfig(backend=backend, R=3, n_centers=4)
        ctx = prepare_backend(X, cfg)
        part, centers = run_backend(ctx, cfg, 0)
        assert len(centers) == 4 and part.k <= 4

    def test_backend_error_tagged(self, blobs):
        X, _ = blobs
        with pytest.raises(BackendError) as info:
            prepare_backend(X, ConsensusConfig(backend="dense", dense_cap=10))
        assert info.value.backend == "dense"

    def test_t_exceeds_n(self):
        with pytest.raises(ValueError):
            ConsensusConfig(t=50).check(20)


class TestPipeline:
    @pytest.mark.parametrize("backend", ["nngp", "dense", "uniform", "kmeanspp", "submatrix"])
    def test_blobs_recovered(self, blobs, backend):
        X, y = blobs
        kw = dict(gamma=0.25, t=8) if backend == "submatrix" else {}
        res = consensus_cluster(X, ConsensusConfig(backend=backend, R=60, **kw))
        assert adjusted_rand(res.final, y) >= 0.9
        assert res.final.sizes().min() >= res.provenance["min_cluster_size"] or res.final.k == 1
        assert res.chosen_threshold in [row[0] for row in res.per_threshold]
        d = res.to_dict()
        assert d["k"] == res.final.k and len(d["labels"]) == len(y)

    def test_row_sampled_index(self, blobs):
        X, y = blobs
        full = consensus_cluster(X, ConsensusConfig(R=30, seed=2))
        same = consensus_cluster(X, ConsensusConfig(R=30, seed=2, index_rows=len(y)))
        part = consensus_cluster(X, ConsensusConfig(R=30, seed=2, index_rows=60))
        assert np.array_equal(full.final.labels, same.final.labels)
        assert not same.provenance["index_approximate"]
        assert part.provenance["index_approximate"]
        assert adjusted_rand(part.final, y) >= 0.9

    def test_deterministic(self, blobs):
        X, _ = blobs
        a = consensus_cluster(X, ConsensusConfig(R=20, seed=4))
        b = consensus_cluster(X, ConsensusConfig(R=20, seed=4, threads=2))
        assert np.array_equal(a.final.labels, b.final.labels)
        assert np.array_equal(a.consensus.counts, b.consensus.counts)

    def test_single_run_uniform(self, blobs):
        X, _ = blobs
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = consensus_cluster(X, ConsensusConfig(backend="uniform", R=1))
        assert res.final.n == len(X)

    def test_estimator(self, blobs):
        X, y = blobs
        est = DeterminantalConsensusClustering(R=40)
        labels = est.fit_predict(X)
        assert adjusted_rand(labels, y) >= 0.9
        assert est.consensus_.R == 40
        assert est.get_params()["index"] == "combined"
