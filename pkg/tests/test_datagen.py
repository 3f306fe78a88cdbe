import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from dppcluster.datagen import (
    DegenerateComponentError,
    MixtureModel,
    MixtureSpec,
    OverlapInfeasibleError,
    bayes_classify,
    cap_eccentricity,
    draw_mixture_model,
    estimate_pairwise_overlap,
    generate_dataset,
    overlap_matrix,
)


def one_d(m0, m1, v0=1.0, v1=1.0, w=(0.5, 0.5)):
    return MixtureModel(np.array([[m0], [m1]]), np.array([[[v0]], [[v1]]]), np.array(w))


class TestDraw:
    def test_means_in_cube(self):
        m = draw_mixture_model(MixtureSpec(p=5, K=4, n=1000), np.random.default_rng(0))
        assert m.means.shape == (4, 5)
        assert np.all((m.means >= 0) & (m.means <= 1))
        assert abs(m.weights.sum() - 1) <= 1e-12

    def test_deterministic(self):
        spec = MixtureSpec(p=2, K=2, n=100)
        a = draw_mixture_model(spec, np.random.default_rng(5))
        b = draw_mixture_model(spec, np.random.default_rng(5))
        assert np.array_equal(a.covariances, b.covariances)

    def test_covariances_spd(self):
        m = draw_mixture_model(MixtureSpec(p=10, K=5, n=1000), np.random.default_rng(1))
        for c in m.covariances:
            np.linalg.cholesky(c)
            assert np.array_equal(c, c.T)

    def test_wishart_mean(self):
        spec = MixtureSpec(p=3, K=1, n=100)
        rng = np.random.default_rng(2)
        covs = np.stack([draw_mixture_model(spec, rng).covariances[0] for _ in range(4000)])
        # E[W] = df * I with df = p + 1
        assert np.allclose(covs.mean(0), 4 * np.eye(3), atol=0.25)


class TestSpec:
    @pytest.mark.parametrize(
        "kw",
        [dict(p=0, K=2, n=10), dict(p=2, K=2, n=10, overlap_lo=0.2, overlap_hi=0.1),
         dict(p=2, K=2, n=10, overlap_hi=0.5), dict(p=2, K=15, n=100),
         dict(p=2, K=2, n=100, max_eccentricity=1.0)],
    )
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            MixtureSpec(**kw)

    def test_default_min_size(self):
        assert MixtureSpec(p=2, K=4, n=1000).min_size == 32


class TestOverlap:
    def test_identical_components(self):
        w = estimate_pairwise_overlap(one_d(0, 0), (0, 1), 4000, 0)
        assert w == pytest.approx(1.0, abs=0.05)

    def test_separated(self):
        assert estimate_pairwise_overlap(one_d(0, 100), (0, 1), 2000, 0) == 0.0

    def test_gaussian_tail(self):
        w = estimate_pairwise_overlap(one_d(0, 2), (0, 1), 200_000, 0)
        assert w == pytest.approx(2 * norm.cdf(-1), abs=0.005)

    def test_degenerate(self):
        with pytest.raises(DegenerateComponentError, match="degenerate component"):
            estimate_pairwise_overlap(one_d(0, 1, v0=0.0), (0, 1))

    def test_same_pair_rejected(self):
        with pytest.raises(ValueError):
            estimate_pairwise_overlap(one_d(0, 1), (1, 1))

    def test_matrix_agrees_with_pairwise(self):
        m = draw_mixture_model(MixtureSpec(p=2, K=3, n=100), np.random.default_rng(3))
        W = overlap_matrix(m, 50_000, 1)
        assert np.array_equal(W, W.T) and np.all(np.diag(W) == 0)
        for k, l in ((0, 1), (0, 2), (1, 2)):
            assert W[k, l] == pytest.approx(estimate_pairwise_overlap(m, (k, l), 50_000, 2), abs=0.01)

    @pytest.mark.parametrize("seed", [0, 1, 2, 3])
    def test_scaling_never_decreases(self, seed):
        m = draw_mixture_model(MixtureSpec(p=3, K=3, n=100), np.random.default_rng(seed))
        # common random numbers make the comparison exact in distribution
        a = overlap_matrix(m.scaled(0.01), 5000, 7)
        b = overlap_matrix(m.scaled(0.04), 5000, 7)
        assert np.all(b >= a - 1e-12)


class TestEccentricity:
    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000), st.integers(2, 8), st.floats(0.1, 0.95))
    def test_cap(self, seed, p, e):
        G = np.random.default_rng(seed).standard_normal((p, p + 1))
        C = G @ G.T
        out = cap_eccentricity(C, e)
        w0, w = np.linalg.eigvalsh(C), np.linalg.eigvalsh(out)
        assert np.sqrt(max(1 - w[0] / w[-1], 0)) <= e + 1e-9
        assert w[-1] == pytest.approx(w0[-1], rel=1e-9)
        np.linalg.cholesky(out)

    def test_within_cap_unchanged(self):
        C = np.diag([1.0, 0.9])
        assert cap_eccentricity(C, 0.9) is C


class TestGenerate:
    def test_standard_scenario(self):
        model, data = generate_dataset(MixtureSpec(p=5, K=4, n=1000, seed=3))
        sizes = np.bincount(data.labels, minlength=4)
        assert data.points.shape == (1000, 5)
        assert sizes.sum() == 1000 and sizes.min() >= 32
        assert 0.001 <= data.info["overlap_achieved"] <= 0.01
        assert abs(model.weights.sum() - 1) <= 1e-12
        agree = np.mean(bayes_classify(model, data.points) == data.labels)
        assert agree >= 0.95

    def test_single_component(self):
        _, data = generate_dataset(MixtureSpec(p=3, K=1, n=100))
        assert np.all(data.labels == 0)

    def test_deterministic(self):
        spec = MixtureSpec(p=2, K=3, n=200, seed=9)
        a, b = generate_dataset(spec)[1], generate_dataset(spec)[1]
        assert np.array_equal(a.points, b.points) and np.array_equal(a.labels, b.labels)

    def test_component_means(self):
        model, data = generate_dataset(MixtureSpec(p=4, K=3, n=900, seed=4))
        for k in range(3):
            pts = data.points[data.labels == k]
            bound = 5 * np.sqrt(np.trace(model.covariances[k]) / len(pts))
            assert np.linalg.norm(pts.mean(0) - model.means[k]) <= bound

    def test_infeasible(self):
        # with 100 draws per component the K=2 estimate lives on a 0.01 grid
        spec = MixtureSpec(p=2, K=2, n=100, overlap_lo=0.3951, overlap_hi=0.3959, mc_samples=100,
                           max_draws=3, seed=1)
        with pytest.raises(OverlapInfeasibleError, match="overlap target infeasible"):
            generate_dataset(spec)

    def test_max_statistic(self):
        model, data = generate_dataset(MixtureSpec(p=3, K=4, n=400, overlap_stat="max", seed=2))
        W = overlap_matrix(model, 2000, 0)
        assert W.max() <= 0.03
        assert data.info["overlap_stat"] == "max"
