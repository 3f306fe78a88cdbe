"""Synthetic Gaussian mixtures with a controlled average pairwise overlap.

Means are uniform on the unit hypercube and covariances are standard
Wishart draws with ``p + 1`` degrees of freedom, optionally reshaped so
their eccentricity ``sqrt(1 - lambda_min / lambda_max)`` stays below a cap.
All covariances are then
scaled by a common factor chosen so the Monte Carlo estimate of the average
(or maximum) pairwise overlap hits a random target inside the requested band.
"""

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

__all__ = [
    "MixtureSpec",
    "MixtureModel",
    "Dataset",
    "OverlapInfeasibleError",
    "DegenerateComponentError",
    "draw_mixture_model",
    "estimate_pairwise_overlap",
    "overlap_matrix",
    "bayes_classify",
    "cap_eccentricity",
    "generate_dataset",
]


class OverlapInfeasibleError(RuntimeError):
    pass


class DegenerateComponentError(ValueError):
    pass


@dataclass(frozen=True)
class MixtureSpec:
    """Simulation scenario.

    ``min_component_size`` defaults to ``ceil(sqrt(n))``. ``overlap_stat`` is
    ``"mean"`` (average pairwise overlap) or ``"max"``.
    """

    p: int
    K: int
    n: int
    overlap_lo: float = 0.001
    overlap_hi: float = 0.01
    min_component_size: Optional[int] = None
    seed: int = 0
    overlap_stat: str = "mean"
    mc_samples: int = 2000
    max_draws: int = 1000
    max_eccentricity: Optional[float] = 0.9

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("p must be positive")
        if self.K < 1:
            raise ValueError("K must be positive")
        if not 0.0 <= self.overlap_lo <= self.overlap_hi <= 0.4:
            raise ValueError("need 0 <= overlap_lo <= overlap_hi <= 0.4")
        if self.overlap_stat not in ("mean", "max"):
            raise ValueError("overlap_stat must be 'mean' or 'max'")
        if self.max_eccentricity is not None and not 0.0 <= self.max_eccentricity < 1.0:
            raise ValueError("max_eccentricity must lie in [0, 1)")
        if self.mc_samples < 100:
            raise ValueError("mc_samples must be at least 100")
        if self.n < self.K * self.min_size:
            raise ValueError(
                f"n={self.n} cannot hold {self.K} components of at least {self.min_size} points"
            )

    @property
    def min_size(self):
        if self.min_component_size is not None:
            return int(self.min_component_size)
        return int(math.ceil(math.sqrt(self.n)))


@dataclass(frozen=True, eq=False)
class MixtureModel:
    means: np.ndarray
    covariances: np.ndarray
    weights: np.ndarray

    @property
    def K(self):
        return self.means.shape[0]

    @property
    def p(self):
        return self.means.shape[1]

    def scaled(self, factor):
        return MixtureModel(self.means, self.covariances * factor, self.weights)

    def to_dict(self):
        return {
            "means": self.means.tolist(),
            "covariances": self.covariances.tolist(),
            "weights": self.weights.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            np.asarray(d["means"], dtype=np.float64),
            np.asarray(d["covariances"], dtype=np.float64),
            np.asarray(d["weights"], dtype=np.float64),
        )


@dataclass(frozen=True, eq=False)
class Dataset:
    points: np.ndarray
    labels: Optional[np.ndarray] = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.all(np.isfinite(self.points)):
            raise ValueError("dataset contains NaN or Inf")
        if self.labels is not None and self.labels.shape != (self.points.shape[0],):
            raise ValueError("one label per point required")

    @property
    def n(self):
        return self.points.shape[0]


def _wishart_identity(rng, p, df):
    """Bartlett decomposition of a Wishart(I_p, df) draw."""
    A = np.zeros((p, p))
    A[np.diag_indices(p)] = np.sqrt(rng.chisquare(df - np.arange(p)))
    low = np.tril_indices(p, -1)
    A[low] = rng.standard_normal(len(low[0]))
    return A @ A.T


def draw_mixture_model(spec, rng):
    """Uniform means, Wishart(I, p + 1) covariances, flat Dirichlet weights."""
    p, K = spec.p, spec.K
    means = rng.uniform(0.0, 1.0, size=(K, p))
    covs = np.stack([_wishart_identity(rng, p, p + 1) for _ in range(K)])
    weights = rng.dirichlet(np.ones(K))
    return MixtureModel(means, covs, weights)


def cap_eccentricity(cov, max_ecc):
    """Shrink the eigenvalue spread so ``sqrt(1 - lmin/lmax) <= max_ecc``.

    Eigenvalues are mapped affinely, ``l -> lmax (1 - e^2 (lmax - l) / (lmax - lmin))``,
    keeping ``lmax`` and the eigenvectors; matrices already within the cap
    are returned unchanged.
    """
    w, U = np.linalg.eigh(cov)
    lmin, lmax = w[0], w[-1]
    if lmax <= 0 or 1.0 - lmin / lmax <= max_ecc**2:
        return cov
    w = lmax * (1.0 - max_ecc**2 * (lmax - w) / (lmax - lmin))
    out = (U * w) @ U.T
    return (out + out.T) / 2.0


def _chol(cov):
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise DegenerateComponentError("degenerate component") from None


def _log_density(x, mean, chol):
    z = np.linalg.solve(chol, (x - mean).T)
    return -0.5 * (z * z).sum(axis=0) - np.log(np.diag(chol)).sum() - 0.5 * mean.size * np.log(2 * np.pi)


def estimate_pairwise_overlap(model, pair, mc_samples=2000, rng=None):
    """Monte Carlo overlap ``w_{l|k} + w_{k|l}`` of two components.

    ``w_{l|k}`` is the probability that a draw from component ``k`` is assigned
    to ``l`` by the two-component Bayes rule with the model's weights; exact
    ties count one half.
    """
    k, l = pair
    if k == l:
        raise ValueError("pair must name two different components")
    if mc_samples < 100:
        raise ValueError("mc_samples must be at least 100")
    rng = np.random.default_rng(rng)
    ck, cl = _chol(model.covariances[k]), _chol(model.covariances[l])
    total = 0.0
    for src, dst, csrc, cdst in ((k, l, ck, cl), (l, k, cl, ck)):
        x = model.means[src] + rng.standard_normal((mc_samples, model.p)) @ csrc.T
        own = np.log(model.weights[src]) + _log_density(x, model.means[src], csrc)
        other = np.log(model.weights[dst]) + _log_density(x, model.means[dst], cdst)
        total += float(np.mean(0.5 * (np.sign(other - own) + 1.0)))
    return total


class _OverlapCalculator:
    """Pairwise overlaps of a model under a common covariance scale ``c``.

    Uses fixed standard-normal draws, so overlap is a deterministic function
    of ``c``. With ``x = mu_k + sqrt(c) C_k z`` the Mahalanobis term under
    component ``l`` is ``|a|^2 / c + 2 a.b / sqrt(c) + |b|^2`` where
    ``a = C_l^{-1}(mu_k - mu_l)`` and ``b = C_l^{-1} C_k z``.
    """

    def __init__(self, model, mc_samples, rng):
        K, p = model.K, model.p
        chols = [_chol(c) for c in model.covariances]
        logdet = np.array([2 * np.log(np.diag(c)).sum() for c in chols])
        logw = np.log(model.weights)
        Z = rng.standard_normal((K, mc_samples, p))
        self.K = K
        self.z2 = (Z * Z).sum(axis=2)  # (K, mc)
        self.a2 = np.zeros((K, K))
        self.ab = np.zeros((K, K, mc_samples))
        self.b2 = np.zeros((K, K, mc_samples))
        self.const = np.zeros((K, K))
        for k in range(K):
            for l in range(K):
                if k == l:
                    continue
                a = np.linalg.solve(chols[l], model.means[k] - model.means[l])
                b = np.linalg.solve(chols[l], chols[k] @ Z[k].T)  # (p, mc)
                self.a2[k, l] = a @ a
                self.ab[k, l] = a @ b
                self.b2[k, l] = (b * b).sum(axis=0)
                self.const[k, l] = logw[l] - logw[k] - 0.5 * (logdet[l] - logdet[k])

    def matrix(self, c):
        """Symmetric matrix of pairwise overlaps at scale ``c``."""
        K = self.K
        score = (
            self.const[:, :, None]
            - 0.5 * (self.a2[:, :, None] / c + 2.0 * self.ab / np.sqrt(c) + self.b2)
            + 0.5 * self.z2[:, None, :]
        )
        miss = (0.5 * (np.sign(score) + 1.0)).mean(axis=2)
        np.fill_diagonal(miss, 0.0)
        return miss + miss.T

    def statistic(self, c, stat):
        W = self.matrix(c)
        iu = np.triu_indices(self.K, 1)
        return float(W[iu].mean() if stat == "mean" else W[iu].max())


def overlap_matrix(model, mc_samples=2000, rng=None):
    """All pairwise overlaps of ``model`` (zero diagonal)."""
    rng = np.random.default_rng(rng)
    if model.K < 2:
        return np.zeros((model.K, model.K))
    return _OverlapCalculator(model, mc_samples, rng).matrix(1.0)


def _calibrate_scale(calc, target, stat):
    lo, hi = -40.0, 20.0
    if calc.statistic(np.exp(hi), stat) < target:
        return None
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if calc.statistic(np.exp(mid), stat) < target:
            lo = mid
        else:
            hi = mid
    return float(np.exp(hi))


def bayes_classify(model, X):
    """Most probable component of each row of ``X``."""
    scores = np.stack(
        [
            np.log(w) + _log_density(X, mu, _chol(cov))
            for mu, cov, w in zip(model.means, model.covariances, model.weights)
        ],
        axis=1,
    )
    return scores.argmax(axis=1)


def generate_dataset(spec, rng=None):
    """Draw a mixture meeting the overlap band, then sample ``n`` points.

    Mixing weights are floored so every component expects at least
    ``min_size`` points: ``w = m/n + (1 - K m/n) * Dirichlet(1)``; component
    sizes are ``m`` plus a multinomial split of the remaining ``n - K m``
    points. Rows are returned in random order.

    Raises
    ------
    OverlapInfeasibleError
        When ``max_draws`` models all miss the overlap band.
    """
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    n, K, msize = spec.n, spec.K, spec.min_size
    floor = msize / n
    for attempt in range(spec.max_draws):
        base = draw_mixture_model(spec, rng)
        if spec.max_eccentricity is not None:
            covs = np.stack([cap_eccentricity(c, spec.max_eccentricity) for c in base.covariances])
            base = MixtureModel(base.means, covs, base.weights)
        weights = floor + (1.0 - K * floor) * base.weights
        model = MixtureModel(base.means, base.covariances, weights / weights.sum())
        target = float(rng.uniform(spec.overlap_lo, spec.overlap_hi))
        achieved = 0.0
        if K >= 2:
            try:
                calc = _OverlapCalculator(model, spec.mc_samples, rng)
            except DegenerateComponentError:
                continue
            scale = _calibrate_scale(calc, target, spec.overlap_stat)
            if scale is None:
                continue
            achieved = calc.statistic(scale, spec.overlap_stat)
            if not spec.overlap_lo <= achieved <= spec.overlap_hi:
                continue
            model = model.scaled(scale)
        sizes = msize + rng.multinomial(n - K * msize, base.weights)
        labels = np.repeat(np.arange(K), sizes)
        points = np.empty((n, spec.p))
        start = 0
        for k, size in enumerate(sizes):
            C = _chol(model.covariances[k])
            points[start:start + size] = model.means[k] + rng.standard_normal((size, spec.p)) @ C.T
            start += size
        order = rng.permutation(n)
        info = {
            "overlap_target": target,
            "overlap_achieved": achieved,
            "overlap_stat": spec.overlap_stat,
            "model_draws": attempt + 1,
            "sizes": sizes.tolist(),
            "spec": asdict(spec),
        }
        return model, Dataset(points[order], labels[order], info)
    raise OverlapInfeasibleError("overlap target infeasible")
