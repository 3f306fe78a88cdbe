"""Consensus clustering from repeated Voronoi partitions.

Each run draws a set of generator points (DPP through an NNGP operator, DPP
through random kernel submatrices, a dense-spectrum DPP, uniform sampling or
k-means++), assigns every point to its nearest generator, and adds the
resulting co-membership pattern to a count matrix. Thresholding the
consensus proportions and taking connected components gives candidate
partitions; small clusters are merged and a kernel scatter index picks one.
"""

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import cdist
from scipy.stats import rankdata
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.cluster import KMeans, kmeans_plusplus
from sklearn.metrics import silhouette_score

from ._validation import check_data, check_index_set
from .dpp import _rng, cardinality_moments, sample_dpp
from .eigen import DENSE_CAP, LanczosConfig, dense_eigh, lanczos_topk, truncate
from .kernel import (
    SymmetricDense,
    estimate_bandwidth,
    k_for_sparseness,
    knn_sparsify,
    principal_submatrix,
    rbf_kernel,
)
from .nngp import NNGPApproximation

__all__ = [
    "run_all",
    "friend_closure",
    "thresholds",
    "BACKENDS",
    "Partition",
    "ConsensusMatrix",
    "ConsensusConfig",
    "ClusteringResult",
    "BackendContext",
    "BackendError",
    "voronoi_partition",
    "prepare_backend",
    "run_backend",
    "accumulate",
    "threshold_scan",
    "merge_small",
    "validation_index",
    "kernel_distances",
    "select_candidate",
    "INDEX_KINDS",
    "consensus_cluster",
    "DeterminantalConsensusClustering",
]

BACKENDS = ("nngp", "submatrix", "dense", "uniform", "kmeanspp")
_MAX_RUNS = np.iinfo(np.uint16).max


class BackendError(RuntimeError):
    """Failure while preparing a backend; ``backend`` names it."""

    def __init__(self, backend, cause):
        super().__init__(f"[{backend}] {cause}")
        self.backend = backend
        self.__cause__ = cause


@dataclass(frozen=True, eq=False)
class Partition:
    """Cluster ids ``0..k-1`` for every point."""

    labels: np.ndarray

    def __post_init__(self):
        lab = np.asarray(self.labels)
        if lab.ndim != 1 or lab.size == 0:
            raise ValueError("labels must be a non-empty 1-d array")
        if lab.min() < 0 or np.unique(lab).size != lab.max() + 1:
            raise ValueError("labels must be dense ids 0..k-1")

    @classmethod
    def from_labels(cls, labels):
        """Relabel arbitrary ids densely in order of first appearance."""
        labels = np.asarray(labels).ravel()
        _, first, inv = np.unique(labels, return_index=True, return_inverse=True)
        rank = np.empty(first.size, dtype=np.int64)
        rank[np.argsort(first, kind="stable")] = np.arange(first.size)
        return cls(rank[inv])

    @property
    def k(self):
        return int(self.labels.max()) + 1

    @property
    def n(self):
        return int(self.labels.size)

    def sizes(self):
        return np.bincount(self.labels, minlength=self.k)

    def members(self):
        order = np.argsort(self.labels, kind="stable")
        bounds = np.cumsum(self.sizes())[:-1]
        return np.split(order, bounds)


class ConsensusMatrix:
    """Co-clustering counts over ``R`` runs, packed strict upper triangle.

    Counts are 16-bit, so at most 65535 runs; the diagonal is implicitly
    ``R``. Proportions are exact rationals ``count / R``.
    """

    def __init__(self, order, counts=None, R=0):
        self.order = int(order)
        size = self.order * (self.order - 1) // 2
        if counts is None:
            counts = np.zeros(size, dtype=np.uint16)
        counts = np.asarray(counts, dtype=np.uint16)
        if counts.shape != (size,):
            raise ValueError("packed counts have the wrong length")
        self.counts = counts
        self.R = int(R)
        self._offsets = None
        self._pairs = None

    def _row_offsets(self):
        if self._offsets is None:
            i = np.arange(self.order, dtype=np.int64)
            self._offsets = i * (2 * self.order - i - 1) // 2 - i - 1
        return self._offsets

    def positions(self, i, j):
        """Packed positions of pairs ``i < j``."""
        return self._row_offsets()[i] + j

    def pairs(self):
        """Row and column of every packed entry (cached)."""
        if self._pairs is None:
            self._pairs = np.triu_indices(self.order, 1)
        return self._pairs

    def add(self, part):
        """Count one partition in place."""
        if part.n != self.order:
            raise ValueError("partition order does not match")
        if self.R >= _MAX_RUNS:
            raise OverflowError("more than 65535 runs")
        for idx in part.members():
            if idx.size < 2:
                continue
            a, b = np.triu_indices(idx.size, 1)
            # pairs within one cluster are distinct, so a plain fancy increment is safe
            self.counts[self.positions(idx[a], idx[b])] += 1
        self.R += 1
        return self

    def merge(self, other):
        if other.order != self.order:
            raise ValueError("orders differ")
        if self.R + other.R > _MAX_RUNS:
            raise OverflowError("more than 65535 runs")
        self.counts += other.counts
        self.R += other.R
        return self

    def dense_counts(self):
        n = self.order
        out = np.empty((n, n), dtype=np.int32)
        iu = self.pairs()
        out[iu] = self.counts
        out.T[iu] = self.counts
        np.fill_diagonal(out, self.R)
        return out

    def toarray(self):
        if self.R == 0:
            raise ValueError("no runs accumulated")
        return self.dense_counts() / float(self.R)

    def value(self, i, j):
        """Exact proportion ``C_ij`` as a Fraction."""
        if i == j:
            return Fraction(1)
        i, j = min(i, j), max(i, j)
        return Fraction(int(self.counts[self.positions(i, j)]), self.R)


def accumulate(C, part):
    """Add the same-cluster pairs of ``part`` to ``C`` (in place; returns ``C``)."""
    return C.add(part)


@dataclass(frozen=True)
class ConsensusConfig:
    """Settings of a consensus clustering run.

    Backend parameters only matter for their backend: ``m``, ``sparseness``,
    ``ridge`` and ``permute`` for nngp; ``gamma``, ``r``, ``k`` and
    ``sparseness`` for submatrix; ``n_centers`` for uniform and kmeanspp.
    """

    R: int = 200
    tau: float = 0.3
    n_thresholds: int = 50
    min_cluster_exponent: float = 0.5
    backend: str = "nngp"
    t: int = 25
    sparseness: float = 0.8
    m: Optional[int] = None
    ridge: Optional[float] = None
    permute: bool = False
    gamma: float = 0.05
    r: Optional[int] = None
    k: Optional[int] = None
    n_centers: Optional[int] = None
    index: str = "combined"
    index_power: float = 0.75
    index_rows: Optional[int] = None
    lanczos_tol: float = 1e-8
    dense_cap: int = DENSE_CAP
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if not 1 <= self.R <= _MAX_RUNS:
            raise ValueError("R must lie in [1, 65535]")
        if not 0.0 <= self.tau < 1.0:
            raise ValueError("tau must lie in [0, 1)")
        if self.n_thresholds < 1:
            raise ValueError("n_thresholds must be positive")
        if not 0.0 < self.min_cluster_exponent < 1.0:
            raise ValueError("min_cluster_exponent must lie in (0, 1)")
        if self.backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}")
        if self.t < 1:
            raise ValueError("t must be positive")
        if not 0.0 <= self.sparseness < 1.0:
            raise ValueError("sparseness must lie in [0, 1)")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if self.index not in INDEX_KINDS:
            raise ValueError(f"index must be one of {INDEX_KINDS}")
        if not self.index_power >= 0.0:
            raise ValueError("index_power must be nonnegative")
        if self.index_rows is not None and self.index_rows < 2:
            raise ValueError("index_rows must be at least 2")
        if self.threads < 1:
            raise ValueError("threads must be positive")

    def min_cluster_size(self, n):
        return int(math.ceil(round(n ** self.min_cluster_exponent, 9)))

    def submatrix_shape(self, n):
        """``(M, r)``: number of submatrices and their order."""
        M = int(math.floor(round(self.gamma ** -3, 9) / 2))
        r = self.r if self.r is not None else int(math.ceil(round(self.gamma * n, 9)))
        return max(M, 1), r

    def check(self, n):
        """Data-dependent checks, including the submatrix work budget ``M r^3 < n^3``."""
        if n < 2:
            raise ValueError("need at least two points")
        if self.backend in ("nngp", "dense") and self.t > n:
            raise ValueError(f"t={self.t} exceeds n={n}")
        if self.backend == "submatrix":
            M, r = self.submatrix_shape(n)
            if not 2 <= r <= n:
                raise ValueError(f"submatrix order r={r} must lie in [2, n]")
            if M * r**3 >= n**3:
                raise ValueError(f"submatrix budget violated: M*r^3 = {M * r**3} >= n^3 = {n**3}")
            if self.t > r:
                raise ValueError(f"t={self.t} exceeds submatrix order r={r}")

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True, eq=False)
class BackendContext:
    """Immutable, shareable inputs of the runs."""

    backend: str
    X: np.ndarray
    kernel: SymmetricDense
    pairs: object = None
    submatrices: tuple = ()
    n_centers: Optional[int] = None
    info: dict = field(default_factory=dict)


@dataclass
class ClusteringResult:
    final: Partition
    chosen_threshold: float
    index_value: float
    per_threshold: list
    provenance: dict
    timings: dict = field(default_factory=dict)
    consensus: Optional[ConsensusMatrix] = None

    def to_dict(self):
        return {
            "labels": self.final.labels.tolist(),
            "k": self.final.k,
            "chosen_threshold": self.chosen_threshold,
            "index_value": self.index_value if np.isfinite(self.index_value) else None,
            "per_threshold": [
                {
                    "threshold": th,
                    "k_before_merge": kb,
                    "k_after_merge": ka,
                    "index": iv if np.isfinite(iv) else None,
                }
                for th, kb, ka, iv in self.per_threshold
            ],
            "provenance": self.provenance,
            "timings": self.timings,
        }


def voronoi_partition(X, centers):
    """Assign each row of ``X`` to its nearest center (Euclidean).

    Ties go to the smaller center index; empty cells are dropped and ids
    follow center order.
    """
    X = np.asarray(getattr(X, "points", X), dtype=np.float64)
    centers = np.sort(check_index_set(centers, X.shape[0]))
    if centers.size == 0:
        raise ValueError("need at least one center")
    d = cdist(X, X[centers], "sqeuclidean")
    nearest = d.argmin(axis=1)
    used = np.unique(nearest)
    remap = np.full(centers.size, -1, dtype=np.int64)
    remap[used] = np.arange(used.size)
    return Partition(remap[nearest])


def _top_pairs(M, t, cap, tol, seed):
    if M.order <= cap:
        return truncate(dense_eigh(M, cap=cap), t)
    return lanczos_topk(M, LanczosConfig(t=t, tol=tol, seed=seed))


def prepare_backend(data, cfg, kernel=None):
    """Build the kernel and whatever spectral data the backend samples from."""
    X = check_data(getattr(data, "points", data), min_samples=2)
    n = X.shape[0]
    cfg.check(n)
    if kernel is None:
        kernel = rbf_kernel(X, estimate_bandwidth(X))
    info = {}
    try:
        if cfg.backend == "nngp":
            approx = NNGPApproximation(
                m=cfg.m, sparseness=cfg.sparseness, ridge=cfg.ridge,
                permute=cfg.permute, random_state=cfg.seed,
            ).fit(X, kernel=kernel)
            pairs = lanczos_topk(approx.operator_, LanczosConfig(t=cfg.t, tol=cfg.lanczos_tol, seed=cfg.seed))
            info.update(m=int(approx.m_), precision_sparseness=approx.precision_sparseness())
            return BackendContext("nngp", X, kernel, pairs, n_centers=None, info=info)
        if cfg.backend == "dense":
            pairs = dense_eigh(kernel, cap=cfg.dense_cap)
            return BackendContext("dense", X, kernel, pairs, info=info)
        if cfg.backend == "submatrix":
            return _prepare_submatrices(X, kernel, cfg)
        # uniform / kmeanspp: match the expected size of the full-kernel DPP
        n_centers = cfg.n_centers
        if n_centers is None:
            spectrum = _top_pairs(kernel, min(n, max(cfg.t, 1)) if n > cfg.dense_cap else n,
                                  cfg.dense_cap, cfg.lanczos_tol, cfg.seed)
            n_centers = int(round(cardinality_moments(np.clip(spectrum.values, 0, None)).mean))
        n_centers = int(min(max(n_centers, 1), n))
        info["n_centers"] = n_centers
        return BackendContext(cfg.backend, X, kernel, n_centers=n_centers, info=info)
    except (np.linalg.LinAlgError, ArithmeticError, RuntimeError, ValueError) as exc:
        if isinstance(exc, BackendError):
            raise
        raise BackendError(cfg.backend, exc) from exc


def _prepare_submatrices(X, kernel, cfg):
    n = X.shape[0]
    M, r = cfg.submatrix_shape(n)
    rng = np.random.default_rng([cfg.seed, 0x5B])
    k = cfg.k
    achieved = None
    subs = []
    for i in range(M):
        idx = rng.choice(n, size=r, replace=False)
        Lsub = principal_submatrix(kernel, idx)
        if k is None:
            # neighbor count fixed from the first submatrix and reused for all
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                k, achieved, _ = k_for_sparseness(Lsub, cfg.sparseness) if cfg.sparseness > 0 else (r - 1, 0.0, True)
        sparse = knn_sparsify(Lsub, min(k, r - 1))
        S = SymmetricDense.from_dense(sparse.toarray(), index_map=Lsub.index_map, check_symmetric=False)
        pairs = _top_pairs(S, cfg.t, cfg.dense_cap, cfg.lanczos_tol, cfg.seed + i)
        subs.append(pairs)
    info = {"M": M, "r": r, "k": int(k), "achieved_sparseness": achieved}
    return BackendContext("submatrix", X, kernel, submatrices=tuple(subs), info=info)


def _run_rng(seed, run_index):
    return np.random.default_rng([int(seed), int(run_index)])


def run_backend(ctx, cfg, run_index):
    """One run: draw centers with the backend, then Voronoi-partition all points.

    Returns
    -------
    partition : Partition
    centers : ndarray of global indices
    """
    rng = _run_rng(cfg.seed, run_index)
    n = ctx.X.shape[0]
    if ctx.backend in ("nngp", "dense"):
        centers = sample_dpp(ctx.pairs, rng, min_size=1).indices
    elif ctx.backend == "submatrix":
        pairs = ctx.submatrices[int(rng.integers(len(ctx.submatrices)))]
        centers = sample_dpp(pairs, rng, min_size=1).indices
    elif ctx.backend == "uniform":
        centers = np.sort(rng.choice(n, size=ctx.n_centers, replace=False))
    else:
        return _kmeanspp_partition(ctx.X, ctx.n_centers, rng)
    return voronoi_partition(ctx.X, centers), centers


def _kmeanspp_partition(X, k, rng):
    seed = int(rng.integers(2**31 - 1))
    # one local trial is plain D^2 seeding
    init, centers = kmeans_plusplus(X, k, random_state=seed, n_local_trials=1)
    km = KMeans(k, init=init, n_init=1, max_iter=100, tol=0.0, algorithm="lloyd").fit(X)
    return Partition.from_labels(km.labels_), np.sort(centers)


def _run_block(ctx, cfg, run_indices):
    C = ConsensusMatrix(ctx.X.shape[0])
    sizes = []
    for r in run_indices:
        part, centers = run_backend(ctx, cfg, r)
        C.add(part)
        sizes.append(len(centers))
    return C, sizes


def run_all(ctx, cfg):
    """All ``R`` runs; blocks of runs may go to threads, counts are summed."""
    runs = np.arange(cfg.R)
    if cfg.threads == 1:
        return _run_block(ctx, cfg, runs)
    blocks = np.array_split(runs, cfg.threads)
    with ThreadPoolExecutor(cfg.threads) as pool:
        parts = list(pool.map(lambda b: _run_block(ctx, cfg, b), blocks))
    C = ConsensusMatrix(ctx.X.shape[0])
    sizes = []
    for c, s in parts:
        C.merge(c)
        sizes.extend(s)
    return C, sizes


def _components(C, count_threshold):
    n = C.order
    keep = C.counts >= count_threshold
    if count_threshold <= 0:
        keep = np.ones_like(keep)
    rows, cols = C.pairs()
    g = coo_matrix((np.ones(int(keep.sum()), dtype=np.int8), (rows[keep], cols[keep])), shape=(n, n))
    _, labels = connected_components(g, directed=False)
    return Partition.from_labels(labels)


def friend_closure(C, theta):
    """Connected components of ``{(i, j): C_ij >= theta}``."""
    if C.R == 0:
        raise ValueError("no runs accumulated")
    # C_ij >= theta  <=>  count >= theta * R, exactly for integer counts
    need = math.ceil(round(theta * C.R, 9))
    if theta > 0:
        need = max(need, 1)
    return _components(C, need)


def thresholds(C, tau=0.3, n_thresholds=50):
    """Distinct observed proportions in ``(tau, 1)``, or evenly spaced quantiles of them."""
    present = np.flatnonzero(np.bincount(C.counts, minlength=C.R + 1))
    values = present / float(C.R)
    values = values[(values > tau) & (present < C.R)]
    if values.size <= n_thresholds:
        return values
    return np.quantile(values, np.linspace(0.0, 1.0, n_thresholds))


def threshold_scan(C, cfg=None):
    """Friend-closure partition at each threshold.

    Returns
    -------
    list of (theta, Partition)
    """
    cfg = cfg or ConsensusConfig()
    grid = thresholds(C, cfg.tau, cfg.n_thresholds)
    if grid.size == 0:
        warnings.warn("no consensus value above tau; returning one cluster", RuntimeWarning)
        return [(float(cfg.tau), Partition(np.zeros(C.order, dtype=np.int64)))]
    return [(float(th), friend_closure(C, th)) for th in grid]


def merge_small(C, part, min_size):
    """Merge under-sized clusters into their most consensual neighbor cluster.

    The smallest under-sized cluster ``V`` (lowest id on ties) joins the
    cluster of ``j`` where ``C_ij`` is maximal over ``i in V``, ``j not in V``;
    ties go to the lexicographically smallest ``(i, j)``.
    """
    if min_size < 1:
        raise ValueError("min_size must be at least 1")
    labels = part.labels.copy()
    sizes = np.bincount(labels)
    if sizes.min() >= min_size or sizes.size == 1:
        return part
    counts = C.dense_counts()
    alive = sizes > 0
    while alive.sum() > 1:
        small = np.flatnonzero(alive & (sizes < min_size))
        if small.size == 0:
            break
        v = small[sizes[small] == sizes[small].min()][0]
        members = np.flatnonzero(labels == v)
        block = counts[members].copy()
        block[:, members] = -1
        # row-major argmax over sorted members picks the smallest (i, j)
        _, j = np.unravel_index(int(block.argmax()), block.shape)
        target = labels[j]
        labels[members] = target
        sizes[target] += sizes[v]
        sizes[v] = 0
        alive[v] = False
    return Partition.from_labels(labels)


INDEX_KINDS = ("combined", "scaled", "ratio", "silhouette")


def kernel_distances(L):
    """Feature-space distances ``sqrt(L_ii + L_jj - 2 L_ij)`` with a zero diagonal."""
    K = L.toarray() if isinstance(L, SymmetricDense) else np.asarray(L, dtype=np.float64)
    d = np.diag(K)
    D = np.sqrt(np.maximum(d[:, None] + d[None, :] - 2.0 * K, 0.0))
    np.fill_diagonal(D, 0.0)
    return D


def validation_index(L, part, kind="scaled", power=0.75, distances=None):
    """Cluster validation index of one partition (smaller is better).

    With ``S_k`` the sum of the kernel block of cluster ``k``,
    ``W = sum_k [tr L_kk - S_k / n_k]`` is the feature-space within-cluster
    scatter and ``B = sum_k S_k / n_k - S / n`` the between-cluster scatter.
    ``kind="ratio"`` returns ``W / B``, which can only fall as clusters are
    split. ``kind="scaled"`` returns ``k**power * W / B``; the penalty on
    ``k`` gives the index an interior minimum. ``kind="silhouette"`` returns
    minus the mean silhouette width in feature space (``distances`` may
    pass a precomputed :func:`kernel_distances`). One cluster, ``B <= 0``,
    or a silhouette of all singletons gives ``inf``. The ``"combined"`` rule ranks whole candidate lists and
    lives in :func:`select_candidate`.
    """
    if kind not in ("scaled", "ratio", "silhouette"):
        raise ValueError("kind must be 'scaled', 'ratio' or 'silhouette'")
    K = L.toarray() if isinstance(L, SymmetricDense) else np.asarray(L, dtype=np.float64)
    n = K.shape[0]
    if part.k == 1:
        return float("inf")
    if kind == "silhouette":
        if part.k >= n:
            return float("inf")
        D = kernel_distances(K) if distances is None else distances
        return -float(silhouette_score(D, part.labels, metric="precomputed"))
    Z = np.zeros((n, part.k))
    Z[np.arange(n), part.labels] = 1.0
    block = np.einsum("ik,ik->k", Z, K @ Z) / part.sizes()
    within = float(np.trace(K) - block.sum())
    between = float(block.sum() - K.sum() / n)
    if between <= 0:
        return float("inf")
    ratio = within / between
    return ratio * part.k ** power if kind == "scaled" else ratio


def select_candidate(L, partitions, kind="combined", power=0.75):
    """Index values of candidate partitions and the position of the best.

    ``kind="combined"`` scores each candidate by the sum of its rank under
    the scaled scatter index and its rank under the silhouette (ties get
    average ranks); candidates with one cluster score ``inf``. Other kinds
    use :func:`validation_index` directly. When every value is infinite the
    candidate with the most clusters is returned, with a warning.

    Returns
    -------
    values : ndarray of shape (len(partitions),)
    best : int
    """
    K = L.toarray() if isinstance(L, SymmetricDense) else np.asarray(L, dtype=np.float64)
    if kind not in INDEX_KINDS:
        raise ValueError(f"kind must be one of {INDEX_KINDS}")
    D = kernel_distances(K) if kind in ("combined", "silhouette") else None
    if kind == "combined":
        scatter = np.array([validation_index(K, p, "scaled", power) for p in partitions])
        sil = np.array([validation_index(K, p, "silhouette", distances=D) for p in partitions])
        values = rankdata(scatter) + rankdata(sil)
        values[np.isinf(scatter) | np.isinf(sil)] = np.inf
    else:
        values = np.array([validation_index(K, p, kind, power, distances=D) for p in partitions])
    if np.all(np.isinf(values)):
        warnings.warn("every candidate has an infinite index; keeping the one with most clusters", RuntimeWarning)
        return values, int(np.argmax([p.k for p in partitions]))
    return values, int(np.argmin(values))


def consensus_cluster(data, cfg=None, kernel=None):
    """Full pipeline: prepare, run, accumulate, scan, merge, and select.

    Returns
    -------
    ClusteringResult
    """
    import time

    cfg = cfg or ConsensusConfig()
    timings = {}
    t0 = time.perf_counter()
    ctx = prepare_backend(data, cfg, kernel=kernel)
    timings["prepare"] = time.perf_counter() - t0
    n = ctx.X.shape[0]

    t0 = time.perf_counter()
    C, sizes = run_all(ctx, cfg)
    timings["runs"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    min_size = cfg.min_cluster_size(n)
    scanned = [(theta, part.k, merge_small(C, part, min_size)) for theta, part in threshold_scan(C, cfg)]
    approximate = cfg.index_rows is not None and cfg.index_rows < n
    if approximate:
        # score candidates on a fixed random subset of points to avoid the n x n kernel
        rows = np.sort(np.random.default_rng([cfg.seed, 0x1D]).choice(n, cfg.index_rows, replace=False))
        K = principal_submatrix(ctx.kernel, rows).toarray()
        cands = [Partition.from_labels(m.labels[rows]) for _, _, m in scanned]
    else:
        K = ctx.kernel.toarray()
        cands = [m for _, _, m in scanned]
    values, best = select_candidate(K, cands, cfg.index, cfg.index_power)
    trace = [(theta, kb, m.k, float(v)) for (theta, kb, m), v in zip(scanned, values)]
    timings["select"] = time.perf_counter() - t0

    theta, _, final = scanned[best]
    idx = float(values[best])
    provenance = {
        "backend": cfg.backend,
        "config": cfg.to_dict(),
        "n": n,
        "min_cluster_size": min_size,
        "index_approximate": bool(approximate),
        "mean_centers": float(np.mean(sizes)),
        **{k: v for k, v in ctx.info.items()},
    }
    return ClusteringResult(final, theta, idx, trace, provenance, timings, C)


class DeterminantalConsensusClustering(ClusterMixin, BaseEstimator):
    """Consensus clustering of repeated DPP-seeded Voronoi partitions.

    Parameters mirror :class:`ConsensusConfig`.

    Attributes
    ----------
    labels_ : ndarray of shape (n_samples,)
    result_ : ClusteringResult
    consensus_ : ConsensusMatrix
    """

    def __init__(self, backend="nngp", R=200, t=25, sparseness=0.8, m=None, gamma=0.05,
                 r=None, k=None, n_centers=None, tau=0.3, n_thresholds=50,
                 min_cluster_exponent=0.5, ridge=None, permute=False, index="combined", index_power=0.75,
                 index_rows=None, seed=0, threads=1):
        self.backend = backend
        self.R = R
        self.t = t
        self.sparseness = sparseness
        self.m = m
        self.gamma = gamma
        self.r = r
        self.k = k
        self.n_centers = n_centers
        self.tau = tau
        self.n_thresholds = n_thresholds
        self.min_cluster_exponent = min_cluster_exponent
        self.ridge = ridge
        self.permute = permute
        self.index = index
        self.index_power = index_power
        self.index_rows = index_rows
        self.seed = seed
        self.threads = threads

    def _config(self):
        return ConsensusConfig(**self.get_params())

    def fit(self, X, y=None):
        X = check_data(X, min_samples=2)
        self.result_ = consensus_cluster(X, self._config())
        self.labels_ = self.result_.final.labels
        self.consensus_ = self.result_.consensus
        return self
