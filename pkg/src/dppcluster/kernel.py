"""RBF kernel construction, bandwidth estimation and k-NN sparsification.

Dense kernels are held in packed upper-triangular form (:class:`SymmetricDense`)
and sparse ones as symmetric CSR matrices (:class:`SparseSym`).
"""

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_count, check_data, check_index_set

__all__ = [
    "Bandwidth",
    "SymmetricDense",
    "SparseSym",
    "estimate_bandwidth",
    "rbf_kernel",
    "principal_submatrix",
    "knn_sparsify",
    "knn_rank_matrix",
    "k_for_sparseness",
    "RBFKernel",
]


def _row_offsets(n):
    i = np.arange(n, dtype=np.int64)
    return i * n - i * (i - 1) // 2


@dataclass(frozen=True, eq=False)
class SymmetricDense:
    """Symmetric matrix stored as its packed upper triangle (row-major).

    Parameters
    ----------
    order : int
        Matrix order ``n``.
    packed : ndarray of shape (n * (n + 1) // 2,)
        Upper-triangle entries, diagonal included, row by row.
    index_map : ndarray of int, optional
        Global dataset index of each local row.
    """

    order: int
    packed: np.ndarray
    index_map: Optional[np.ndarray] = None

    def __post_init__(self):
        n = self.order
        if self.packed.shape != (n * (n + 1) // 2,):
            raise ValueError("packed length does not match order")
        if not np.all(np.isfinite(self.packed)):
            raise ValueError("SymmetricDense entries must be finite")

    @classmethod
    def from_dense(cls, M, index_map=None, check_symmetric=True):
        M = np.asarray(M, dtype=np.float64)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValueError("matrix must be square")
        if check_symmetric and not np.allclose(M, M.T, rtol=1e-12, atol=1e-14):
            raise ValueError("matrix is not symmetric")
        iu = np.triu_indices(M.shape[0])
        if index_map is not None:
            index_map = np.asarray(index_map, dtype=np.int64)
        return cls(M.shape[0], M[iu].copy(), index_map)

    def toarray(self):
        n = self.order
        M = np.empty((n, n))
        iu = np.triu_indices(n)
        M[iu] = self.packed
        M.T[iu] = self.packed
        return M

    def diagonal(self):
        return self.packed[_row_offsets(self.order)]

    def global_indices(self):
        if self.index_map is None:
            return np.arange(self.order)
        return self.index_map

    @property
    def shape(self):
        return (self.order, self.order)

    def matvec(self, v):
        return self.toarray() @ v


@dataclass(frozen=True, eq=False)
class SparseSym:
    """Structurally symmetric sparse matrix in CSR form with sorted indices."""

    matrix: sp.csr_matrix
    index_map: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    @property
    def order(self):
        return self.matrix.shape[0]

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def nnz(self):
        return self.matrix.nnz

    @property
    def sparseness(self):
        """Fraction of structurally zero entries."""
        n = self.order
        return (n * n - self.matrix.nnz) / float(n * n)

    def toarray(self):
        return self.matrix.toarray()

    def matvec(self, v):
        return self.matrix @ v

    def pattern_is_symmetric(self):
        P = self.matrix.copy()
        P.data = np.ones_like(P.data)
        return (P != P.T).nnz == 0


@dataclass(frozen=True)
class Bandwidth:
    """Squared RBF length scale."""

    sigma2: float

    def __post_init__(self):
        if not np.isfinite(self.sigma2) or self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive and finite")


def estimate_bandwidth(X):
    """Mean squared Euclidean distance over all unordered pairs of points.

    Uses ``sum_{i<j} |x_i - x_j|^2 = n * sum_i |x_i - mean|^2`` so the cost is
    linear in ``n``.
    """
    X = check_data(X, min_samples=2)
    n = X.shape[0]
    centered = X - X.mean(axis=0)
    total = n * np.einsum("ij,ij->", centered, centered)
    sigma2 = 2.0 * total / (n * (n - 1))
    if sigma2 <= 0:
        raise ValueError("zero bandwidth: all points are identical")
    return Bandwidth(float(sigma2))


def _sq_dists(A, B):
    d = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * (A @ B.T)
    np.maximum(d, 0.0, out=d)
    return d


def rbf_kernel(X, bandwidth, block_rows=512):
    """Gaussian kernel ``exp(-|x_i - x_j|^2 / (2 sigma^2))`` in packed form."""
    X = check_data(X)
    sigma2 = bandwidth.sigma2 if isinstance(bandwidth, Bandwidth) else float(bandwidth)
    Bandwidth(sigma2)
    n = X.shape[0]
    packed = np.empty(n * (n + 1) // 2)
    offsets = _row_offsets(n)
    for start in range(0, n, block_rows):
        stop = min(start + block_rows, n)
        block = np.exp(-_sq_dists(X[start:stop], X[start:]) / (2.0 * sigma2))
        for r, i in enumerate(range(start, stop)):
            row = block[r, i - start:]
            row[0] = 1.0
            packed[offsets[i]:offsets[i] + n - i] = row
    return SymmetricDense(n, packed)


def principal_submatrix(L, idx):
    """Restrict ``L`` to ``idx x idx`` keeping the order of ``idx``.

    The result's ``index_map`` gives the global dataset index of every row.
    """
    n = L.order
    idx = check_index_set(idx, n)
    offsets = _row_offsets(n)
    a = idx[:, None]
    b = idx[None, :]
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    sub = L.packed[offsets[lo] + hi - lo]
    gmap = L.global_indices()[idx]
    return SymmetricDense.from_dense(sub, index_map=gmap, check_symmetric=False)


def knn_rank_matrix(M):
    """Rank of each column within its row by decreasing similarity.

    The diagonal is excluded (rank ``-1``); ties go to the smaller index.
    """
    M = np.asarray(M, dtype=np.float64)
    n = M.shape[0]
    keyed = -M.copy()
    np.fill_diagonal(keyed, np.inf)
    order = np.argsort(keyed, axis=1, kind="stable")
    ranks = np.empty((n, n), dtype=np.int64)
    rows = np.arange(n)[:, None]
    ranks[rows, order] = np.arange(n)[None, :]
    np.fill_diagonal(ranks, -1)
    return ranks


def _pattern_from_ranks(ranks, k):
    keep = ranks < k
    return keep | keep.T


def knn_sparsify(L, k):
    """Keep entry ``(i, j)`` when either point is among the other's ``k`` nearest.

    Neighbors are ranked by kernel value, which for the RBF kernel is the
    same ordering as ascending Euclidean distance. The diagonal is kept.
    """
    n = L.order
    k = check_count(k, "k", 1, max(n - 1, 1))
    M = L.toarray()
    keep = _pattern_from_ranks(knn_rank_matrix(M), k)
    rows, cols = np.nonzero(keep)
    S = sp.csr_matrix((M[rows, cols], (rows, cols)), shape=(n, n))
    S.sort_indices()
    return SparseSym(S, index_map=L.index_map, meta={"k": k})


def k_for_sparseness(L, target_sparseness):
    """Largest ``k`` whose symmetrized k-NN pattern is at least this sparse.

    Returns
    -------
    k : int
    achieved : float
        Zero fraction of the pattern at ``k``.
    reachable : bool
        False when even ``k = 1`` is denser than requested.
    """
    target = float(target_sparseness)
    if not 0.0 <= target < 1.0:
        raise ValueError("target_sparseness must lie in [0, 1)")
    n = L.order
    if n < 2:
        raise ValueError("need at least two rows")
    ranks = knn_rank_matrix(L.toarray())
    # entry (i, j) survives for every k > min(rank_ij, rank_ji)
    first_k = np.minimum(ranks, ranks.T)
    counts = np.bincount(first_k[first_k >= 0], minlength=n - 1)
    # zeros(k) = number of off-diagonal entries with first_k >= k
    zeros_at = np.concatenate([np.cumsum(counts[::-1])[::-1], [0]])
    total = float(n * n)

    def zero_fraction(k):
        return zeros_at[k] / total

    lo, hi = 1, n - 1
    if zero_fraction(lo) < target:
        warnings.warn(
            f"sparseness {target:.3f} unreachable; k=1 gives {zero_fraction(1):.3f}",
            RuntimeWarning,
        )
        return 1, zero_fraction(1), False
    # zero_fraction is non-increasing in k
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if zero_fraction(mid) >= target:
            lo = mid
        else:
            hi = mid - 1
    return lo, zero_fraction(lo), True


class RBFKernel(TransformerMixin, BaseEstimator):
    """Transformer-style wrapper: ``fit`` estimates the bandwidth from data.

    Parameters
    ----------
    sigma2 : float, optional
        Fixed squared bandwidth. When None it is estimated in ``fit``.
    """

    def __init__(self, sigma2=None):
        self.sigma2 = sigma2

    def fit(self, X, y=None):
        if self.sigma2 is None:
            self.bandwidth_ = estimate_bandwidth(X)
        else:
            self.bandwidth_ = Bandwidth(float(self.sigma2))
        return self

    def transform(self, X):
        check_is_fitted(self, "bandwidth_")
        return rbf_kernel(X, self.bandwidth_)
