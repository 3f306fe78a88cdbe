"""Nearest-neighbor Gaussian process approximation of a kernel matrix.

The kernel is approximated by ``(I - A)^{-1} D (I - A)^{-T}`` where row ``i``
of the strictly lower-triangular ``A`` is supported on the ``m`` nearest
predecessors of point ``i`` and ``D`` is diagonal. The inverse of the
approximation is sparse, and products with the approximation itself cost
two sparse triangular solves.
"""

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, spsolve_triangular
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_count, check_data
from .kernel import (
    SparseSym,
    SymmetricDense,
    estimate_bandwidth,
    principal_submatrix,
    rbf_kernel,
)

__all__ = [
    "NNGPFactor",
    "NNGPOperator",
    "IllConditionedKernelError",
    "neighbor_sets",
    "neighbor_sets_from_kernel",
    "build_factor",
    "apply_operator",
    "apply_precision",
    "mnn_matrix",
    "mnn_for_sparseness",
    "m_for_sparseness",
    "precision_nnz_bound",
    "frobenius_distance",
    "NNGPApproximation",
]


class IllConditionedKernelError(ValueError):
    pass


def _predecessor_neighbors(score_row, i, m):
    """Indices ``j < i`` with the ``m`` smallest scores, ties to smaller ``j``."""
    if i <= m:
        return np.arange(i, dtype=np.int64)
    order = np.argsort(score_row[:i], kind="stable")[:m]
    return np.sort(order).astype(np.int64)


def neighbor_sets(X, m):
    """Predecessor neighbor sets by Euclidean distance.

    ``N_i`` holds the ``m`` nearest points among ``0..i-1`` (all of them when
    ``i <= m``), sorted by index.
    """
    X = check_data(X)
    n = X.shape[0]
    m = check_count(m, "m", 1, max(n - 1, 1))
    sq = (X * X).sum(axis=1)
    out = []
    for i in range(n):
        if i <= m:
            out.append(np.arange(i, dtype=np.int64))
            continue
        d = sq[:i] - 2.0 * (X[:i] @ X[i]) + sq[i]
        out.append(_predecessor_neighbors(d, i, m))
    return out


def neighbor_sets_from_kernel(L, m):
    """Predecessor neighbor sets ranked by decreasing kernel value."""
    M = L.toarray() if isinstance(L, SymmetricDense) else np.asarray(L)
    n = M.shape[0]
    m = check_count(m, "m", 1, max(n - 1, 1))
    return [_predecessor_neighbors(-M[i], i, m) for i in range(n)]


@dataclass(frozen=True, eq=False)
class NNGPFactor:
    """Sparse factor: ``A`` rows on ``neighbors[i]`` with weights ``a_values[i]``."""

    order: int
    neighbors: List[np.ndarray]
    a_values: List[np.ndarray]
    D: np.ndarray
    m: int
    ridge: float = 0.0
    index_map: Optional[np.ndarray] = None

    def strictly_lower(self):
        """``A`` as a CSR matrix."""
        n = self.order
        counts = np.array([len(nb) for nb in self.neighbors], dtype=np.int64)
        indptr = np.concatenate([[0], np.cumsum(counts)])
        indices = np.concatenate(self.neighbors) if counts.sum() else np.empty(0, np.int64)
        data = np.concatenate(self.a_values) if counts.sum() else np.empty(0)
        return sp.csr_matrix((data, indices, indptr), shape=(n, n))

    def precision(self):
        """Sparse ``(I - A)^T D^{-1} (I - A)``."""
        B = (sp.identity(self.order, format="csr") - self.strictly_lower()).tocsr()
        P = (B.T @ sp.diags(1.0 / self.D) @ B).tocsr()
        P.sort_indices()
        return P


def build_factor(L, neighbors, ridge=None):
    """Solve the per-row neighbor systems defining ``A`` and ``D``.

    ``ridge`` (default ``1e-8 * mean(diag L)``) is added to the whole
    diagonal of ``L`` so every ``D_ii`` stays a Schur complement of a
    positive definite matrix. ``D_ii`` is the square of the last pivot of
    the Cholesky factor of the (neighbors + i) block, which keeps it
    positive whenever the block is numerically positive definite.

    Raises
    ------
    IllConditionedKernelError
        If some neighbor block is not numerically positive definite.
    """
    M = L.toarray() if isinstance(L, SymmetricDense) else np.asarray(L, dtype=np.float64)
    n = M.shape[0]
    if len(neighbors) != n:
        raise ValueError("need one neighbor set per row")
    diag = np.diag(M).copy()
    if ridge is None:
        ridge = 1e-8 * float(diag.mean())
    if ridge < 0:
        raise ValueError("ridge must be nonnegative")
    m = max((len(nb) for nb in neighbors), default=0)
    a_values = [None] * n
    D = np.empty(n)

    # rows sharing a neighbor count are factored together
    by_size = {}
    for i, nb in enumerate(neighbors):
        nb = np.asarray(nb, dtype=np.int64)
        if nb.size and (nb.max() >= i or nb.min() < 0):
            raise ValueError(f"neighbors of row {i} must be predecessors")
        by_size.setdefault(nb.size, []).append(i)

    for size, rows in by_size.items():
        rows = np.asarray(rows)
        if size == 0:
            D[rows] = diag[rows] + ridge
            for i in rows:
                a_values[i] = np.empty(0)
            continue
        idx = np.stack([np.append(np.asarray(neighbors[i], dtype=np.int64), i) for i in rows])
        blocks = M[idx[:, :, None], idx[:, None, :]]
        blocks[:, np.arange(size + 1), np.arange(size + 1)] += ridge
        try:
            C = np.linalg.cholesky(blocks)
        except np.linalg.LinAlgError:
            bad = _first_failure(blocks, rows)
            raise IllConditionedKernelError(
                f"ill-conditioned kernel at row {bad}; increase ridge (now {ridge:.3g})"
            ) from None
        pivots = C[:, size, size]
        if np.any(pivots <= 0) or not np.all(np.isfinite(pivots)):
            bad = rows[np.argmax(~(pivots > 0))]
            raise IllConditionedKernelError(
                f"ill-conditioned kernel at row {bad}; increase ridge (now {ridge:.3g})"
            )
        D[rows] = pivots**2
        # A_i = W_N^{-1} W_N,i  =  C_N^{-T} c  with c the last row of C
        c = C[:, size, :size]
        CN = C[:, :size, :size]
        a = np.linalg.solve(np.transpose(CN, (0, 2, 1)), c[:, :, None])[:, :, 0]
        for r, i in enumerate(rows):
            a_values[i] = a[r]
    nb = [np.asarray(x, dtype=np.int64) for x in neighbors]
    return NNGPFactor(n, nb, a_values, D, m, float(ridge), getattr(L, "index_map", None))


def _first_failure(blocks, rows):
    for b, i in zip(blocks, rows):
        try:
            np.linalg.cholesky(b)
        except np.linalg.LinAlgError:
            return int(i)
    return int(rows[0])


class NNGPOperator:
    """Matrix-free action of ``(I - A)^{-1} D (I - A)^{-T}``."""

    def __init__(self, factor):
        self.factor = factor
        B = (sp.identity(factor.order, format="csr") - factor.strictly_lower()).tocsr()
        B.sort_indices()
        B.indices = B.indices.astype(np.int32)
        B.indptr = B.indptr.astype(np.int32)
        Bt = B.T.tocsr()
        Bt.sort_indices()
        Bt.indices = Bt.indices.astype(np.int32)
        Bt.indptr = Bt.indptr.astype(np.int32)
        self._B = B
        self._Bt = Bt
        self.shape = (factor.order, factor.order)
        self.index_map = factor.index_map
        self.dtype = np.float64

    def matvec(self, v):
        v = np.asarray(v, dtype=np.float64)
        u = spsolve_triangular(self._Bt, v, lower=False, unit_diagonal=True)
        w = self.factor.D * u if u.ndim == 1 else self.factor.D[:, None] * u
        return spsolve_triangular(self._B, w, lower=True, unit_diagonal=True)

    def matmat(self, V):
        return self.matvec(np.asarray(V, dtype=np.float64))

    def precision_matvec(self, v):
        v = np.asarray(v, dtype=np.float64)
        w = self._B @ v
        w = w / self.factor.D if w.ndim == 1 else w / self.factor.D[:, None]
        return self._Bt @ w

    def toarray(self, block=256):
        n = self.shape[0]
        out = np.empty((n, n))
        for s in range(0, n, block):
            e = min(s + block, n)
            E = np.zeros((n, e - s))
            E[np.arange(s, e), np.arange(e - s)] = 1.0
            out[:, s:e] = self.matmat(E)
        return (out + out.T) / 2.0

    def aslinearoperator(self):
        return LinearOperator(self.shape, matvec=self.matvec, matmat=self.matmat, dtype=np.float64)


def apply_operator(op, v):
    """``L~ v`` via a backward solve, a diagonal scale and a forward solve."""
    return op.matvec(v)


def apply_precision(op, v):
    """``L~^{-1} v = (I - A)^T D^{-1} (I - A) v``."""
    return op.precision_matvec(v)


def precision_nnz_bound(n, m):
    return n * m * (m + 1) // 2 + n


def m_for_sparseness(n, sparseness):
    """Neighbor cap ``m`` with ``n m (m + 1) / 2 + n ~= (1 - s) n^2``."""
    s = float(sparseness)
    if not 0.0 <= s < 1.0:
        raise ValueError("sparseness must lie in [0, 1)")
    rhs = (1.0 - s) * n - 1.0
    m = (-1.0 + np.sqrt(1.0 + 8.0 * max(rhs, 0.0))) / 2.0
    return int(min(max(round(m), 1), n - 1))


def _mnn_pattern(M, m_nn):
    n = M.shape[0]
    keep = np.zeros((n, n), dtype=bool)
    for i, nb in enumerate(neighbor_sets_from_kernel(M, m_nn)):
        keep[i, nb] = True
    keep |= keep.T
    np.fill_diagonal(keep, True)
    return keep


def mnn_matrix(L, m_nn):
    """Kernel entries on the predecessor m-NN pattern (symmetrized), zero elsewhere."""
    M = L.toarray() if isinstance(L, SymmetricDense) else np.asarray(L, dtype=np.float64)
    n = M.shape[0]
    keep = _mnn_pattern(M, check_count(m_nn, "m_nn", 1, max(n - 1, 1)))
    rows, cols = np.nonzero(keep)
    S = sp.csr_matrix((M[rows, cols], (rows, cols)), shape=(n, n))
    S.sort_indices()
    return SparseSym(S, index_map=getattr(L, "index_map", None), meta={"m_nn": int(m_nn)})


def mnn_for_sparseness(L, sparseness):
    """Largest ``m_nn`` whose m-NN pattern has zero fraction >= ``sparseness``."""
    M = L.toarray() if isinstance(L, SymmetricDense) else np.asarray(L, dtype=np.float64)
    n = M.shape[0]
    # first m_nn at which (i, j), j < i, enters the pattern: its rank among i's predecessors
    first = np.full((n, n), n, dtype=np.int64)
    for i in range(1, n):
        order = np.argsort(-M[i, :i], kind="stable")
        first[i, order] = np.arange(1, i + 1)
        # the prefix rule N_i = all predecessors for i <= m_nn
        first[i, :i] = np.minimum(first[i, :i], i)
    first = np.minimum(first, first.T)
    np.fill_diagonal(first, 0)
    counts = np.bincount(first.ravel(), minlength=n + 1)
    nonzero_at = np.cumsum(counts)  # entries present for m_nn = index

    def zero_fraction(k):
        return 1.0 - nonzero_at[k] / float(n * n)

    lo, hi = 1, n - 1
    if zero_fraction(1) < sparseness:
        return 1
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if zero_fraction(mid) >= sparseness:
            lo = mid
        else:
            hi = mid - 1
    return lo


def frobenius_distance(A, B, sample_columns=None, random_state=None):
    """``||A - B||_F`` for dense, packed, sparse or NNGP-operator inputs.

    With ``sample_columns`` set, ``B`` is materialized only on that many
    random columns and the result is an unbiased estimate of the squared
    distance, rescaled. Returns ``(distance, exact)``.
    """
    Ad = _dense(A)
    n = Ad.shape[0]
    if _order(B) != n:
        raise ValueError("order mismatch")
    if sample_columns is not None and sample_columns < n:
        rng = np.random.default_rng(random_state)
        cols = np.sort(rng.choice(n, size=int(sample_columns), replace=False))
        E = np.zeros((n, cols.size))
        E[cols, np.arange(cols.size)] = 1.0
        Bc = B.matmat(E) if isinstance(B, NNGPOperator) else _dense(B)[:, cols]
        sq = ((Ad[:, cols] - Bc) ** 2).sum() * n / cols.size
        return float(np.sqrt(sq)), False
    Bd = B.toarray() if isinstance(B, NNGPOperator) else _dense(B)
    return float(np.linalg.norm(Ad - Bd)), True


def _dense(M):
    if isinstance(M, (SymmetricDense, SparseSym)):
        return M.toarray()
    if sp.issparse(M):
        return M.toarray()
    return np.asarray(M, dtype=np.float64)


def _order(M):
    return M.shape[0]


class NNGPApproximation(BaseEstimator):
    """Fit an NNGP approximation of the RBF kernel of ``X``.

    Parameters
    ----------
    m : int, optional
        Neighbor cap. Derived from ``sparseness`` when None.
    sparseness : float, default=0.8
        Target zero fraction of the sparse precision.
    ridge : float, optional
        Diagonal regularization; ``1e-8 * mean(diag L)`` when None.
    permute : bool, default=False
        Shuffle the rows before building the factor (quality depends on
        the ordering).
    random_state : int or None

    Attributes
    ----------
    kernel_ : SymmetricDense
    factor_ : NNGPFactor
    operator_ : NNGPOperator
    permutation_ : ndarray
        Dataset row of each factor row.
    """

    def __init__(self, m=None, sparseness=0.8, ridge=None, permute=False, random_state=None):
        self.m = m
        self.sparseness = sparseness
        self.ridge = ridge
        self.permute = permute
        self.random_state = random_state

    def fit(self, X, y=None, kernel=None):
        X = check_data(X, min_samples=2)
        n = X.shape[0]
        perm = np.arange(n)
        if self.permute:
            perm = np.random.default_rng(self.random_state).permutation(n)
        Xp = X[perm]
        if kernel is None:
            kernel = rbf_kernel(Xp, estimate_bandwidth(X))
        elif self.permute:
            kernel = principal_submatrix(kernel, perm)
        m = self.m if self.m is not None else m_for_sparseness(n, self.sparseness)
        neighbors = neighbor_sets(Xp, m)
        factor = build_factor(kernel, neighbors, self.ridge)
        factor = NNGPFactor(
            factor.order, factor.neighbors, factor.a_values, factor.D, factor.m, factor.ridge, perm
        )
        self.kernel_ = kernel
        self.factor_ = factor
        self.operator_ = NNGPOperator(factor)
        self.permutation_ = perm
        self.m_ = m
        return self

    def precision_sparseness(self):
        check_is_fitted(self, "factor_")
        P = self.factor_.precision()
        n = P.shape[0]
        return (n * n - P.nnz) / float(n * n)
