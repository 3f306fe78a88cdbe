"""Dense and implicitly restarted Lanczos symmetric eigensolvers."""

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, aslinearoperator

from .kernel import SparseSym, SymmetricDense

__all__ = [
    "EigenPairs",
    "LanczosConfig",
    "LanczosError",
    "dense_eigh",
    "lanczos_topk",
    "truncate",
    "as_operator",
    "DENSE_CAP",
]

DENSE_CAP = 4000
_EPS = np.finfo(np.float64).eps
_EPS23 = _EPS ** (2.0 / 3.0)


@dataclass(frozen=True, eq=False)
class EigenPairs:
    """Leading eigenpairs of a symmetric matrix, eigenvalues descending.

    ``index_map`` maps local rows of ``vectors`` to global dataset indices.
    """

    values: np.ndarray
    vectors: np.ndarray
    index_map: Optional[np.ndarray] = None
    source_order: Optional[int] = None

    def __post_init__(self):
        if self.vectors.ndim != 2 or self.vectors.shape[1] != self.values.shape[0]:
            raise ValueError("vectors must be n x t with t = len(values)")
        if self.values.size > self.vectors.shape[0]:
            raise ValueError("more eigenpairs than rows")
        if np.any(np.diff(self.values) > 0):
            raise ValueError("eigenvalues must be sorted in descending order")

    @property
    def t(self):
        return self.values.shape[0]

    @property
    def n(self):
        return self.vectors.shape[0]

    def global_indices(self):
        if self.index_map is None:
            return np.arange(self.n)
        return self.index_map

    def orthonormality_error(self):
        V = self.vectors
        return float(np.abs(V.T @ V - np.eye(V.shape[1])).max()) if V.size else 0.0


@dataclass(frozen=True)
class LanczosConfig:
    """Parameters of the restarted Lanczos solver.

    ``krylov_dim`` defaults to ``min(n, max(2t + 1, t + 20))``.
    """

    t: int
    krylov_dim: Optional[int] = None
    tol: float = 1e-8
    max_restarts: int = 300
    seed: int = 0

    def resolved(self, n):
        if self.t < 1:
            raise ValueError("t must be positive")
        if self.t > n:
            raise ValueError(f"cannot extract {self.t} eigenpairs of an order-{n} operator")
        kd = self.krylov_dim
        if kd is None:
            kd = min(n, max(2 * self.t + 1, self.t + 20))
        if not (self.t < kd <= n or self.t == kd == n):
            raise ValueError("krylov_dim must satisfy t < krylov_dim <= n")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        return replace(self, krylov_dim=kd)


class LanczosError(RuntimeError):
    """Restart budget exhausted; ``converged`` holds the pairs that did converge."""

    def __init__(self, message, converged):
        super().__init__(message)
        self.converged = converged


def as_operator(op):
    """Wrap any supported symmetric matrix representation as a LinearOperator."""
    if isinstance(op, SymmetricDense):
        return aslinearoperator(op.toarray())
    if isinstance(op, SparseSym):
        return aslinearoperator(op.matrix)
    if isinstance(op, (np.ndarray, LinearOperator)) or sp.issparse(op):
        return aslinearoperator(op)
    if hasattr(op, "matvec") and hasattr(op, "shape"):
        matmat = getattr(op, "matmat", None)
        return LinearOperator(op.shape, matvec=op.matvec, matmat=matmat, dtype=np.float64)
    raise TypeError(f"unsupported operator type {type(op).__name__}")


def dense_eigh(M, cap=DENSE_CAP):
    """Full eigendecomposition of a symmetric matrix, eigenvalues descending."""
    index_map = None
    if isinstance(M, SymmetricDense):
        index_map = M.index_map
        M = M.toarray()
    M = np.asarray(M, dtype=np.float64)
    n = M.shape[0]
    if n > cap:
        raise ValueError(f"dense eigendecomposition of order {n} exceeds cap {cap}")
    w, V = np.linalg.eigh(M)
    return EigenPairs(w[::-1].copy(), V[:, ::-1].copy(), index_map, n)


def truncate(pairs, t):
    """Keep the ``t`` largest eigenpairs."""
    if not 0 <= t <= pairs.t:
        raise ValueError(f"t must lie in [0, {pairs.t}]")
    return EigenPairs(
        pairs.values[:t].copy(), pairs.vectors[:, :t].copy(), pairs.index_map, pairs.source_order
    )


def _random_unit(rng, n, basis=None):
    v = rng.standard_normal(n)
    if basis is not None and basis.shape[1]:
        for _ in range(2):
            v -= basis @ (basis.T @ v)
    return v / np.linalg.norm(v)


def lanczos_topk(op, cfg=None, *, index_map=None, **kwargs):
    """Implicitly restarted Lanczos for the ``t`` algebraically largest eigenpairs.

    Parameters
    ----------
    op : array, sparse matrix, SymmetricDense, SparseSym or LinearOperator-like
        Symmetric positive semidefinite operator.
    cfg : LanczosConfig, optional
        Solver settings; keyword arguments build one when omitted.

    Returns
    -------
    EigenPairs

    Raises
    ------
    LanczosError
        If wanted pairs remain unconverged after ``max_restarts`` restarts.
    """
    if cfg is None:
        cfg = LanczosConfig(**kwargs)
    if index_map is None:
        index_map = getattr(op, "index_map", None)
    A = as_operator(op)
    n = A.shape[0]
    cfg = cfg.resolved(n)
    k, m = cfg.t, cfg.krylov_dim
    rng = np.random.default_rng(cfg.seed)

    V = np.zeros((n, m + 1))
    T = np.zeros((m, m))
    V[:, 0] = _random_unit(rng, n)
    start = 0
    anorm = 0.0

    def extend(j0):
        nonlocal anorm
        for j in range(j0, m):
            w = A.matvec(V[:, j])
            alpha = V[:, j] @ w
            T[j, j] = alpha
            basis = V[:, : j + 1]
            # two passes of classical Gram-Schmidt keep the basis orthonormal
            w -= basis @ (basis.T @ w)
            w -= basis @ (basis.T @ w)
            beta = np.linalg.norm(w)
            anorm = max(anorm, abs(alpha) + beta)
            if beta <= 1e-13 * max(anorm, 1e-300):
                beta = 0.0
                V[:, j + 1] = _random_unit(rng, n, basis) if j + 1 < m else 0.0
            else:
                V[:, j + 1] = w / beta
            if j + 1 < m:
                T[j, j + 1] = T[j + 1, j] = beta
            else:
                return beta
        return 0.0

    for restart in range(cfg.max_restarts + 1):
        beta_m = extend(start)
        theta, S = np.linalg.eigh(T)
        tnorm = max(np.abs(theta).max(), _EPS)
        wanted = np.arange(m - k, m)
        resid = np.abs(beta_m * S[m - 1, wanted])
        bound = cfg.tol * np.maximum(np.abs(theta[wanted]), _EPS23 * tnorm)
        done = resid <= bound
        if done.all() or m == n:
            return _ritz_pairs(V[:, :m], theta, S, wanted[::-1], index_map, n)
        if restart == cfg.max_restarts:
            ok = wanted[done][::-1]
            raise LanczosError(
                f"{int((~done).sum())} of {k} wanted eigenpairs unconverged "
                f"after {cfg.max_restarts} restarts",
                _ritz_pairs(V[:, :m], theta, S, ok, index_map, n),
            )
        # implicit restart: QR sweeps shifted by the unwanted Ritz values
        Q = np.eye(m)
        for mu in theta[: m - k]:
            Qj = _givens_qr(T - mu * np.eye(m))
            T = Qj.T @ T @ Qj
            Q = Q @ Qj
        resid_vec = beta_m * V[:, m]
        V[:, :m] = V[:, :m] @ Q
        f = V[:, k] * T[k, k - 1] + resid_vec * Q[m - 1, k - 1]
        T_keep = np.triu(np.tril(T[:k, :k], 1), -1)
        T = np.zeros((m, m))
        T[:k, :k] = (T_keep + T_keep.T) / 2.0
        basis = V[:, :k]
        f -= basis @ (basis.T @ f)
        beta = np.linalg.norm(f)
        if beta <= 1e-13 * max(anorm, 1e-300):
            V[:, k] = _random_unit(rng, n, basis)
            beta = 0.0
        else:
            V[:, k] = f / beta
        T[k - 1, k] = T[k, k - 1] = beta
        start = k
    raise AssertionError("unreachable")


def _givens_qr(H):
    """Orthogonal factor of the QR decomposition of a tridiagonal matrix.

    Built from adjacent-plane rotations so it is upper Hessenberg even when
    ``H`` is singular, which the restart relies on.
    """
    H = H.copy()
    m = H.shape[0]
    Q = np.eye(m)
    for i in range(m - 1):
        a, b = H[i, i], H[i + 1, i]
        r = np.hypot(a, b)
        if r == 0.0:
            continue
        c, s = a / r, b / r
        G = np.array([[c, s], [-s, c]])
        H[i : i + 2, :] = G @ H[i : i + 2, :]
        Q[:, i : i + 2] = Q[:, i : i + 2] @ G.T
    return Q


def _ritz_pairs(Vm, theta, S, idx, index_map, n):
    vecs = Vm @ S[:, idx]
    # re-normalize against round-off accumulated through restarts
    q, r = np.linalg.qr(vecs)
    vecs = q * np.sign(np.diag(r))[None, :] if idx.size else vecs
    return EigenPairs(theta[idx].copy(), vecs, index_map, n)
