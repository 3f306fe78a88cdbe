"""Spectral sampling of determinantal point processes.

Sampling uses the two-phase mixture representation: eigenvector ``i`` is
kept with probability ``lambda_i / (lambda_i + 1)``, then points are drawn one
at a time from the resulting elementary (projection) DPP. When only the
leading ``t`` eigenpairs are available the sampler targets the DPP of the
rank-``t`` truncation; the missing eigenvalues act as zeros.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from sklearn.utils import check_random_state

from .eigen import EigenPairs
from .kernel import SymmetricDense

__all__ = [
    "DppSample",
    "CardinalityMoments",
    "DppSizeError",
    "inclusion_probabilities",
    "sample_dpp",
    "sample_dpp_batch",
    "log_pmf",
    "LogPmf",
    "cardinality_moments",
    "diversity_histogram",
]

_BATCH = 16384


class DppSizeError(RuntimeError):
    pass


@dataclass(frozen=True)
class DppSample:
    indices: np.ndarray
    log_pmf: Optional[float] = None

    def __len__(self):
        return int(self.indices.size)


@dataclass(frozen=True)
class CardinalityMoments:
    mean: float
    variance: float


def inclusion_probabilities(values):
    """Probability of keeping each eigenvector in the first phase."""
    lam = np.clip(np.asarray(values, dtype=np.float64), 0.0, None)
    return lam / (lam + 1.0)


def _rng(random_state):
    if isinstance(random_state, np.random.Generator):
        return random_state
    if random_state is None or isinstance(random_state, (int, np.integer)):
        return np.random.default_rng(random_state)
    # legacy RandomState: derive a Generator from it deterministically
    rs = check_random_state(random_state)
    return np.random.default_rng(rs.randint(0, 2**63 - 1, dtype=np.int64))


def _project_out(V, rng):
    """Draw ``k = V.shape[2]`` points from each elementary DPP in the batch.

    ``V`` has shape (B, n, k) with orthonormal columns per batch element.
    Uses the chain rule of the projection kernel ``K = V V^T`` with an
    incrementally built Cholesky factor: the next point is drawn with
    probability proportional to the conditional variance
    ``K_ii - sum_s c_s[i]^2``. Returns an int array of shape (B, k).
    """
    B, n, k = V.shape
    out = np.empty((B, k), dtype=np.int64)
    batch = np.arange(B)
    resid = np.einsum("bnc,bnc->bn", V, V)
    factors = np.empty((B, k, n))
    for step in range(k):
        cdf = np.cumsum(np.clip(resid, 0.0, None), axis=1)
        u = (1.0 - rng.random(B)) * cdf[:, -1]
        picked = np.minimum((cdf < u[:, None]).sum(axis=1), n - 1)
        out[:, step] = picked
        if step == k - 1:
            break
        col = np.einsum("bnc,bc->bn", V, V[batch, picked, :])
        if step:
            col -= np.einsum("bsn,bs->bn", factors[:, :step], factors[batch, :step, picked])
        col /= np.sqrt(np.maximum(resid[batch, picked], 1e-300))[:, None]
        factors[:, step] = col
        resid -= col * col
        resid[batch, picked] = 0.0
    return out


def sample_dpp_batch(pairs, n_draws, random_state=None):
    """Draw ``n_draws`` independent subsets; returns a list of global index arrays.

    No minimum-size conditioning is applied.
    """
    rng = _rng(random_state)
    keep_prob = inclusion_probabilities(pairs.values)
    gidx = pairs.global_indices()
    results = [None] * n_draws
    for lo in range(0, n_draws, _BATCH):
        hi = min(lo + _BATCH, n_draws)
        chosen = rng.random((hi - lo, keep_prob.size)) < keep_prob[None, :]
        sizes = chosen.sum(axis=1)
        for size in np.unique(sizes):
            rows = np.flatnonzero(sizes == size)
            if size == 0:
                for r in rows:
                    results[lo + r] = np.empty(0, dtype=np.int64)
                continue
            cols = np.nonzero(chosen[rows])[1].reshape(rows.size, size)
            V = np.transpose(pairs.vectors[:, cols], (1, 0, 2))
            local = _project_out(np.ascontiguousarray(V), rng)
            for r, pts in zip(rows, local):
                results[lo + r] = np.sort(gidx[pts])
    return results


def sample_dpp(pairs, random_state=None, min_size=0, max_attempts=100):
    """One DPP draw, redrawn until it has at least ``min_size`` points.

    Raises
    ------
    DppSizeError
        If ``max_attempts`` draws all fall short of ``min_size``.
    """
    if np.any(np.asarray(pairs.values) < -1e-8 * max(1.0, float(np.max(pairs.values, initial=0)))):
        raise ValueError("DPP kernel eigenvalues must be nonnegative")
    rng = _rng(random_state)
    keep_prob = inclusion_probabilities(pairs.values)
    for _ in range(max_attempts):
        chosen = np.flatnonzero(rng.random(keep_prob.size) < keep_prob)
        # the sample size equals |J|, so undersized draws are rejected early
        if chosen.size < min_size:
            continue
        if chosen.size == 0:
            return DppSample(np.empty(0, dtype=np.int64))
        V = pairs.vectors[:, chosen][None, :, :]
        local = _project_out(np.ascontiguousarray(V), rng)[0]
        return DppSample(np.sort(pairs.global_indices()[local]))
    raise DppSizeError("DPP yields too few centers; spectrum too flat")


def _logdet_pd(M):
    try:
        C = np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        return -np.inf
    d = np.diag(C)
    if np.any(d <= 0):
        return -np.inf
    return 2.0 * float(np.log(d).sum())


class LogPmf:
    """Reusable ``log det(L_Y) - log det(L + I)`` evaluator.

    Built either from a kernel (dense or packed) or from eigenpairs. With a
    truncated spectrum the normalizer is ``sum log(1 + lambda_i)`` over the
    extracted values only and :attr:`truncated` is True.
    """

    def __init__(self, L_or_pairs):
        if isinstance(L_or_pairs, EigenPairs):
            p = L_or_pairs
            lam = np.clip(p.values, 0.0, None)
            self._factor = p.vectors * np.sqrt(lam)[None, :]
            self._M = None
            self.log_normalizer = float(np.log1p(lam).sum())
            self.truncated = p.source_order is None or p.t < p.source_order
            self.order = p.n
        else:
            M = L_or_pairs.toarray() if isinstance(L_or_pairs, SymmetricDense) else np.asarray(L_or_pairs, dtype=np.float64)
            self._M = M
            self._factor = None
            self.order = M.shape[0]
            ld = _logdet_pd(M + np.eye(self.order))
            if not np.isfinite(ld):
                raise ValueError("L + I is not positive definite")
            self.log_normalizer = ld
            self.truncated = False

    def __call__(self, Y):
        Y = np.asarray(Y, dtype=np.int64)
        if Y.size == 0:
            return -self.log_normalizer
        if self._M is not None:
            sub = self._M[np.ix_(Y, Y)]
        else:
            F = self._factor[Y]
            sub = F @ F.T
        return _logdet_pd(sub) - self.log_normalizer


def log_pmf(L_or_pairs, Y):
    """Log-probability of subset ``Y`` (local row indices) under the DPP."""
    return LogPmf(L_or_pairs)(Y)


def cardinality_moments(pairs_or_values):
    values = pairs_or_values.values if isinstance(pairs_or_values, EigenPairs) else pairs_or_values
    lam = np.asarray(values, dtype=np.float64)
    # round-off negatives of a PSD spectrum are treated as zero
    if np.any(lam < -1e-8 * max(1.0, float(np.max(lam, initial=0.0)))):
        raise ValueError("eigenvalues must be nonnegative")
    lam = np.clip(lam, 0.0, None)
    p = lam / (lam + 1.0)
    return CardinalityMoments(float(p.sum()), float((lam / (lam + 1.0) ** 2).sum()))


def diversity_histogram(L, pairs, n_draws, match_sizes=True, random_state=None):
    """Log-pmf values of DPP draws and of uniform random subsets.

    With ``match_sizes`` the i-th uniform subset has the size of the i-th DPP
    draw; otherwise every uniform subset has ``round(E[card])`` points.

    Returns
    -------
    dpp_logpmf, uniform_logpmf : ndarray of shape (n_draws,)
    """
    if n_draws < 1:
        raise ValueError("n_draws must be positive")
    rng = _rng(random_state)
    evaluate = LogPmf(L)
    n = evaluate.order
    draws = sample_dpp_batch(pairs, n_draws, rng)
    fixed = int(round(cardinality_moments(pairs).mean))
    dpp_vals = np.array([evaluate(Y) for Y in draws])
    uni_vals = np.empty(n_draws)
    for i, Y in enumerate(draws):
        size = Y.size if match_sizes else fixed
        uni_vals[i] = evaluate(np.sort(rng.choice(n, size=size, replace=False)))
    return dpp_vals, uni_vals
