"""Evaluation metrics: adjusted Rand index, eigenvalue densities, KL, timing."""

import json
import time
from dataclasses import asdict, dataclass, field
from math import comb

import numpy as np
from scipy.stats import norm

__all__ = [
    "adjusted_rand",
    "DensityEstimate",
    "kde",
    "symmetrized_kl",
    "TimingRecord",
    "time_section",
]


def _labels(x):
    if hasattr(x, "labels"):
        x = x.labels
    return np.asarray(x).ravel()


def adjusted_rand(a, b):
    """Adjusted Rand index computed exactly from integer pair counts.

    Accepts label arrays or objects with a ``labels`` attribute.
    """
    a, b = _labels(a), _labels(b)
    if a.shape != b.shape:
        raise ValueError("partitions must label the same points")
    n = a.size
    if n < 2:
        raise ValueError("adjusted Rand index needs at least two points")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    # python ints keep every product exact
    sum_ij = sum(comb(int(v), 2) for v in table.ravel() if v > 1)
    sum_a = sum(comb(int(v), 2) for v in table.sum(axis=1))
    sum_b = sum(comb(int(v), 2) for v in table.sum(axis=0))
    total = comb(n, 2)
    # ARI = (sum_ij - sa*sb/T) / ((sa+sb)/2 - sa*sb/T), scaled by 2T to stay integral
    num = 2 * (sum_ij * total - sum_a * sum_b)
    den = (sum_a + sum_b) * total - 2 * sum_a * sum_b
    if den == 0:
        # both partitions trivial in the same way (all-one or all-singletons)
        return 1.0 if num == 0 and sum_a == sum_b else 0.0
    return num / den


@dataclass(frozen=True, eq=False)
class DensityEstimate:
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float
    samples: np.ndarray

    def evaluate(self, x):
        x = np.asarray(x, dtype=np.float64)
        z = (x[:, None] - self.samples[None, :]) / self.bandwidth
        return norm.pdf(z).mean(axis=1) / self.bandwidth

    def integral(self):
        return float(np.trapezoid(self.density, self.grid))


def silverman_bandwidth(values):
    x = np.asarray(values, dtype=np.float64)
    sd = x.std(ddof=1)
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34)
    if spread <= 0:
        spread = sd
    return 0.9 * spread * x.size ** (-0.2)


def kde(values, grid_size=512, cut=3.0):
    """Gaussian KDE with Silverman's rule on a ``grid_size`` grid padded by ``cut * h``."""
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size < 2:
        raise ValueError("need at least two values")
    if np.ptp(x) == 0:
        raise ValueError("degenerate sample: all values equal")
    h = silverman_bandwidth(x)
    grid = np.linspace(x.min() - cut * h, x.max() + cut * h, grid_size)
    est = DensityEstimate(grid, np.empty(0), float(h), x)
    return DensityEstimate(grid, est.evaluate(grid), float(h), x)


def symmetrized_kl(p, q, grid_size=512, floor=1e-12):
    """``KL(p||q) + KL(q||p)`` by trapezoid quadrature on a shared grid.

    Both densities are re-evaluated on ``grid_size`` points spanning the
    union of their grids; values are floored at ``floor``.
    """
    lo = min(p.grid[0], q.grid[0])
    hi = max(p.grid[-1], q.grid[-1])
    grid = np.linspace(lo, hi, grid_size)
    fp = np.maximum(p.evaluate(grid), floor)
    fq = np.maximum(q.evaluate(grid), floor)
    integrand = (fp - fq) * (np.log(fp) - np.log(fq))
    return float(max(np.trapezoid(integrand, grid), 0.0))


@dataclass
class TimingRecord:
    label: str
    seconds: float
    config: dict = field(default_factory=dict)

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))


def time_section(label, thunk, config=None):
    """Run ``thunk`` and return ``(result, TimingRecord)`` with monotonic wall time."""
    start = time.perf_counter()
    result = thunk()
    elapsed = time.perf_counter() - start
    return result, TimingRecord(label, max(elapsed, 0.0), dict(config or {}))
