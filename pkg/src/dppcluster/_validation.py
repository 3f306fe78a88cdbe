"""Input validation helpers shared by the estimators and functional API."""

import numbers

import numpy as np
from sklearn.utils import check_array


def check_data(X, min_samples=1):
    """Validate an observation matrix and return it as a float64 array."""
    return check_array(
        X,
        dtype=np.float64,
        ensure_2d=True,
        ensure_min_samples=min_samples,
        ensure_all_finite=True,
    )


def check_index_set(idx, order, name="idx"):
    """Return ``idx`` as an int64 array of distinct indices in ``[0, order)``."""
    idx = np.asarray(idx, dtype=np.int64).ravel()
    if idx.size and (idx.min() < 0 or idx.max() >= order):
        raise IndexError(f"{name} has entries outside [0, {order})")
    if np.unique(idx).size != idx.size:
        raise ValueError(f"{name} contains duplicate indices")
    return idx


def check_count(value, name, low=None, high=None):
    if not isinstance(value, numbers.Integral) or isinstance(value, bool):
        raise TypeError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if low is not None and value < low:
        raise ValueError(f"{name} must be >= {low}, got {value}")
    if high is not None and value > high:
        raise ValueError(f"{name} must be <= {high}, got {value}")
    return value


def check_fraction(value, name, closed_low=True, closed_high=False):
    value = float(value)
    lo_ok = value >= 0 if closed_low else value > 0
    hi_ok = value <= 1 if closed_high else value < 1
    if not (lo_ok and hi_ok):
        raise ValueError(f"{name} must lie in the unit interval, got {value}")
    return value
