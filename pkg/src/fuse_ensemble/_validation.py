"""Input validation helpers used by the estimators and functional API."""

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import InsufficientSamplesError, InsufficientVerifiersError


def check_scores(X, min_samples=2, min_verifiers=1, bounded=False, name="scores"):
    """Return ``X`` as a finite float64 2-D array.

    Parameters
    ----------
    X : array-like of shape (n_responses, n_verifiers)
    min_samples, min_verifiers : int
        Lower bounds on the two dimensions.
    bounded : bool
        If True, require every entry to lie in [-1, 1] (up to 1e-9).
    """
    X = check_array(X, dtype=np.float64, ensure_2d=True, ensure_min_samples=1,
                    ensure_all_finite=True, input_name=name)
    n, m = X.shape
    if n < min_samples:
        raise InsufficientSamplesError(
            f"{name}: need at least {min_samples} responses, got {n}")
    if m < min_verifiers:
        raise InsufficientVerifiersError(
            f"{name}: need at least {min_verifiers} verifiers, got {m}")
    if bounded and X.size and (X.min() < -1 - 1e-9 or X.max() > 1 + 1e-9):
        raise ValueError(f"{name}: entries must lie in [-1, 1]")
    return X


def check_pm_one(y, n=None, name="labels"):
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValueError(f"{name}: expected a 1-D array")
    if n is not None and y.shape[0] != n:
        raise ValueError(f"{name}: expected length {n}, got {y.shape[0]}")
    if not np.all(np.isin(y, (-1, 1))):
        raise ValueError(f"{name}: entries must be +1 or -1")
    return y.astype(np.int8)


def check_mask(mask, m):
    if mask is None:
        return np.ones(m, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (m,):
        raise ValueError(f"mask: expected shape ({m},), got {mask.shape}")
    return mask


def argmax_set(values):
    """Indices attaining the maximum of ``values`` (exact comparison)."""
    values = np.asarray(values, dtype=np.float64)
    top = values.max()
    return tuple(int(i) for i in np.flatnonzero(values == top))
