"""Input validation helpers shared by the estimator classes."""

from __future__ import annotations

import numpy as np
from sklearn.exceptions import NotFittedError


def check_array(X, name="X", ndim=2, dtype=np.float64):
    """Coerce to a float64 ndarray of the expected rank."""
    X = np.asarray(X, dtype=dtype)
    if X.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {X.shape}")
    if X.size == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite values")
    return X


def check_sequences(X, name="X"):
    """Validate a batch of fixed-length sequences shaped (n, steps, features)."""
    return check_array(X, name=name, ndim=3)


def check_binary_targets(y, n, name="y"):
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if y.shape[0] != n:
        raise ValueError(f"{name} has {y.shape[0]} entries, expected {n}")
    if not np.all(np.isin(y, (0.0, 1.0))):
        raise ValueError(f"{name} must contain only 0/1 labels")
    return y


def check_fitted(estimator, attribute):
    if not hasattr(estimator, attribute):
        raise NotFittedError(
            f"{type(estimator).__name__} is not fitted; call fit() first"
        )


def check_seed(seed):
    if seed is None:
        return 0
    return int(seed)
