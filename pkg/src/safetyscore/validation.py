"""Input validation helpers shared by the estimators."""

from __future__ import annotations

import numpy as np


class DataError(ValueError):
    """Input data is missing, malformed or numerically unusable."""


def check_matrix(X, name="X", n_features=None, allow_empty=False) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1) if n_features in (None, 1) else X.reshape(1, -1)
    if X.ndim != 2:
        raise DataError(f"{name} must be 2-dimensional, got shape {X.shape}")
    if not allow_empty and X.shape[0] == 0:
        raise DataError(f"{name} has no rows")
    if n_features is not None and X.shape[1] != n_features:
        raise DataError(f"{name} has {X.shape[1]} features, expected {n_features}")
    if not np.all(np.isfinite(X)):
        raise DataError(f"{name} contains non-finite values")
    return X


def check_vector(y, name="y", length=None) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.ndim != 1:
        raise DataError(f"{name} must be 1-dimensional")
    if length is not None and y.shape[0] != length:
        raise DataError(f"{name} has length {y.shape[0]}, expected {length}")
    if not np.all(np.isfinite(y)):
        raise DataError(f"{name} contains non-finite values")
    return y


def check_targets(y, n_samples) -> np.ndarray:
    """Accept 1-D or 2-D (multi-output) targets."""
    y = np.asarray(y, dtype=float)
    if y.ndim not in (1, 2) or y.shape[0] != n_samples:
        raise DataError(f"y has shape {y.shape}, expected ({n_samples},) or ({n_samples}, k)")
    if not np.all(np.isfinite(y)):
        raise DataError("y contains non-finite values")
    return y


def check_non_negative(X, name="X") -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if np.any(X < 0):
        raise DataError(f"{name} must be non-negative")
    return X
