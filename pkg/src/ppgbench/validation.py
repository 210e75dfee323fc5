"""Input validation helpers shared by the estimators and the metric functions."""

from __future__ import annotations

import numpy as np
from sklearn.utils import check_array

from .errors import ValidationError


def check_signals(X, min_length=2):
    """Coerce ``X`` to a finite float64 ``(n_segments, n_samples)`` array.

    ``(n, 1, L)`` single-channel input is squeezed to ``(n, L)``.
    """
    X = np.asarray(X)
    if X.ndim == 3:
        if X.shape[1] != 1:
            raise ValidationError(f"expected a single channel, got shape {X.shape}")
        X = X[:, 0, :]
    X = check_array(X, dtype=np.float64, ensure_min_samples=1, ensure_min_features=min_length)
    return X


def check_targets(y, n_samples, n_outputs=None):
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    if y.ndim != 2 or y.shape[0] != n_samples:
        raise ValidationError(f"targets of shape {y.shape} do not match {n_samples} samples")
    if n_outputs is not None and y.shape[1] != n_outputs:
        raise ValidationError(f"expected {n_outputs} target columns, got {y.shape[1]}")
    if not np.all(np.isfinite(y)):
        raise ValidationError("targets contain non-finite values")
    return y


def check_paired(a, b, name_a="a", name_b="b"):
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValidationError(f"{name_a} and {name_b} differ in length ({a.size} vs {b.size})")
    return a, b
