"""Input validation helpers shared by the estimators and the functional core."""

import numbers

import numpy as np


def as_vector(x, name="x", size=None):
    """Return ``x`` as a finite 1-D float array, optionally of a given length."""
    arr = np.array(x, dtype=float, copy=True)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if size is not None and arr.shape[0] != size:
        raise ValueError(f"{name} must have length {size}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or infinite entries")
    return arr


def as_matrix(a, name="a", shape=None):
    """Return ``a`` as a finite 2-D float array, optionally of a given shape."""
    arr = np.array(a, dtype=float, copy=True)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be two-dimensional, got shape {arr.shape}")
    if shape is not None and arr.shape != tuple(shape):
        raise ValueError(f"{name} must have shape {tuple(shape)}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or infinite entries")
    return arr


def check_scalar(value, name, *, lower=None, upper=None, closed="both"):
    """Validate a real scalar against an interval.

    ``closed`` is one of ``"both"``, ``"left"``, ``"right"``, ``"neither"`` and
    says which interval ends are included.
    """
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise TypeError(f"{name} must be a real number, got {type(value).__name__}")
    value = float(value)
    if not np.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value}")
    left_ok = closed in ("both", "left")
    right_ok = closed in ("both", "right")
    if lower is not None and (value < lower or (value == lower and not left_ok)):
        raise ValueError(f"{name}={value} is out of range (lower bound {lower})")
    if upper is not None and (value > upper or (value == upper and not right_ok)):
        raise ValueError(f"{name}={value} is out of range (upper bound {upper})")
    return value


def check_points(X, n_features):
    """Validate a batch of points, shape ``(n_points, n_features)``."""
    X = np.array(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2 or X.shape[1] != n_features:
        raise ValueError(f"expected points of shape (n_points, {n_features}), got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("points contain NaN or infinite entries")
    return X
