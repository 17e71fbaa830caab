"""Input validation helpers shared by the estimator facade and the CLI."""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatchError, EmptyInputError


def check_points(x):
    """Validate and return an (n, 3) float64 coordinate array."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise DimensionMismatchError(
            f"expected (n, 3) coordinates, got shape {np.asarray(x).shape}"
        )
    if arr.shape[0] == 0:
        raise EmptyInputError("point set is empty")
    if not np.isfinite(arr).all():
        raise ValueError("coordinates must be finite")
    return np.ascontiguousarray(arr)


def check_multivector(v, n, name="v"):
    """Validate a vector or multivector with n rows; returns (array2d, was_1d).

    Columns are individual systems; the returned array is column-major so
    each system is contiguous.
    """
    arr = np.asarray(v)
    was_1d = arr.ndim == 1
    if was_1d:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise DimensionMismatchError(f"{name} must be 1D or 2D")
    if arr.shape[0] != n:
        raise DimensionMismatchError(
            f"{name} must have {n} rows, got {arr.shape[0]}"
        )
    if arr.size and not np.isfinite(arr).all():
        raise ValueError(f"{name} must be finite")
    return np.asfortranarray(arr), was_1d


def check_positive(value, name, strict=True):
    if strict and not value > 0:
        raise ValueError(f"{name} must be positive, got {value}")
    if not strict and value < 0:
        raise ValueError(f"{name} must be nonnegative, got {value}")
    return value


def check_choice(value, choices, name):
    if value not in choices:
        raise ValueError(f"{name} must be one of {sorted(choices)}, got {value!r}")
    return value
