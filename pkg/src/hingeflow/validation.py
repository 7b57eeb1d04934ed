"""Input validation helpers shared by the functional core and the estimators."""

from __future__ import annotations

import math

import numpy as np

from .exceptions import (
    DimensionMismatch,
    InvalidHyperparameter,
    LabelOutOfRange,
    ZeroVector,
)


def as_matrix(values, name: str = "points") -> np.ndarray:
    """Coerce to a non-empty float64 C-order matrix; reject ragged input."""
    try:
        arr = np.ascontiguousarray(values, dtype=np.float64)
    except (TypeError, ValueError):
        raise DimensionMismatch(f"{name} must be a rectangular numeric array") from None
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-dimensional, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionMismatch(f"{name} must be non-empty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DimensionMismatch(f"{name} must contain only finite values")
    return arr


def as_vector(values, d: int | None = None, name: str = "u") -> np.ndarray:
    """Coerce to a float64 vector, optionally of fixed length d."""
    try:
        arr = np.ascontiguousarray(values, dtype=np.float64)
    except (TypeError, ValueError):
        raise DimensionMismatch(f"{name} must be a numeric vector") from None
    if arr.ndim != 1:
        raise DimensionMismatch(f"{name} must be 1-dimensional, got shape {arr.shape}")
    if d is not None and arr.shape[0] != d:
        raise DimensionMismatch(f"{name} must have length {d}, got {arr.shape[0]}")
    return arr


def nonzero_vector(values, d: int | None = None, name: str = "u") -> np.ndarray:
    arr = as_vector(values, d=d, name=name)
    if not np.any(arr):
        raise ZeroVector(f"{name} must be nonzero")
    return arr


def check_positive(value, name: str) -> float:
    value = float(value)
    if not math.isfinite(value) or value <= 0:
        raise InvalidHyperparameter(f"{name} must be positive, got {value}")
    return value


def check_nonnegative(value, name: str) -> float:
    value = float(value)
    if not math.isfinite(value) or value < 0:
        raise InvalidHyperparameter(f"{name} must be non-negative, got {value}")
    return value


def check_count(value, name: str, minimum: int = 1) -> int:
    count = int(value)
    if count != value or count < minimum:
        raise InvalidHyperparameter(f"{name} must be an integer >= {minimum}, got {value}")
    return count


def check_class_labels(labels, n_classes: int, name: str = "labels") -> np.ndarray:
    """Validate integer class labels in {0..n_classes-1}."""
    arr = np.asarray(labels)
    if arr.ndim != 1:
        raise DimensionMismatch(f"{name} must be 1-dimensional")
    if not np.issubdtype(arr.dtype, np.integer):
        rounded = np.rint(np.asarray(arr, dtype=np.float64))
        if not np.array_equal(rounded, np.asarray(arr, dtype=np.float64)):
            raise LabelOutOfRange(f"{name} must be integers")
        arr = rounded
    arr = arr.astype(np.int64)
    if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
        raise LabelOutOfRange(
            f"{name} must lie in [0, {n_classes - 1}], got range "
            f"[{arr.min()}, {arr.max()}]"
        )
    return arr
