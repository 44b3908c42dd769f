"""Input validation helpers used by the estimator API and the core ops."""

from __future__ import annotations

import numpy as np

from .errors import DataError


def as_float_matrix(x, name: str, n_cols: int | None = None) -> np.ndarray:
    """Coerce to a 2-D float64 array, optionally enforcing a column count."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise DataError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    if n_cols is not None and arr.shape[1] != n_cols:
        raise DataError(f"{name} must have {n_cols} columns, got {arr.shape[1]}")
    return arr


def as_int_vector(x, name: str, length: int | None = None) -> np.ndarray:
    arr = np.asarray(x)
    if arr.ndim != 1:
        raise DataError(f"{name} must be 1-dimensional, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        rounded = np.rint(np.asarray(arr, dtype=np.float64))
        if not np.array_equal(rounded, np.asarray(arr, dtype=np.float64)):
            raise DataError(f"{name} must contain integers")
        arr = rounded
    if length is not None and arr.shape[0] != length:
        raise DataError(f"{name} must have length {length}, got {arr.shape[0]}")
    return arr.astype(np.int64)


def check_finite(arr: np.ndarray, name: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains non-finite values")
    return arr


def check_positions(positions) -> np.ndarray:
    pos = as_float_matrix(positions, "positions", n_cols=3)
    return check_finite(pos, "positions")


def check_colors(colors, n_points: int) -> np.ndarray:
    col = as_float_matrix(colors, "colors", n_cols=3)
    if col.shape[0] != n_points:
        raise DataError(
            f"colors row count {col.shape[0]} does not match point count {n_points}"
        )
    check_finite(col, "colors")
    if col.min() < 0.0 or col.max() > 1.0:
        raise DataError("colors must lie in [0, 1]")
    return col


def check_labels(labels, n_points: int, name: str = "gt_labels") -> np.ndarray:
    lab = as_int_vector(labels, name)
    if lab.shape[0] != n_points:
        raise DataError(f"{name} length {lab.shape[0]} does not match point count {n_points}")
    if lab.size and lab.min() < 0:
        raise DataError(f"{name} must be non-negative")
    return lab


def check_superpoint_ids(ids, n_points: int) -> np.ndarray:
    sp = check_labels(ids, n_points, name="superpoint_ids")
    if sp.size:
        used = np.unique(sp)
        if used[0] != 0 or used[-1] != used.size - 1:
            raise DataError(
                "superpoint_ids must form a contiguous range 0..S-1 with every id used"
            )
    return sp


def check_prob_matrix(probs, name: str = "probs", tol: float = 1e-6) -> np.ndarray:
    p = as_float_matrix(probs, name)
    check_finite(p, name)
    if p.min() < -tol:
        raise DataError(f"{name} must be non-negative")
    sums = p.sum(axis=1)
    if np.abs(sums - 1.0).max() > tol:
        raise DataError(f"{name} rows must sum to 1")
    return p


def compact_ids(ids: np.ndarray) -> np.ndarray:
    """Relabel integer ids onto the contiguous range 0..S-1 (order of first sorted value)."""
    _, inverse = np.unique(ids, return_inverse=True)
    return inverse.astype(np.int64)
