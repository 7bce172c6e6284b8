"""Small input-validation helpers used by the estimators and the bank I/O."""

import numpy as np

from .errors import DataError


def as_float_matrix(x, name="X"):
    """Coerce to a 2-D float64 array with finite entries."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise DataError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains non-finite entries")
    return arr


def as_float_vector(x, name="x"):
    """Coerce to a 1-D float64 array with finite entries."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise DataError(f"{name} must be 1-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains non-finite entries")
    return arr


def as_int_vector(x, name="labels"):
    arr = np.asarray(x)
    if arr.ndim != 1:
        raise DataError(f"{name} must be 1-D, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        cast = arr.astype(np.int64)
        if np.any(cast != arr):
            raise DataError(f"{name} must hold integers")
        arr = cast
    return arr.astype(np.int64)


def check_dim(arr, dim, name="X"):
    if arr.shape[-1] != dim:
        raise DataError(
            f"{name} has dimension {arr.shape[-1]}, expected {dim}"
        )
    return arr
