"""Input validation helpers.

All public entry points funnel array arguments through these so that
dimension and finiteness errors surface with a useful message instead of
deep inside a LAPACK call.
"""
from __future__ import annotations

import numpy as np


def check_matrix(a, name: str = "matrix", *, allow_empty: bool = False) -> np.ndarray:
    """Return ``a`` as a C-contiguous float64 2-D array, validating finiteness."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1) if arr.size else arr.reshape(0, 0)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if not allow_empty and arr.size == 0:
        raise ValueError(f"{name} must be non-empty")
    if arr.size and not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return np.ascontiguousarray(arr)


def check_vector(v, name: str = "vector", *, length: int | None = None) -> np.ndarray:
    """Return ``v`` as a 1-D float64 array, validating finiteness and length."""
    arr = np.asarray(v, dtype=np.float64).ravel()
    if arr.size and not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    if length is not None and arr.size != length:
        raise ValueError(f"{name} must have length {length}, got {arr.size}")
    return arr


def check_count(n, name: str = "count", *, minimum: int = 1) -> int:
    """Return ``n`` as an int, requiring ``n >= minimum``."""
    value = int(n)
    if value != n:
        raise ValueError(f"{name} must be an integer, got {n!r}")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return value
