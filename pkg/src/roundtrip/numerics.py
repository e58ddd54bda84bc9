"""Small shared numerical helpers: log-domain reductions and input validation."""

from __future__ import annotations

import numpy as np

LOG_2PI = float(np.log(2.0 * np.pi))


class NumericalError(RuntimeError):
    """A computation produced non-finite values or an impossible factorization."""


def logsumexp(a: np.ndarray, axis: int | None = None) -> np.ndarray | float:
    """log(sum(exp(a))) computed with the max-shift trick.

    Handles -inf entries (they contribute zero mass); an all -inf slice
    reduces to -inf rather than NaN.
    """
    a = np.asarray(a, dtype=np.float64)
    amax = np.max(a, axis=axis, keepdims=True)
    amax = np.where(np.isfinite(amax), amax, 0.0)
    with np.errstate(divide="ignore"):  # log(0) -> -inf is the wanted answer
        out = np.log(np.sum(np.exp(a - amax), axis=axis, keepdims=True)) + amax
    if axis is None:
        return out.item()
    return np.squeeze(out, axis=axis)


def log_normal_pdf(x: np.ndarray, mean: np.ndarray | float, sd: float) -> np.ndarray:
    """Elementwise log N(x; mean, sd^2)."""
    z = (np.asarray(x, dtype=np.float64) - mean) / sd
    return -0.5 * LOG_2PI - np.log(sd) - 0.5 * z * z


def as_matrix(data, *, name: str = "data") -> np.ndarray:
    """Validate external input as a finite 2-D float64 array (C-ordered copy if needed)."""
    arr = np.ascontiguousarray(data, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        bad = np.argwhere(~np.isfinite(arr))[0]
        raise ValueError(f"{name} contains a non-finite value at row {bad[0]}, column {bad[1]}")
    return arr


def as_vector(data, *, name: str = "x") -> np.ndarray:
    """Validate external input as a finite 1-D float64 array."""
    arr = np.ascontiguousarray(data, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr
