"""Input validation helpers shared by the estimators and the pipeline."""

from __future__ import annotations

import numpy as np


def as_minute_array(X) -> np.ndarray:
    """Coerce durations to a 1-D int64 array of whole minutes.

    Accepts a sequence, a 1-D array, or a single-column 2-D array (the
    sklearn convention for univariate samples). Values must be finite,
    integer-valued and nonnegative.
    """
    arr = np.asarray(X)
    if arr.ndim == 2 and arr.shape[1] == 1:
        arr = arr[:, 0]
    if arr.ndim != 1:
        raise ValueError(f"expected 1-D durations, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError("empty sample")
    arr = np.asarray(arr, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("durations must be finite")
    rounded = np.rint(arr)
    if not np.allclose(arr, rounded, atol=1e-9):
        raise ValueError("durations must be whole minutes")
    if np.any(rounded < 0):
        raise ValueError("durations must be nonnegative")
    return rounded.astype(np.int64)


def counts_from_minutes(minutes) -> dict[int, int]:
    """Histogram whole-minute durations into a sorted {minute: count} map."""
    arr = as_minute_array(minutes)
    values, counts = np.unique(arr, return_counts=True)
    return {int(k): int(c) for k, c in zip(values, counts)}


def check_positive(name: str, value: float) -> None:
    if not value > 0:
        raise ValueError(f"{name} must be positive, got {value!r}")
