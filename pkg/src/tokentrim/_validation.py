"""Input validation helpers shared by every module."""

import numpy as np


class ValidationError(ValueError):
    """Raised when inputs violate a shape, range or finiteness contract."""


def as_matrix(x, name="input", ndim=2):
    """Return ``x`` as a float64 array of rank ``ndim``, rejecting non-finite entries."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != ndim:
        raise ValidationError(f"{name}: expected rank {ndim}, got shape {arr.shape}")
    check_finite(arr, name)
    return arr


def check_finite(arr, name="input"):
    bad = ~np.isfinite(arr)
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise ValidationError(f"{name}: non-finite value at index {idx}")


def check_count(k, lo, hi, name):
    if isinstance(k, bool) or not isinstance(k, (int, np.integer)):
        raise ValidationError(f"{name} must be an integer, got {k!r}")
    if not lo <= k <= hi:
        raise ValidationError(f"{name}={k} outside [{lo}, {hi}]")
    return int(k)
