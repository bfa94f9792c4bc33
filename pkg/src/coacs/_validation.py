"""Input checks shared by the public functions and estimators."""

import numpy as np


def check_grid(a, name="grid", dtype=np.float64, finite=True):
    """Return ``a`` as a contiguous square 2D array of ``dtype``.

    Raises ValueError for anything that is not a non-empty n x n array, or,
    with ``finite``, that carries NaN/inf values.
    """
    a = np.ascontiguousarray(a, dtype=dtype)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be a square 2D array, got shape {a.shape}")
    if a.shape[0] == 0:
        raise ValueError(f"{name} must not be empty")
    if finite and not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite values")
    return a


def check_mask(m, name="mask", n=None, nonempty=False):
    m = check_grid(m, name, dtype=bool, finite=False)
    if n is not None and m.shape[0] != n:
        raise ValueError(f"{name} has side {m.shape[0]}, expected {n}")
    if nonempty and not m.any():
        raise ValueError(f"{name} must contain at least one True pixel")
    return m


def check_same_side(*arrays, names=None):
    sides = {a.shape for a in arrays}
    if len(sides) > 1:
        names = names or [f"arg{i}" for i in range(len(arrays))]
        desc = ", ".join(f"{k}={a.shape}" for k, a in zip(names, arrays))
        raise ValueError(f"grid dimensions do not match: {desc}")


def check_counts(counts, name="counts"):
    counts = check_grid(counts, name)
    if np.any(counts < 0):
        raise ValueError(f"{name} must be non-negative")
    return counts
