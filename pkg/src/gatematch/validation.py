"""Input validation helpers shared by the data model and the estimators."""

from __future__ import annotations

import numpy as np

from .exceptions import DataError, DimensionError, EmptyArmError, TreatmentError


def as_float_vector(v, name="array"):
    arr = np.asarray(v, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be one-dimensional, got shape {arr.shape}")
    return arr


def as_float_matrix(x, name="X"):
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be two-dimensional, got shape {arr.shape}")
    return arr


def check_finite(arr, name):
    """Raise :class:`DataError` at the first non-finite cell of ``arr``."""
    arr = np.asarray(arr, dtype=float)
    bad = ~np.isfinite(arr)
    if bad.any():
        loc = np.argwhere(bad)[0]
        row = int(loc[0]) + 1
        column = name if arr.ndim == 1 else f"{name}[{int(loc[1])}]"
        raise DataError("non-finite value", row=row, column=column)


def check_treatment(a, name="a"):
    """Return ``a`` as an int array after checking it is 0/1 with both arms present."""
    arr = np.asarray(a)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be one-dimensional")
    arr_f = np.asarray(arr, dtype=float)
    bad = ~np.isin(arr_f, (0.0, 1.0))
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        raise TreatmentError(
            f"treatment must be 0 or 1, got {arr[row]!r}", row=row + 1, column=name
        )
    out = arr_f.astype(np.int64)
    n1 = int(out.sum())
    if n1 == 0 or n1 == out.size:
        arm = "control" if n1 == out.size else "treated"
        raise EmptyArmError(f"{arm} arm is empty")
    return out


def check_consistent_length(*arrays):
    lengths = {len(a) for a in arrays if a is not None}
    if len(lengths) > 1:
        raise DimensionError(f"inconsistent lengths: {sorted(lengths)}")


def check_grid(points):
    """Validate an evaluation grid: non-empty, finite, strictly increasing."""
    pts = as_float_vector(points, "grid")
    if pts.size == 0:
        raise ValueError("evaluation grid is empty")
    if not np.all(np.isfinite(pts)):
        raise ValueError("evaluation grid contains non-finite values")
    if np.any(np.diff(pts) <= 0):
        raise ValueError("evaluation grid must be strictly increasing")
    return pts


def check_injected(values, n, name, *, open_unit=False):
    """Validate a caller-supplied per-unit nuisance vector."""
    if values is None:
        return None
    arr = as_float_vector(values, name)
    if arr.size != n:
        raise DimensionError(f"{name} has length {arr.size}, expected {n}")
    check_finite(arr, name)
    if open_unit and np.any((arr <= 0) | (arr >= 1)):
        raise ValueError(f"{name} must lie strictly inside (0, 1)")
    return arr
