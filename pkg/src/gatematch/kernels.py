"""Kernels, local-constant (Nadaraya-Watson) regression and bandwidth selection."""

from __future__ import annotations

import math

import numpy as np

from .exceptions import BandwidthError, DimensionError, EmptyCellError
from .validation import as_float_vector

KERNELS = ("epanechnikov", "gaussian")

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def kernel_eval(kind, t):
    """Evaluate a second-order kernel at ``t`` (scalar or array)."""
    t = np.asarray(t, dtype=float)
    if kind == "epanechnikov":
        out = np.where(np.abs(t) <= 1.0, 0.75 * (1.0 - t * t), 0.0)
    elif kind == "gaussian":
        out = _INV_SQRT_2PI * np.exp(-0.5 * t * t)
    else:
        raise ValueError(f"kernel must be one of {KERNELS}, got {kind!r}")
    return float(out) if out.ndim == 0 else out


def _check_bandwidth(h):
    h = float(h)
    if not (h > 0 and math.isfinite(h)):
        raise BandwidthError(f"bandwidth must be positive and finite, got {h!r}")
    return h


def kernel_weights(zs, points, h, kind="epanechnikov"):
    """Weight matrix of shape (len(points), len(zs))."""
    h = _check_bandwidth(h)
    zs = as_float_vector(zs, "zs")
    points = as_float_vector(points, "points")
    return kernel_eval(kind, (zs[None, :] - points[:, None]) / h)


def weighted_means(weights, vs):
    """Row-wise weighted means of ``vs``; NaN where a row's weights sum to zero."""
    total = weights.sum(axis=1)
    num = weights @ vs
    out = np.full(weights.shape[0], np.nan)
    ok = total > 0
    out[ok] = num[ok] / total[ok]
    return out


def local_constant(zs, vs, points, h, kind="epanechnikov"):
    """Vectorised Nadaraya-Watson fit of ``vs`` on ``zs`` at each of ``points``.

    Returns NaN at points whose kernel window holds no data.
    """
    zs = as_float_vector(zs, "zs")
    vs = as_float_vector(vs, "vs")
    if zs.size != vs.size:
        raise DimensionError(f"zs and vs differ in length: {zs.size} vs {vs.size}")
    return weighted_means(kernel_weights(zs, points, h, kind), vs)


def local_constant_1d(zs, vs, z0, h, kind="epanechnikov", diagnostics=None):
    """Nadaraya-Watson estimate at a single point.

    Returns ``None`` when the window is empty and increments
    ``diagnostics["empty_windows"]`` if a dict is supplied.

    >>> local_constant_1d([-1, 0, 1], [0, 1, 2], 0.0, 2.0)
    1.0
    """
    val = local_constant(zs, vs, [z0], h, kind)[0]
    if np.isnan(val):
        if diagnostics is not None:
            diagnostics["empty_windows"] = diagnostics.get("empty_windows", 0) + 1
        return None
    return float(val)


def product_weights(r1, r2, e1, e2, h1, h2, kind="epanechnikov"):
    """Product-kernel weights, shape (len(e1), len(r1))."""
    w1 = kernel_weights(r1, e1, h1, kind)
    w2 = kernel_weights(r2, e2, h2, kind)
    return w1 * w2


def local_constant_2d(r1, r2, vs, eval_point, h1, h2, kind="epanechnikov", diagnostics=None):
    """Product-kernel Nadaraya-Watson estimate at ``eval_point = (e1, e2)``."""
    r1 = as_float_vector(r1, "r1")
    r2 = as_float_vector(r2, "r2")
    vs = as_float_vector(vs, "vs")
    if not (r1.size == r2.size == vs.size):
        raise DimensionError("r1, r2 and vs must have equal length")
    e1, e2 = eval_point
    w = product_weights(r1, r2, [e1], [e2], h1, h2, kind)
    val = weighted_means(w, vs)[0]
    if np.isnan(val):
        if diagnostics is not None:
            diagnostics["empty_windows"] = diagnostics.get("empty_windows", 0) + 1
        return None
    return float(val)


def discrete_means(zs, vs, points):
    """Cell means of ``vs`` over ``zs == point``; NaN for empty cells."""
    zs = as_float_vector(zs, "zs")
    vs = as_float_vector(vs, "vs")
    if zs.size != vs.size:
        raise DimensionError(f"zs and vs differ in length: {zs.size} vs {vs.size}")
    points = as_float_vector(points, "points")
    w = (zs[None, :] == points[:, None]).astype(float)
    return weighted_means(w, vs)


def discrete_conditional_mean(zs, vs, z0):
    """Mean of ``vs`` over units with ``zs == z0`` exactly."""
    val = discrete_means(zs, vs, [z0])[0]
    if np.isnan(val):
        raise EmptyCellError(f"no unit has z == {z0!r}")
    return float(val)


def rule_of_thumb(zs):
    """Rule-of-thumb bandwidth 1.06 * min(sd, IQR / 1.349) * n ** (-1/5).

    Falls back to the standard deviation alone when the IQR is zero.
    """
    zs = as_float_vector(zs, "zs")
    n = zs.size
    if n < 2:
        raise BandwidthError("need at least two points to select a bandwidth")
    sd = float(np.std(zs, ddof=1))
    if not sd > 0:
        raise BandwidthError("zero spread: cannot select a bandwidth")
    q75, q25 = np.percentile(zs, [75, 25])
    iqr = (q75 - q25) / 1.349
    spread = min(sd, iqr) if iqr > 0 else sd
    return 1.06 * spread * n ** (-0.2)


def select_bandwidth(zs, vs=None, method="rule_of_thumb"):
    """Select a bandwidth.

    ``method`` is ``"rule_of_thumb"``, a positive number (fixed bandwidth), or
    a ``("fixed", h)`` pair. ``vs`` is accepted for interface symmetry. The
    rule of thumb depends on ``zs`` only.
    """
    if isinstance(method, tuple) and len(method) == 2 and method[0] == "fixed":
        return _check_bandwidth(method[1])
    if isinstance(method, (int, float)) and not isinstance(method, bool):
        return _check_bandwidth(method)
    if method in (None, "rule_of_thumb"):
        return rule_of_thumb(zs)
    raise ValueError(f"unknown bandwidth method {method!r}")
