"""Accuracy metrics and the wall-clock measurement protocol."""

import time

import numpy as np

from .errors import DimensionMismatch, ZeroReference

_DENOM_FLOOR = 1e-300


def relative_errors(u, y):
    """(l2_rel, l1_rel, linf_rel, mae) of a solution grid against a reference.

    l2_rel sums the per-point Euclidean norm over the n components before
    taking the ratio; l1_rel and linf_rel are entrywise; mae is the plain
    mean absolute error.
    """
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float)
    if u.shape != y.shape:
        raise DimensionMismatch(f"grids differ: {u.shape} vs {y.shape}")
    diff = u - y
    if u.ndim >= 2:
        point_diff = np.sqrt(np.sum(diff * diff, axis=-1))
        point_ref = np.sqrt(np.sum(y * y, axis=-1))
    else:
        point_diff = np.abs(diff)
        point_ref = np.abs(y)
    l2_den = float(point_ref.sum())
    l1_den = float(np.abs(y).sum())
    linf_den = float(np.abs(y).max())
    if min(l2_den, l1_den, linf_den) < _DENOM_FLOOR:
        raise ZeroReference("reference grid is (numerically) zero")
    l2 = float(point_diff.sum()) / l2_den
    l1 = float(np.abs(diff).sum()) / l1_den
    linf = float(np.abs(diff).max()) / linf_den
    mae = float(np.abs(diff).mean())
    return l2, l1, linf, mae


def time_op(op, repeats=100):
    """(mean, min) wall-clock seconds of a pure operation over ``repeats``
    measured runs, after one excluded warm-up call. Monotonic clock."""
    op()
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        op()
        times.append(time.perf_counter() - start)
    return float(np.mean(times)), float(np.min(times))
