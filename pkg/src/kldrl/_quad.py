"""Trapezoid helpers on sampled, possibly nonuniform, grids."""

from __future__ import annotations

import numpy as np


def interp_at(times: np.ndarray, values: np.ndarray, s: float):
    """Linear interpolation of ``values`` (1-D or rows of 2-D) at time ``s``."""
    i = int(np.searchsorted(times, s, side="right")) - 1
    if i < 0:
        i = 0
    if i >= len(times) - 1:
        return values[len(times) - 1]
    t0, t1 = times[i], times[i + 1]
    w = (s - t0) / (t1 - t0)
    if w <= 0.0:
        return values[i]
    return (1.0 - w) * values[i] + w * values[i + 1]


def trapezoid_window(times: np.ndarray, values: np.ndarray, a: float, b: float, before: float = 0.0) -> float:
    """Integral of the piecewise-linear interpolant of ``values`` over [a, b].

    Times earlier than ``times[0]`` contribute the constant ``before``.
    """
    if b <= a:
        return 0.0
    total = 0.0
    t_first = times[0]
    if a < t_first:
        total += before * (min(b, t_first) - a)
        a = t_first
        if b <= a:
            return total
    b = min(b, times[-1])
    if b <= a:
        return total
    lo = int(np.searchsorted(times, a, side="right"))
    hi = int(np.searchsorted(times, b, side="left"))
    ts = np.concatenate([[a], times[lo:hi], [b]])
    vs = np.concatenate([[interp_at(times, values, a)], values[lo:hi], [interp_at(times, values, b)]])
    return total + float(np.sum(0.5 * (vs[1:] + vs[:-1]) * np.diff(ts)))


def cumulative_trapezoid(times: np.ndarray, values: np.ndarray) -> np.ndarray:
    out = np.zeros(len(times))
    if len(times) > 1:
        out[1:] = np.cumsum(0.5 * (values[1:] + values[:-1]) * np.diff(times))
    return out
