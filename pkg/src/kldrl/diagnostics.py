"""Post-processing metrics over recorded trajectories."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ._quad import cumulative_trapezoid, trapezoid_window
from .simplex import DomainError


@dataclass(frozen=True, eq=False)
class MetricSeries:
    name: str
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if len(self.times) != len(self.values):
            raise ValueError(f"{self.name}: {len(self.times)} times but {len(self.values)} values")

    @property
    def final(self) -> float:
        return float(self.values[-1])

    def tail(self, fraction: float) -> "MetricSeries":
        i = _tail_start(len(self.times), fraction)
        return MetricSeries(self.name, self.times[i:], self.values[i:])


def _tail_start(length: int, fraction: float) -> int:
    if not 0 < fraction <= 1:
        raise ValueError(f"tail fraction must lie in (0, 1], got {fraction}")
    return min(length - 1, int(np.floor(length * (1.0 - fraction))))


def _rowwise_kl(states: np.ndarray, target: np.ndarray) -> np.ndarray:
    pos = states > 0
    if np.any(pos & (target <= 0)):
        raise DomainError("target has zero entries where the state is positive")
    safe_t = np.where(target > 0, target, 1.0)
    safe_x = np.where(pos, states, 1.0)
    return np.sum(np.where(pos, states * np.log(safe_x / safe_t), 0.0), axis=1)


def kl_to_target(traj, target, population: int | None = None) -> MetricSeries:
    """KL(x(t) || target) for the whole society or one population."""
    target = np.asarray(target, dtype=float)
    states = traj.states
    name = "kl"
    if population is not None:
        sl = traj.layout.slices[population]
        states, target = states[:, sl], target[sl]
        name = f"kl[{population}]"
    return MetricSeries(name, traj.times, _rowwise_kl(states, target))


def _static_payoffs(traj) -> np.ndarray:
    game = traj.game
    return traj.states @ game.F.T + game.b


def average_payoff(traj) -> MetricSeries:
    """x(t)^T F(x(t)) summed over the society."""
    return MetricSeries("average_payoff", traj.times, np.einsum("ij,ij->i", traj.states, _static_payoffs(traj)))


def max_gain(traj, population: int) -> MetricSeries:
    sl = traj.layout.slices[population]
    return MetricSeries(f"max_gain[{population}]", traj.times, _static_payoffs(traj)[:, sl].max(axis=1))


def state_series(traj, coordinate: int) -> MetricSeries:
    return MetricSeries(f"x[{coordinate}]", traj.times, traj.states[:, coordinate])


def peak_to_peak(values, fraction: float = 1.0) -> float:
    values = np.asarray(values, dtype=float)
    i = _tail_start(len(values), fraction)
    return float(np.ptp(values[i:]))


def oscillation_amplitude(traj, coordinate: int, tail_fraction: float = 0.2) -> float:
    """Peak-to-peak range of one state coordinate over the trailing window."""
    return peak_to_peak(traj.states[:, coordinate], tail_fraction)


def convergence_time(series: MetricSeries, threshold: float):
    """First recorded time after which the series stays strictly below
    ``threshold``; None if it ends at or above it."""
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    above = np.flatnonzero(np.asarray(series.values) >= threshold)
    if above.size == 0:
        return float(series.times[0])
    last = int(above[-1])
    if last == len(series.values) - 1:
        return None
    return float(series.times[last + 1])


# -- passivity ---------------------------------------------------------------

AlphaFn = Callable[[object, int], float]


def delayed_alpha_fn(B_DF: float, d: float) -> AlphaFn:
    """alpha(t0) = (B_DF / 2) * int_{t0-d}^{t0} ||xdot||^2 (at rest before 0)."""

    def alpha(traj, i):
        t0 = traj.times[i]
        return 0.5 * B_DF * trapezoid_window(traj.times, traj.dxnorm**2, t0 - d, t0, before=0.0)

    return alpha


def smoothing_alpha_fn(game) -> AlphaFn:
    """alpha(t0) = sqrt(n) * ||p(t0) - F(x(t0))||."""
    root_n = np.sqrt(game.layout.n)

    def alpha(traj, i):
        return float(root_n * np.linalg.norm(traj.payoffs[i] - game(traj.states[i])))

    return alpha


def zero_alpha(traj, i) -> float:
    return 0.0


def supply_rate(traj, nu: float) -> np.ndarray:
    """xdot^T pdot - nu ||xdot||^2 with pdot by centered differences."""
    pdot = np.gradient(traj.payoffs, traj.times, axis=0)
    xd = traj.xdot
    return np.einsum("ij,ij->i", xd, pdot) - nu * np.einsum("ij,ij->i", xd, xd)


def passivity_check(traj, nu: float, alpha_fn: AlphaFn = zero_alpha, grid: int = 20) -> float:
    """Worst slack of alpha(t0) - int_{t0}^{t} supply over a grid of pairs t0 <= t."""
    m = len(traj.times)
    if m < 3 or grid < 2:
        raise ValueError("passivity check needs at least three samples and a grid of two")
    cum = cumulative_trapezoid(traj.times, supply_rate(traj, nu))
    idx = np.unique(np.linspace(0, m - 1, min(grid, m)).round().astype(int))
    worst = np.inf
    for a, i in enumerate(idx):
        alpha = alpha_fn(traj, int(i))
        gain = cum[idx[a:]] - cum[i]
        worst = min(worst, float(alpha - gain.max()))
    return worst
