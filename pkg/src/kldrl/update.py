"""Iterative update of the KLD-RL regularization parameter theta.

The monitor accumulates the quantities the trigger criteria need along a
run: the sampled norms ||xdot(tau)||_2 (society-wide and per population),
the payoff history for the smoothing case, and exponentially discounted
integrals of ||xdot||.  When a criterion certifies that the current state
is close enough to the perturbed equilibrium of the current theta, theta is
reset to the current state.

Delay criterion:

    gap(x, p, theta) + sqrt(2M) B_DF B_d max_{[t1-B_d, t1]} ||xdot||
        <= (eta / 2) KL(x || theta)

Smoothing criterion:

    gap(x, p, theta) + sqrt(2M) [ (||p(gamma t1)|| + B_F) exp(-lam (1-gamma) t1)
        + B_DF int_{gamma t1}^{t1} exp(-lam (t1 - tau)) ||xdot(tau)|| dtau ]
        <= (eta / 2) KL(x || theta)

with gap(x, p, theta) = max_z (z - x)^T (p - eta grad KL(x || theta)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._quad import interp_at
from .game import AffineGame, ConvergenceError, bounds
from .protocol import kldrl_choice
from .simplex import (
    DEFAULT_EPS,
    DomainError,
    PopulationLayout,
    as_layout,
    interior_clamp,
    kl_divergence,
)

DELAY = "delay"
SMOOTHING = "smoothing"


class WindowUnderrun(LookupError):
    """The monitor has no samples up to the requested time."""


@dataclass(frozen=True)
class CriterionParams:
    eta: float
    M: int
    B_DF: float
    B_d: float | None = None
    B_F: float | None = None
    lam: float | None = None
    gamma: float | None = None

    def __post_init__(self):
        if not self.eta > 0 or self.M < 1 or self.B_DF < 0:
            raise ValueError(f"invalid criterion parameters {self}")
        if self.gamma is not None and not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if self.lam is not None and not self.lam > 0:
            raise ValueError("lambda must be positive")
        if self.B_d is not None and not self.B_d >= 0:
            raise ValueError("B_d must be nonnegative")

    @property
    def kind(self) -> str:
        return SMOOTHING if self.lam is not None else DELAY

    @classmethod
    def for_delay(cls, game: AffineGame, eta: float, B_d: float, B_DF: float | None = None) -> "CriterionParams":
        B_DF = bounds(game).B_DF if B_DF is None else B_DF
        return cls(eta=eta, M=game.layout.M, B_DF=B_DF, B_d=B_d)

    @classmethod
    def for_smoothing(cls, game: AffineGame, eta: float, lam: float, gamma: float) -> "CriterionParams":
        b = bounds(game)
        return cls(eta=eta, M=game.layout.M, B_DF=b.B_DF, B_F=b.B_F, lam=lam, gamma=gamma)


def lhs_stationarity(x, p, theta, eta: float, layout, populations=None) -> float:
    """max_z (z - x)^T (p - eta * grad KL(x || theta)), optionally restricted
    to a subset of populations."""
    layout = as_layout(layout)
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise DomainError("stationarity gap needs an interior state")
    r = p - eta * np.log(x / theta)
    per_block = layout.block_max(r) - layout.block_sum(x * r)
    if populations is not None:
        per_block = per_block[list(populations)]
    return max(0.0, float(per_block.sum()))


def _block_gaps(x, p, theta, eta, layout):
    r = p - eta * np.log(x / theta)
    gaps = np.maximum(layout.block_max(r) - layout.block_sum(x * r), 0.0)
    pos = x > 0
    kl = np.zeros(layout.n)
    kl[pos] = x[pos] * np.log(x[pos] / theta[pos])
    return gaps, layout.block_sum(kl)


class _Growable:
    def __init__(self, width: int, capacity: int = 1024):
        self.a = np.empty((capacity, width))
        self.m = 0

    def append(self, row) -> None:
        if self.m == self.a.shape[0]:
            self.a = np.concatenate([self.a, np.empty_like(self.a)])
        self.a[self.m] = row
        self.m += 1

    @property
    def view(self) -> np.ndarray:
        return self.a[: self.m]


@dataclass(eq=False)
class UpdateMonitor:
    """Trigger bookkeeping for one run.  Single-owner and mutable.

    ``populations`` lists which populations own a theta that may be reset
    (all of them unless the society is mixed).
    """

    layout: PopulationLayout
    theta: np.ndarray
    params: CriterionParams
    t0: float = 0.0
    populations: tuple[int, ...] | None = None
    eps: float = DEFAULT_EPS
    l: int = 0
    theta_log: list = field(default_factory=list)

    def __post_init__(self):
        self.layout = as_layout(self.layout)
        self.theta = self.layout.check(self.theta, "theta").copy()
        if np.any(self.theta <= 0):
            raise DomainError("theta must be interior")
        if self.populations is None:
            self.populations = tuple(range(self.layout.M))
        self.populations = tuple(self.populations)
        M = self.layout.M
        # columns: t, society ||xdot||, per-population ||xdot^k||
        self._dx = _Growable(2 + M)
        self._p = _Growable(self.layout.n) if self.params.kind == SMOOTHING else None
        # discounted trapezoid sums, same column layout as the norms
        self._disc = _Growable(1 + M) if self.params.kind == SMOOTHING else None

    # -- sampling -------------------------------------------------------
    @property
    def times(self) -> np.ndarray:
        return self._dx.view[:, 0]

    @property
    def dxnorm(self) -> np.ndarray:
        return self._dx.view[:, 1]

    @property
    def dxnorm_blocks(self) -> np.ndarray:
        return self._dx.view[:, 2:]

    def record(self, t: float, xdot: np.ndarray, p: np.ndarray | None = None) -> None:
        """Append the sample (t, xdot(t), p(t)).  Re-recording the last time
        keeps the larger norms (left/right limits around a theta reset)."""
        norms = np.concatenate([[np.linalg.norm(xdot)], self.layout.block_norms(xdot)])
        m = self._dx.m
        if m and t <= self._dx.a[m - 1, 0]:
            if t < self._dx.a[m - 1, 0]:
                raise ValueError("monitor samples must be recorded in time order")
            row = self._dx.a[m - 1]
            row[1:] = np.maximum(row[1:], norms)
            if self._disc is not None:
                self._rebuild_last_discount()
            return
        self._dx.append(np.concatenate([[t], norms]))
        if self._p is not None:
            self._p.append(p)
            self._append_discount()

    def _append_discount(self) -> None:
        lam = self.params.lam
        m = self._dx.m
        g = self._dx.a[m - 1, 1:]
        if m == 1:
            self._disc.append(np.zeros_like(g))
            return
        h = self._dx.a[m - 1, 0] - self._dx.a[m - 2, 0]
        decay = math.exp(-lam * h)
        prev = self._disc.a[self._disc.m - 1]
        g_prev = self._dx.a[m - 2, 1:]
        self._disc.append(decay * prev + 0.5 * h * (decay * g_prev + g))

    def _rebuild_last_discount(self) -> None:
        self._disc.m -= 1
        self._append_discount()

    def _require(self, t1: float) -> None:
        if self._dx.m == 0 or self.times[-1] < t1 - 1e-9:
            raise WindowUnderrun(f"no monitor sample at t={t1}")

    def window_max(self, t1: float, width: float) -> np.ndarray:
        """Max of [society, per-population] ||xdot|| over [t1 - width, t1].
        Before the first sample the state is at rest."""
        self._require(t1)
        t = self.times
        lo = int(np.searchsorted(t, t1 - width - 1e-12, side="left"))
        hi = int(np.searchsorted(t, t1 + 1e-12, side="right"))
        return self._dx.view[lo:hi, 1:].max(axis=0)

    def payoff_at(self, s: float) -> np.ndarray:
        if self._p is None:
            raise TypeError("payoff history is only kept for the smoothing criterion")
        self._require(s)
        return interp_at(self.times, self._p.view, s)

    def discounted_integral(self, t1: float) -> np.ndarray:
        """Trapezoid value of int_{gamma t1}^{t1} exp(-lam (t1 - tau)) g(tau) dtau
        for g = society and per-population ||xdot||."""
        self._require(t1)
        lam, gamma = self.params.lam, self.params.gamma
        t = self.times
        g = self._dx.view[:, 1:]
        S = self._disc.view
        k = int(np.searchsorted(t, t1 + 1e-12, side="right")) - 1
        s = gamma * t1
        j = int(np.searchsorted(t, s, side="right")) - 1
        if j >= k:
            return np.zeros(g.shape[1])
        if j < 0:
            # window starts before the first sample; the state is at rest there
            return S[k] - math.exp(-lam * (t[k] - t[0])) * S[0]
        tail = S[k] - math.exp(-lam * (t[k] - t[j + 1])) * S[j + 1]
        w = (s - t[j]) / (t[j + 1] - t[j])
        g_s = (1.0 - w) * g[j] + w * g[j + 1]
        head = 0.5 * (t[j + 1] - s) * (math.exp(-lam * (t1 - s)) * g_s + math.exp(-lam * (t1 - t[j + 1])) * g[j + 1])
        return head + tail

    # -- criteria -------------------------------------------------------
    def delay_margin(self, t1: float, x: np.ndarray, p: np.ndarray) -> np.ndarray:
        """RHS - LHS of the delay criterion: [centralized, per-population...]."""
        prm = self.params
        gaps, kls = _block_gaps(x, p, self.theta, prm.eta, self.layout)
        wmax = self.window_max(t1, prm.B_d)
        c = math.sqrt(2 * prm.M) * prm.B_DF * prm.B_d
        central = 0.5 * prm.eta * kls.sum() - gaps.sum() - c * wmax[0]
        per_pop = 0.5 * prm.eta * kls - gaps - c * wmax[1:]
        return np.concatenate([[central], per_pop])

    def smoothing_margin(self, t1: float, x: np.ndarray, p: np.ndarray) -> np.ndarray:
        """RHS - LHS of the smoothing criterion: [centralized, per-population...]."""
        prm = self.params
        gaps, kls = _block_gaps(x, p, self.theta, prm.eta, self.layout)
        pg = self.payoff_at(prm.gamma * t1)
        decay = math.exp(-prm.lam * (1.0 - prm.gamma) * t1)
        integ = self.discounted_integral(t1)
        c = math.sqrt(2 * prm.M)
        central = c * ((np.linalg.norm(pg) + prm.B_F) * decay + prm.B_DF * integ[0])
        per_pop = c * ((self.layout.block_norms(pg) + prm.B_F / prm.M) * decay + prm.B_DF * integ[1:])
        return np.concatenate(
            [[0.5 * prm.eta * kls.sum() - gaps.sum() - central], 0.5 * prm.eta * kls - gaps - per_pop]
        )

    def margins(self, t1: float, x: np.ndarray, p: np.ndarray) -> np.ndarray:
        if self.params.kind == SMOOTHING:
            return self.smoothing_margin(t1, x, p)
        return self.delay_margin(t1, x, p)

    def should_update(self, t1: float, x: np.ndarray, p: np.ndarray, distributed: bool = False) -> bool:
        """Evaluate the trigger.  Mixed societies (not every population owns
        a theta) always use the per-population form on the owning populations."""
        if t1 <= self.t0:
            return False
        mg = self.margins(t1, x, p)
        if distributed or len(self.populations) < self.layout.M:
            return bool(np.all(mg[1:][list(self.populations)] >= 0.0))
        return bool(mg[0] >= 0.0)

    def trigger(self, t1: float, x: np.ndarray) -> np.ndarray:
        return trigger_update(self, t1, x)


def check_delay_criterion(monitor: UpdateMonitor, params: CriterionParams, t1, x, p) -> bool:
    if params is not monitor.params:
        monitor = _with_params(monitor, params)
    return bool(monitor.delay_margin(t1, x, p)[0] >= 0.0)


def check_smoothing_criterion(monitor: UpdateMonitor, params: CriterionParams, t1, x, p, p_gamma=None) -> bool:
    """Smoothing trigger.  ``p_gamma`` overrides the stored p(gamma t1)."""
    if params is not monitor.params:
        monitor = _with_params(monitor, params)
    if p_gamma is None:
        return bool(monitor.smoothing_margin(t1, x, p)[0] >= 0.0)
    prm = params
    gaps, kls = _block_gaps(x, p, monitor.theta, prm.eta, monitor.layout)
    decay = math.exp(-prm.lam * (1.0 - prm.gamma) * t1)
    integ = monitor.discounted_integral(t1)[0]
    corr = math.sqrt(2 * prm.M) * ((np.linalg.norm(p_gamma) + prm.B_F) * decay + prm.B_DF * integ)
    return bool(gaps.sum() + corr <= 0.5 * prm.eta * kls.sum())


def check_distributed(monitor: UpdateMonitor, params: CriterionParams, k: int, t1, x, p) -> bool:
    """Population-k form of the active criterion, using only block-k data
    (and the shared bounds).  If it holds for every k, the centralized
    criterion holds too."""
    if params is not monitor.params:
        monitor = _with_params(monitor, params)
    return bool(monitor.margins(t1, x, p)[1 + k] >= 0.0)


def _with_params(monitor: UpdateMonitor, params: CriterionParams) -> UpdateMonitor:
    if params.kind != monitor.params.kind:
        raise ValueError("criterion kind differs from the monitor's")
    clone = UpdateMonitor.__new__(UpdateMonitor)
    clone.__dict__.update(monitor.__dict__)
    clone.params = params
    return clone


def trigger_update(monitor: UpdateMonitor, t1: float, x: np.ndarray) -> np.ndarray:
    """Reset theta to the (interior-clamped) state on the owning populations."""
    if t1 <= monitor.t0:
        raise ValueError(f"update time {t1} must exceed the previous update time {monitor.t0}")
    clamped = interior_clamp(x, monitor.layout, monitor.eps)
    theta = monitor.theta.copy()
    for k in monitor.populations:
        sl = monitor.layout.slices[k]
        theta[sl] = clamped[sl]
    monitor.theta = theta
    monitor.t0 = float(t1)
    monitor.l += 1
    monitor.theta_log.append((float(t1), theta.copy()))
    return theta


def perturbed_nash(
    game: AffineGame,
    eta: float,
    theta,
    tol: float = 1e-12,
    beta: float = 0.5,
    max_iter: int = 10**6,
) -> np.ndarray:
    """Damped fixed-point iteration x <- (1 - beta) x + beta * choice(F(x)).

    The limit is the equilibrium of the virtual payoff F(z) - eta grad KL(z || theta).
    Iterates until successive points differ by less than ``tol`` and the
    stationarity gap is at most ``10 * tol``.
    """
    layout = game.layout
    theta = layout.check(theta, "theta")
    x = theta.copy()
    for _ in range(max_iter):
        y = (1.0 - beta) * x + beta * kldrl_choice(theta, game(x), eta, layout)
        if not np.all(np.isfinite(y)):
            raise ConvergenceError("perturbed equilibrium iteration diverged")
        step = np.max(np.abs(y - x))
        x = y
        if step < tol and (step == 0.0 or lhs_stationarity(x, game(x), theta, eta, layout) <= 10 * tol):
            return x
    raise ConvergenceError(f"perturbed equilibrium iteration did not settle to {tol} in {max_iter} steps")


def kl_decrease_slack(target: np.ndarray, thetas) -> np.ndarray:
    """Slack of KL(target || th_{l+1}) <= KL(target || th_l) - KL(th_{l+1} || th_l) / 2
    for each consecutive pair of logged parameters."""
    out = []
    for a, b in zip(thetas[:-1], thetas[1:]):
        out.append(kl_divergence(target, a) - 0.5 * kl_divergence(b, a) - kl_divergence(target, b))
    return np.array(out)
