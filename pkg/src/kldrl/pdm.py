"""Payoff dynamics models: causal maps from state trajectories to payoffs.

Four variants are supported:

* ``Static``      p(t) = F(x(t))
* ``Delayed``     p(t) = F(x(t - d)), with x(t) = x(0) for t < 0
* ``MultiDelay``  p(t) = sum_i F_i x(t - d_i) + b_i
* ``Smoothing``   dp/dt = -lam (p - F(x)), a first-order low-pass filter

Delay variants keep a trimmed history of committed samples and
interpolate linearly between them.  The smoothing variant carries ``p`` as
extra state that the integrator advances alongside ``x``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._quad import trapezoid_window
from .game import AffineGame, is_contractive, skew_deficit, tangent_symmetric_part


class HistoryUnderrun(LookupError):
    """A delayed lookup fell outside the stored history."""


# -- kinds -----------------------------------------------------------------


@dataclass(frozen=True)
class Static:
    pass


@dataclass(frozen=True)
class Delayed:
    d: float
    B_d: float | None = None

    def __post_init__(self):
        if not self.d > 0:
            raise ValueError(f"delay must be positive, got {self.d}")
        if self.B_d is None:
            object.__setattr__(self, "B_d", float(self.d))
        if self.B_d < self.d:
            raise ValueError(f"B_d={self.B_d} must upper-bound d={self.d}")


@dataclass(frozen=True, eq=False)
class DelayTerm:
    d: float
    F: np.ndarray
    b: np.ndarray


@dataclass(frozen=True, eq=False)
class MultiDelay:
    terms: tuple[DelayTerm, ...]
    B_d: float | None = None

    def __post_init__(self):
        if not self.terms:
            raise ValueError("MultiDelay needs at least one term")
        if any(t.d < 0 for t in self.terms):
            raise ValueError("delays must be nonnegative")
        if self.B_d is None:
            object.__setattr__(self, "B_d", self.max_delay)
        if self.B_d < self.max_delay:
            raise ValueError(f"B_d={self.B_d} must upper-bound max delay {self.max_delay}")

    @property
    def max_delay(self) -> float:
        return max(float(t.d) for t in self.terms)

    @classmethod
    def split(cls, game: AffineGame, delays, weights=None, B_d=None) -> "MultiDelay":
        """Split ``game`` into weighted copies F_i = w_i F, b_i = w_i b."""
        delays = [float(d) for d in delays]
        if weights is None:
            weights = [1.0 / len(delays)] * len(delays)
        weights = [float(w) for w in weights]
        if len(weights) != len(delays):
            raise ValueError("delays and weights differ in length")
        if abs(sum(weights) - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got {sum(weights)}")
        terms = tuple(DelayTerm(d, w * game.F, w * game.b) for d, w in zip(delays, weights))
        return cls(terms, B_d)


@dataclass(frozen=True)
class Smoothing:
    lam: float
    gamma: float = 0.1

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if not 0 < self.gamma < 1:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")


PdmKind = Static | Delayed | MultiDelay | Smoothing


def kind_name(kind: PdmKind) -> str:
    return {Static: "static", Delayed: "delayed", MultiDelay: "multidelay", Smoothing: "smoothing"}[type(kind)]


def max_delay(kind: PdmKind) -> float:
    if isinstance(kind, Delayed):
        return float(kind.d)
    if isinstance(kind, MultiDelay):
        return kind.max_delay
    return 0.0


# -- history -----------------------------------------------------------------


class DelayHistory:
    """Committed (t, x) samples, trimmed to the span needed for lookups.

    Samples before the first one are the constant pre-history x(t0).
    """

    def __init__(self, t0: float, x0: np.ndarray, span: float, capacity: int = 4096):
        self.span = float(span)
        self._t = np.empty(capacity)
        self._x = np.empty((capacity, x0.size))
        self._t[0] = t0
        self._x[0] = x0
        self._m = 1
        self._t_start = float(t0)
        self._x_start = x0.copy()
        self._trimmed = False

    def append(self, t: float, x: np.ndarray) -> None:
        if t <= self._t[self._m - 1]:
            raise ValueError("history times must increase")
        if self._m == self._t.size:
            self._compact()
        self._t[self._m] = t
        self._x[self._m] = x
        self._m += 1

    def _compact(self) -> None:
        t_last = self._t[self._m - 1]
        keep = int(np.searchsorted(self._t[: self._m], t_last - self.span, side="right")) - 2
        if keep <= 0:
            # span covers everything: grow
            self._t = np.concatenate([self._t, np.empty_like(self._t)])
            self._x = np.concatenate([self._x, np.empty_like(self._x)])
            return
        m = self._m - keep
        self._t[:m] = self._t[keep : self._m]
        self._x[:m] = self._x[keep : self._m]
        self._m = m
        self._trimmed = True

    @property
    def t_last(self) -> float:
        return float(self._t[self._m - 1])

    @property
    def times(self) -> np.ndarray:
        return self._t[: self._m]

    def __call__(self, s: float) -> np.ndarray:
        t = self._t
        m = self._m
        if s <= t[0]:
            if s < t[0] - 1e-12 and self._trimmed:
                raise HistoryUnderrun(f"time {s} precedes stored history starting at {t[0]}")
            return self._x[0] if self._trimmed else self._x_start
        if s > t[m - 1] + 1e-12:
            raise HistoryUnderrun(f"time {s} is beyond the last committed sample {t[m - 1]}")
        i = int(np.searchsorted(t[:m], s, side="right")) - 1
        if i >= m - 1:
            return self._x[m - 1]
        w = (s - t[i]) / (t[i + 1] - t[i])
        if w <= 1e-12:
            return self._x[i]
        if w >= 1.0 - 1e-12:
            return self._x[i + 1]
        return (1.0 - w) * self._x[i] + w * self._x[i + 1]


# -- models ------------------------------------------------------------------


@dataclass(eq=False)
class PdmState:
    """One run's payoff mechanism.  Single-owner and mutable."""

    kind: PdmKind
    game: AffineGame
    history: DelayHistory | None = None
    p: np.ndarray | None = None
    t: float = 0.0
    _static_F: np.ndarray | None = field(default=None, repr=False)

    @property
    def layout(self):
        return self.game.layout

    @property
    def has_state(self) -> bool:
        """True when p is an integrated state variable (smoothing)."""
        return isinstance(self.kind, Smoothing)

    def output(self, t: float, x: np.ndarray, p_stage: np.ndarray | None = None) -> np.ndarray:
        """Payoff at time ``t`` given the (stage) state ``x``.

        For the smoothing model the payoff is the filter state, taken from
        ``p_stage`` when an integrator stage supplies one.
        """
        kind = self.kind
        if isinstance(kind, Delayed):
            return self.game(self.history(t - kind.d))
        if isinstance(kind, Smoothing):
            return self.p if p_stage is None else p_stage
        if isinstance(kind, MultiDelay):
            out = np.zeros(self.layout.n)
            for term in kind.terms:
                xs = x if term.d == 0 else self.history(t - term.d)
                out += term.F @ xs + term.b
            return out
        return self.game(x)

    def derivative(self, x: np.ndarray, p: np.ndarray | None = None) -> np.ndarray:
        """Filter rate -lam (p - F(x)); only defined for the smoothing model."""
        if not isinstance(self.kind, Smoothing):
            raise TypeError(f"{kind_name(self.kind)} PDM has no payoff state")
        p = self.p if p is None else p
        return -self.kind.lam * (p - self.game(x))

    def commit(self, t: float, x: np.ndarray, p: np.ndarray | None = None) -> None:
        self.t = t
        if self.history is not None:
            self.history.append(t, x)
        if isinstance(self.kind, Smoothing):
            self.p = np.array(p, dtype=float)


def pdm_init(game: AffineGame, kind: PdmKind, x0: np.ndarray, p0: np.ndarray | None = None, t0: float = 0.0) -> PdmState:
    x0 = game.layout.check(x0, "x0")
    state = PdmState(kind=kind, game=game, t=t0)
    if isinstance(kind, (Delayed, MultiDelay)):
        if isinstance(kind, MultiDelay):
            F_sum = sum(term.F for term in kind.terms)
            b_sum = sum(term.b for term in kind.terms)
            if not (np.allclose(F_sum, game.F, atol=1e-12, rtol=0) and np.allclose(b_sum, game.b, atol=1e-12, rtol=0)):
                raise ValueError("MultiDelay terms must sum to the base game")
        span = max(kind.B_d, max_delay(kind))
        state.history = DelayHistory(t0, x0.copy(), span)
    elif isinstance(kind, Smoothing):
        state.p = game(x0) if p0 is None else game.layout.check(p0, "p0").copy()
    return state


def pdm_output(state: PdmState, t: float, x: np.ndarray | None = None) -> np.ndarray:
    if x is None:
        if isinstance(state.kind, (Static, MultiDelay)):
            raise ValueError("current state required for this PDM")
    return state.output(t, x)


def smoothing_derivative(state: PdmState, x: np.ndarray) -> np.ndarray:
    return state.derivative(x)


def antipassivity_deficit(state: PdmState) -> float:
    """Passivity shortage nu* of the payoff mechanism.

    Delayed: spectral norm of F.  Multi-delay: sum of the terms' spectral
    norms (conservative).  Smoothing: (1/4)||F - F^T||_2, valid only for a
    contractive game.  Static: largest eigenvalue of the tangent symmetric
    part of F clipped at zero, which is zero for contractive games.
    """
    kind, game = state.kind, state.game
    if isinstance(kind, Delayed):
        return float(np.linalg.norm(game.F, 2))
    if isinstance(kind, MultiDelay):
        return float(sum(np.linalg.norm(term.F, 2) for term in kind.terms))
    if isinstance(kind, Smoothing):
        if not is_contractive(game):
            raise ValueError("smoothing deficit formula requires a contractive game")
        return skew_deficit(game)
    if is_contractive(game):
        return 0.0
    return float(np.linalg.eigvalsh(tangent_symmetric_part(game)).max())


def delayed_stored_energy(B_DF: float, d: float, times: np.ndarray, dxnorm: np.ndarray, t0: float) -> float:
    """(B_DF / 2) * integral over [t0 - d, t0] of ||xdot||^2 (zero before t = 0)."""
    if times[-1] < t0 - 1e-12:
        raise ValueError(f"samples end at {times[-1]}, before t0={t0}")
    return 0.5 * B_DF * trapezoid_window(times, dxnorm**2, t0 - d, t0, before=0.0)


def smoothing_stored_energy(game: AffineGame, x: np.ndarray, p: np.ndarray) -> float:
    """sqrt(n) * ||p - F x - b||_2."""
    return float(np.sqrt(game.layout.n) * np.linalg.norm(p - game(x)))


def stored_energy_bound(state: PdmState, t0: float, traj) -> float:
    """Stored-energy estimate alpha(t0) of the PDM along a recorded trajectory."""
    kind = state.kind
    if isinstance(kind, (Delayed, MultiDelay)):
        B_DF = antipassivity_deficit(state)
        return delayed_stored_energy(B_DF, max_delay(kind), traj.times, traj.dxnorm, t0)
    if isinstance(kind, Smoothing):
        i = int(np.argmin(np.abs(traj.times - t0)))
        return smoothing_stored_energy(state.game, traj.states[i], traj.payoffs[i])
    return 0.0
