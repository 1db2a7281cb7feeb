"""Fixed-step RK4 integration of the closed loop (mean dynamic + payoff model)."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .game import AffineGame, bounds
from .pdm import Delayed, MultiDelay, PdmKind, Smoothing, pdm_init
from .protocol import Protocol
from .simplex import DEFAULT_EPS, check_state, random_state
from .update import CriterionParams, UpdateMonitor


class SimulationError(RuntimeError):
    """The integrated state left the state space beyond tolerance."""


DRIFT_RENORMALIZE = 1e-12
DRIFT_ABORT = 1e-6


@dataclass(frozen=True, eq=False)
class Scenario:
    game: AffineGame
    pdm: PdmKind
    protocol: Protocol
    x0: np.ndarray
    T: float
    h: float = 0.01
    algorithm1: bool = False
    distributed: bool = False
    criterion: CriterionParams | None = None
    p0: np.ndarray | None = None
    record_stride: int = 1
    seed: int | None = None
    eps: float = DEFAULT_EPS

    def __post_init__(self):
        layout = self.game.layout
        if self.protocol.layout != layout:
            raise ValueError("protocol and game layouts differ")
        object.__setattr__(self, "x0", check_state(self.x0, layout, name="x0").copy())
        if not self.h > 0 or not self.T >= self.h:
            raise ValueError(f"need h > 0 and T >= h, got h={self.h}, T={self.T}")
        steps = self.T / self.h
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ValueError(f"T={self.T} is not a whole number of steps h={self.h}")
        if int(self.record_stride) < 1:
            raise ValueError("record_stride must be a positive integer")
        delays = []
        if isinstance(self.pdm, Delayed):
            delays = [self.pdm.d]
        elif isinstance(self.pdm, MultiDelay):
            delays = [t.d for t in self.pdm.terms if t.d > 0]
        for d in delays:
            if self.h > d / 20 + 1e-15:
                raise ValueError(f"step h={self.h} too coarse for delay d={d}; need h <= d/20")

    @property
    def steps(self) -> int:
        return int(round(self.T / self.h))

    def criterion_params(self) -> CriterionParams:
        """Explicit criterion parameters, or ones derived from the game and PDM."""
        if self.criterion is not None:
            return self.criterion
        game, kind, eta = self.game, self.pdm, self.protocol.eta
        if isinstance(kind, Smoothing):
            return CriterionParams.for_smoothing(game, eta, kind.lam, kind.gamma)
        if isinstance(kind, Delayed):
            return CriterionParams.for_delay(game, eta, kind.B_d)
        if isinstance(kind, MultiDelay):
            B_DF = float(sum(np.linalg.norm(t.F, 2) for t in kind.terms))
            return CriterionParams.for_delay(game, eta, kind.B_d, B_DF=B_DF)
        return CriterionParams(eta=eta, M=game.layout.M, B_DF=bounds(game).B_DF, B_d=0.0)

    def replace(self, **changes) -> "Scenario":
        kw = {f: getattr(self, f) for f in self.__dataclass_fields__}
        kw.update(changes)
        return Scenario(**kw)


@dataclass(eq=False)
class Trajectory:
    scenario: Scenario
    times: np.ndarray
    states: np.ndarray
    payoffs: np.ndarray
    xdot: np.ndarray
    theta_events: list = field(default_factory=list)
    theta0: np.ndarray | None = None
    renormalizations: int = 0
    terminal: np.ndarray | None = None

    @property
    def game(self) -> AffineGame:
        return self.scenario.game

    @property
    def layout(self):
        return self.scenario.game.layout

    @property
    def dxnorm(self) -> np.ndarray:
        return np.linalg.norm(self.xdot, axis=1)

    @property
    def final_state(self) -> np.ndarray:
        """x(T), even when T is not on the recording stride."""
        return self.states[-1] if self.terminal is None else self.terminal

    @property
    def thetas(self) -> list[np.ndarray]:
        """theta_0 followed by every logged update."""
        return [self.theta0] + [th for _, th in self.theta_events]


def _guard(x: np.ndarray, layout, t: float) -> tuple[np.ndarray, bool]:
    sums = layout.block_sum(x)
    drift = float(np.max(np.abs(sums - 1.0)))
    low = float(x.min())
    if drift > DRIFT_ABORT or low < -DRIFT_ABORT or not np.all(np.isfinite(x)):
        raise SimulationError(f"state left the simplex at t={t:.6g}: block-sum drift {drift:.3g}, min entry {low:.3g}")
    if drift > DRIFT_RENORMALIZE or low < 0.0:
        x = np.maximum(x, 0.0)
        return x / layout.expand(layout.block_sum(x)), True
    return x, False


def integrate(scenario: Scenario) -> Trajectory:
    """Run one scenario; the trajectory holds every ``record_stride``-th step."""
    game = scenario.game
    layout = game.layout
    h = scenario.h
    kind = scenario.pdm
    smoothing = isinstance(kind, Smoothing)
    lam = kind.lam if smoothing else 0.0
    pdm = pdm_init(game, kind, scenario.x0, scenario.p0)
    protocol = scenario.protocol
    stride = int(scenario.record_stride)
    n_steps = scenario.steps

    monitor = None
    if scenario.algorithm1:
        if not protocol.kldrl_populations:
            raise ValueError("Algorithm 1 needs at least one KLD-RL population")
        monitor = UpdateMonitor(
            layout,
            protocol.theta,
            scenario.criterion_params(),
            populations=protocol.kldrl_populations,
            eps=scenario.eps,
        )

    n_rec = n_steps // stride + 1
    times = np.empty(n_rec)
    states = np.empty((n_rec, layout.n))
    payoffs = np.empty((n_rec, layout.n))
    xdots = np.empty((n_rec, layout.n))

    def fx(t, x, p_stage):
        p = pdm.output(t, x, p_stage)
        return protocol.choice(p) - x, p

    x = scenario.x0.copy()
    ps = pdm.p
    t = 0.0
    k1, p_now = fx(t, x, ps)
    if monitor is not None:
        monitor.record(t, k1, p_now)
    times[0], states[0], payoffs[0], xdots[0] = t, x, p_now, k1
    rec = 1
    renorm = 0
    skip_check = False

    for step in range(1, n_steps + 1):
        if smoothing:
            q1 = -lam * (ps - game(x))
            x2, p2 = x + 0.5 * h * k1, ps + 0.5 * h * q1
            k2, _ = fx(t + 0.5 * h, x2, p2)
            q2 = -lam * (p2 - game(x2))
            x3, p3 = x + 0.5 * h * k2, ps + 0.5 * h * q2
            k3, _ = fx(t + 0.5 * h, x3, p3)
            q3 = -lam * (p3 - game(x3))
            x4, p4 = x + h * k3, ps + h * q3
            k4, _ = fx(t + h, x4, p4)
            q4 = -lam * (p4 - game(x4))
            ps = ps + (h / 6.0) * (q1 + 2 * q2 + 2 * q3 + q4)
        else:
            k2, _ = fx(t + 0.5 * h, x + 0.5 * h * k1, None)
            k3, _ = fx(t + 0.5 * h, x + 0.5 * h * k2, None)
            k4, _ = fx(t + h, x + h * k3, None)
        x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t = step * h
        x, fixed = _guard(x, layout, t)
        renorm += fixed
        pdm.commit(t, x, ps)

        k1, p_now = fx(t, x, ps)
        if monitor is not None:
            monitor.record(t, k1, p_now)
            if skip_check:
                skip_check = False
            elif monitor.should_update(t, x, p_now, scenario.distributed):
                monitor.trigger(t, x)
                protocol = protocol.with_theta(monitor.theta)
                k1, p_now = fx(t, x, ps)
                monitor.record(t, k1, p_now)
                skip_check = True

        if step % stride == 0:
            times[rec], states[rec], payoffs[rec], xdots[rec] = t, x, p_now, k1
            rec += 1

    if rec < n_rec:
        raise AssertionError("recording buffer misaligned")
    return Trajectory(
        scenario=scenario,
        times=times,
        states=states,
        payoffs=payoffs,
        xdot=xdots,
        theta_events=list(monitor.theta_log) if monitor is not None else [],
        theta0=scenario.protocol.theta.copy(),
        renormalizations=renorm,
        terminal=x.copy(),
    )


@dataclass(frozen=True)
class RunFailure:
    index: int
    error: BaseException

    def __bool__(self) -> bool:
        return False


def _safe_integrate(args):
    i, scenario = args
    try:
        return integrate(scenario)
    except Exception as exc:  # collected per run; the batch continues
        return RunFailure(i, exc)


def batch_run(scenarios, workers: int | None = None) -> list:
    """Integrate independent scenarios, preserving input order.

    A failed run yields a falsy ``RunFailure`` in its slot.  ``workers > 1``
    uses a process pool.
    """
    jobs = list(enumerate(scenarios))
    if not jobs:
        return []
    if workers is None or workers <= 1 or len(jobs) == 1:
        return [_safe_integrate(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_safe_integrate, jobs))


def random_initial_states(layout, count: int, seed: int) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    return [random_state(layout, rng) for _ in range(count)]


def default_horizon(kind: PdmKind) -> float:
    return 200.0 if isinstance(kind, Smoothing) else 100.0


def sup_distance(x: np.ndarray, target: np.ndarray) -> float:
    return float(np.max(np.abs(np.asarray(x) - np.asarray(target))))


__all__ = [
    "Scenario",
    "Trajectory",
    "SimulationError",
    "RunFailure",
    "integrate",
    "batch_run",
    "random_initial_states",
    "default_horizon",
    "sup_distance",
]
