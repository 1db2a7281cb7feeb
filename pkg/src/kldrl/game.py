"""Affine population games F(x) = F x + b and a Nash equilibrium oracle."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .simplex import (
    LayoutError,
    PopulationLayout,
    as_layout,
    check_state,
    linear_max,
    project_state,
)


class ConvergenceError(RuntimeError):
    """An iterative solver hit its iteration cap."""


@dataclass(frozen=True)
class GameBounds:
    B_F: float
    B_DF: float


@dataclass(frozen=True, eq=False)
class AffineGame:
    layout: PopulationLayout
    F: np.ndarray
    b: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        layout = as_layout(self.layout)
        F = np.array(self.F, dtype=float)
        b = np.array(self.b, dtype=float)
        if F.shape != (layout.n, layout.n):
            raise LayoutError(f"F has shape {F.shape}, expected {(layout.n, layout.n)}")
        if b.shape != (layout.n,):
            raise LayoutError(f"b has shape {b.shape}, expected ({layout.n},)")
        if not (np.all(np.isfinite(F)) and np.all(np.isfinite(b))):
            raise ValueError("game coefficients must be finite")
        F.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "layout", layout)
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "b", b)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.F @ x + self.b

    @classmethod
    def zero(cls, layout) -> "AffineGame":
        layout = as_layout(layout)
        return cls(layout, np.zeros((layout.n, layout.n)), np.zeros(layout.n), name="zero")

    def to_dict(self) -> dict:
        return {"layout": list(self.layout.counts), "F": self.F.tolist(), "b": self.b.tolist()}


@dataclass(frozen=True, eq=False)
class CallbackGame:
    """Non-affine payoff hook.  Usable for simulation only; bounds and
    deficits need the affine form."""

    layout: PopulationLayout
    payoff_fn: Callable[[np.ndarray], np.ndarray]
    name: str = "callback"

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.payoff_fn(x), dtype=float)


def payoff(game, x) -> np.ndarray:
    x = game.layout.check(x, "state")
    return game(x)


def congestion_game() -> AffineGame:
    """Two-population, three-route congestion game with b = 0."""
    F = -np.array(
        [
            [2.5, 1.0, 0.0, 0.0, 0.0, 0.0],
            [1.0, 2.5, 1.0, 0.0, 0.5, 0.0],
            [0.0, 1.0, 2.5, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 2.5, 1.0, 0.0],
            [0.0, 0.5, 0.0, 1.0, 2.5, 1.0],
            [0.0, 0.0, 0.0, 0.0, 1.0, 2.5],
        ]
    )
    return AffineGame(PopulationLayout((3, 3)), F, np.zeros(6), name="congestion2pop")


def rps_zero_sum_game() -> AffineGame:
    """Biased rock-paper-scissors played between two populations."""
    A = np.array(
        [
            [0.0, -0.5, 1.0],
            [0.5, 0.0, -0.1],
            [-1.0, 0.1, 0.0],
        ]
    )
    F = np.zeros((6, 6))
    F[:3, 3:] = A
    F[3:, :3] = A
    return AffineGame(PopulationLayout((3, 3)), F, np.zeros(6), name="rps2pop")


CONGESTION_NE = np.array([4, 1, 4, 4, 1, 4]) / 9.0
RPS_NE = np.array([1, 10, 5, 1, 10, 5]) / 16.0

BUILTIN_GAMES = {
    "congestion2pop": congestion_game,
    "rps2pop": rps_zero_sum_game,
}


def builtin_game(name: str) -> AffineGame:
    try:
        return BUILTIN_GAMES[name]()
    except KeyError:
        raise ValueError(f"unknown builtin game {name!r}; choose from {sorted(BUILTIN_GAMES)}") from None


def load_game(path) -> AffineGame:
    """Read a game definition file.

    JSON object with ``layout`` (list of strategy counts), ``F`` (either a
    nested list or a flat row-major list of n*n numbers) and optional ``b``.
    """
    spec = json.loads(Path(path).read_text())
    layout = PopulationLayout(tuple(spec["layout"]))
    F = np.asarray(spec["F"], dtype=float)
    if F.ndim == 1:
        F = F.reshape(layout.n, layout.n)
    b = np.asarray(spec.get("b", np.zeros(layout.n)), dtype=float)
    return AffineGame(layout, F, b, name=spec.get("name", Path(path).stem))


def tangent_symmetric_part(game: AffineGame) -> np.ndarray:
    P = game.layout.tangent_projector()
    S = 0.5 * (game.F + game.F.T)
    return P @ S @ P


def is_contractive(game: AffineGame, tol: float = 1e-10) -> bool:
    """Negative semidefiniteness of F on the tangent space."""
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    return bool(np.linalg.eigvalsh(tangent_symmetric_part(game)).max() <= tol)


def bounds(game: AffineGame) -> GameBounds:
    """B_DF is the spectral norm of F; B_F the largest payoff norm on the
    state space, attained at a vertex since the norm is convex."""
    B_DF = float(np.linalg.norm(game.F, 2))
    B_F = max(float(np.linalg.norm(game.F @ z + game.b)) for z in game.layout.vertices())
    return GameBounds(B_F=B_F, B_DF=B_DF)


def skew_deficit(game: AffineGame) -> float:
    """(1/4) ||F - F^T||_2."""
    return 0.25 * float(np.linalg.norm(game.F - game.F.T, 2))


def nash_residual(game, x) -> float:
    """max_z (z - x)^T F(x); zero exactly at Nash equilibria."""
    x = game.layout.check(x, "state")
    p = game(x)
    return max(0.0, linear_max(p, game.layout) - float(x @ p))


def nash_oracle(
    game: AffineGame,
    tol: float = 1e-10,
    x0: np.ndarray | None = None,
    max_iter: int = 10**6,
) -> np.ndarray:
    """Extragradient iteration on the variational inequality of a
    contractive game, with Euclidean projection onto the state space."""
    if not is_contractive(game):
        raise ValueError("nash_oracle requires a contractive game")
    layout = game.layout
    x = layout.uniform_state() if x0 is None else check_state(x0, layout).copy()
    B_DF = float(np.linalg.norm(game.F, 2))
    if B_DF == 0.0:
        return x
    step = 0.1 / B_DF
    for _ in range(max_iter):
        if nash_residual(game, x) <= tol:
            return x
        y = project_state(x + step * game(x), layout)
        x = project_state(x + step * game(y), layout)
        if not np.all(np.isfinite(x)):
            raise ConvergenceError("extragradient iterates diverged")
    raise ConvergenceError(f"extragradient did not reach residual {tol} in {max_iter} iterations")


def random_contractive_game(layout, rng: np.random.Generator, kappa: float = 1.0) -> AffineGame:
    """F = -A A^T - kappa * (K - K^T), plus a random offset b."""
    layout = as_layout(layout)
    n = layout.n
    A = rng.standard_normal((n, n))
    K = rng.standard_normal((n, n))
    F = -A @ A.T / n - kappa * (K - K.T) / n
    return AffineGame(layout, F, rng.standard_normal(n), name="random")
