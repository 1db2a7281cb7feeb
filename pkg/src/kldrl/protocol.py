"""Revision protocols and the mean dynamics they induce.

The KLD-RL choice map is a theta-weighted softmax,

    T_i(theta, r) = theta_i exp(r_i / eta) / sum_l theta_l exp(r_l / eta),

and reduces to the logit choice when theta is uniform.  Mixed societies
assign each population either rule; logit populations simply carry no
theta weights.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .simplex import (
    DomainError,
    PopulationLayout,
    as_layout,
    check_state,
    kl_divergence,
    linear_max,
)

LOGIT = "logit"
KLDRL = "kldrl"


def _weighted_softmax(z: np.ndarray, layout: PopulationLayout) -> np.ndarray:
    z = z - layout.expand(layout.block_max(z))
    e = np.exp(z)
    return e / layout.expand(layout.block_sum(e))


def logit_choice(r, eta: float, layout=None) -> np.ndarray:
    """Blockwise softmax of r / eta."""
    if not eta > 0:
        raise ValueError("eta must be positive")
    r = np.asarray(r, dtype=float)
    layout = PopulationLayout((r.size,)) if layout is None else as_layout(layout)
    return _weighted_softmax(r / eta, layout)


def kldrl_choice(theta, r, eta: float, layout=None) -> np.ndarray:
    """Maximizer of z^T r - eta * KL(z || theta) over each simplex block."""
    if not eta > 0:
        raise ValueError("eta must be positive")
    theta = np.asarray(theta, dtype=float)
    r = np.asarray(r, dtype=float)
    if np.any(theta <= 0):
        raise DomainError("theta must be interior")
    layout = PopulationLayout((r.size,)) if layout is None else as_layout(layout)
    return _weighted_softmax(np.log(theta) + r / eta, layout)


@dataclass(frozen=True, eq=False)
class Protocol:
    """Per-population revision rules sharing one weight ``eta``.

    ``theta`` is stored for every coordinate; entries of logit populations
    are kept uniform and ignored by the choice map.
    """

    layout: PopulationLayout
    eta: float
    kinds: tuple[str, ...]
    theta: np.ndarray

    def __post_init__(self):
        layout = as_layout(self.layout)
        object.__setattr__(self, "layout", layout)
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        kinds = tuple(self.kinds)
        if len(kinds) != layout.M or any(k not in (LOGIT, KLDRL) for k in kinds):
            raise ValueError(f"kinds must list '{LOGIT}' or '{KLDRL}' per population, got {kinds}")
        object.__setattr__(self, "kinds", kinds)
        theta = check_state(self.theta, layout, name="theta").copy()
        if np.any(theta <= 0):
            raise DomainError("theta must be interior")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        mask = layout.expand(np.array([k == KLDRL for k in kinds]))
        log_theta = np.where(mask, np.log(theta), 0.0)
        log_theta.setflags(write=False)
        object.__setattr__(self, "_kld_mask", mask)
        object.__setattr__(self, "_log_theta", log_theta)

    @classmethod
    def logit(cls, layout, eta: float) -> "Protocol":
        layout = as_layout(layout)
        return cls(layout, eta, (LOGIT,) * layout.M, layout.uniform_state())

    @classmethod
    def kldrl(cls, layout, eta: float, theta=None) -> "Protocol":
        layout = as_layout(layout)
        theta = layout.uniform_state() if theta is None else theta
        return cls(layout, eta, (KLDRL,) * layout.M, theta)

    @classmethod
    def mixed(cls, layout, eta: float, kinds: Sequence[str], theta=None) -> "Protocol":
        layout = as_layout(layout)
        theta = layout.uniform_state() if theta is None else theta
        return cls(layout, eta, tuple(kinds), theta)

    @property
    def kldrl_populations(self) -> tuple[int, ...]:
        return tuple(k for k, kind in enumerate(self.kinds) if kind == KLDRL)

    @property
    def kldrl_mask(self) -> np.ndarray:
        return self._kld_mask

    @property
    def label(self) -> str:
        kinds = set(self.kinds)
        return kinds.pop() if len(kinds) == 1 else "mixed"

    def with_theta(self, theta: np.ndarray) -> "Protocol":
        """New snapshot with updated weights on the KLD-RL populations."""
        theta = np.where(self._kld_mask, theta, self.theta)
        return Protocol(self.layout, self.eta, self.kinds, theta)

    def choice(self, p: np.ndarray) -> np.ndarray:
        return _weighted_softmax(self._log_theta + p / self.eta, self.layout)


def edm_vector_field(protocol: Protocol, x: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Mean dynamic of a target-independent protocol: choice(p) - x."""
    return protocol.choice(p) - x


# Revision matrix callback: (population k, z^k, r^k) -> n^k x n^k row-stochastic
RevisionFn = Callable[[int, np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class GenericProtocol:
    layout: PopulationLayout
    revision: RevisionFn
    atol: float = 1e-12

    def matrices(self, x: np.ndarray, p: np.ndarray) -> list[np.ndarray]:
        out = []
        for k, sl in enumerate(self.layout.slices):
            T = np.asarray(self.revision(k, x[sl], p[sl]), dtype=float)
            c = sl.stop - sl.start
            if T.shape != (c, c):
                raise ValueError(f"revision matrix for population {k} has shape {T.shape}")
            if np.any(T < -self.atol) or np.any(T > 1 + self.atol):
                raise ValueError("revision probabilities must lie in [0, 1]")
            if np.any(np.abs(T.sum(axis=1) - 1.0) > 1e-10):
                raise ValueError("revision matrix rows must sum to 1")
            out.append(T)
        return out


def generic_edm_field(gp: GenericProtocol, x, p) -> np.ndarray:
    """xdot_i = sum_j x_j T_ji - x_i sum_j T_ij, per population."""
    x = gp.layout.check(x, "state")
    p = gp.layout.check(p, "payoff")
    out = np.empty(gp.layout.n)
    for sl, T in zip(gp.layout.slices, gp.matrices(x, p)):
        z = x[sl]
        out[sl] = T.T @ z - z * T.sum(axis=1)
    return out


def target_independent(choice_fn: Callable[[int, np.ndarray], np.ndarray]) -> RevisionFn:
    """Wrap a payoff-only choice rule as a revision matrix with identical rows."""

    def revision(k, z, r):
        c = np.asarray(choice_fn(k, r), dtype=float)
        return np.tile(c, (z.size, 1))

    return revision


def imitative_logit(layout, eta: float) -> GenericProtocol:
    """KLD-RL with theta equal to the current population state."""
    layout = as_layout(layout)

    def revision(k, z, r):
        w = np.log(np.maximum(z, 1e-300)) + r / eta
        w = np.exp(w - w.max())
        return np.tile(w / w.sum(), (z.size, 1))

    return GenericProtocol(layout, revision)


def storage_function(theta, eta: float, z, r, layout) -> float:
    """Informative storage of the KLD-RL dynamic.

    eta * sum_k log(sum_s theta_s exp(r_s / eta)) - z^T r + eta * KL(z || theta);
    nonnegative and zero exactly at z = kldrl_choice(theta, r, eta).
    """
    layout = as_layout(layout)
    theta = layout.check(theta, "theta")
    z = layout.check(z, "z")
    r = layout.check(r, "payoff")
    if np.any(z <= 0) or np.any(theta <= 0):
        raise DomainError("storage function needs interior z and theta")
    a = r / eta
    m = layout.block_max(a)
    lse = m + np.log(layout.block_sum(theta * np.exp(a - layout.expand(m))))
    return float(eta * lse.sum() - z @ r + eta * kl_divergence(z, theta))


def regularized_objective(z, r, theta, eta: float) -> float:
    return float(np.dot(z, r) - eta * kl_divergence(z, theta))


def negative_entropy(z) -> float:
    z = np.asarray(z, dtype=float)
    pos = z > 0
    return float(np.sum(z[pos] * np.log(z[pos])))


def mixed_equilibrium_residual(game, eta: float, x) -> float:
    """Distance of ``x`` from the two-population mixed equilibrium.

    Population 1 should best-respond, population 2 should play the logit
    response: returns the best-response gap of block 1 plus the 2-norm gap
    between block 2 and its logit choice.
    """
    layout = game.layout
    if layout.M != 2:
        raise ValueError("mixed residual is defined for two-population societies")
    x = layout.check(x, "state")
    p = game(x)
    s1, s2 = layout.slices
    gap1 = max(0.0, float(p[s1].max() - x[s1] @ p[s1]))
    gap2 = float(np.linalg.norm(x[s2] - logit_choice(p[s2], eta)))
    return gap1 + gap2


def stationarity_gap(x, p, theta, eta: float, layout) -> float:
    """max_z (z - x)^T (p - eta * grad KL(x || theta)); see ``update.lhs_stationarity``."""
    layout = as_layout(layout)
    if np.any(np.asarray(x) <= 0):
        raise DomainError("stationarity gap needs an interior state")
    r = p - eta * np.log(x / theta)
    return max(0.0, linear_max(r, layout) - float(x @ r))
