"""Geometry of a product of unit simplices.

A social state is stored as a flat float array of length ``n`` whose
consecutive blocks are the population states.  ``PopulationLayout`` records
the block sizes and provides the segment reductions every other module
relies on (block max, block sum, broadcasting a per-block value back).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

DEFAULT_EPS = 1e-9
MASS_TOL = 1e-12


class LayoutError(ValueError):
    """Vectors do not match the population layout."""


class DomainError(ValueError):
    """Argument lies outside the domain of the operation (e.g. on the boundary)."""


@dataclass(frozen=True)
class PopulationLayout:
    counts: tuple[int, ...]
    _starts: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        if len(counts) < 1:
            raise LayoutError("a society needs at least one population")
        if any(c < 2 for c in counts):
            raise LayoutError(f"every population needs >= 2 strategies, got {counts}")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "_starts", np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(np.intp))

    @classmethod
    def uniform(cls, n_per_pop: int, M: int) -> "PopulationLayout":
        return cls((n_per_pop,) * M)

    @property
    def M(self) -> int:
        return len(self.counts)

    @property
    def n(self) -> int:
        return sum(self.counts)

    @cached_property
    def slices(self) -> tuple[slice, ...]:
        return tuple(slice(int(s), int(s) + c) for s, c in zip(self._starts, self.counts))

    @cached_property
    def block_index(self) -> np.ndarray:
        """Population index of every coordinate."""
        return np.repeat(np.arange(self.M), self.counts)

    def check(self, v, name: str = "vector") -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape != (self.n,):
            raise LayoutError(f"{name} has shape {v.shape}, layout {self.counts} needs ({self.n},)")
        return v

    # segment reductions -------------------------------------------------
    def block_sum(self, v: np.ndarray) -> np.ndarray:
        return np.add.reduceat(v, self._starts)

    def block_max(self, v: np.ndarray) -> np.ndarray:
        return np.maximum.reduceat(v, self._starts)

    def expand(self, per_block: np.ndarray) -> np.ndarray:
        return np.repeat(per_block, self.counts)

    def block_norms(self, v: np.ndarray) -> np.ndarray:
        return np.sqrt(self.block_sum(v * v))

    def uniform_state(self) -> np.ndarray:
        return self.expand(1.0 / np.asarray(self.counts, dtype=float))

    def center(self, v: np.ndarray) -> np.ndarray:
        """Orthogonal projection onto the tangent space (per-block mean removal)."""
        return v - self.expand(self.block_sum(v) / np.asarray(self.counts))

    def tangent_projector(self) -> np.ndarray:
        P = np.zeros((self.n, self.n))
        for sl, c in zip(self.slices, self.counts):
            P[sl, sl] = np.eye(c) - 1.0 / c
        return P

    def vertices(self):
        """Iterate over all vertices of the product of simplices."""
        import itertools

        for choice in itertools.product(*(range(c) for c in self.counts)):
            z = np.zeros(self.n)
            for start, i in zip(self._starts, choice):
                z[start + i] = 1.0
            yield z


def as_layout(layout) -> PopulationLayout:
    if isinstance(layout, PopulationLayout):
        return layout
    return PopulationLayout(tuple(layout))


def check_state(x, layout: PopulationLayout, tol: float = 1e-9, name: str = "state") -> np.ndarray:
    """Validate that ``x`` lies in the product of unit simplices."""
    x = layout.check(x, name)
    if not np.all(np.isfinite(x)):
        raise DomainError(f"{name} has non-finite entries")
    if np.any(x < -tol):
        raise DomainError(f"{name} has negative entries (min {x.min():.3g})")
    masses = layout.block_sum(x)
    if np.any(np.abs(masses - 1.0) > tol):
        raise DomainError(f"{name} block sums {masses} are not 1")
    return x


def is_interior(x: np.ndarray) -> bool:
    return bool(np.all(np.asarray(x) > 0))


def random_state(layout: PopulationLayout, rng: np.random.Generator) -> np.ndarray:
    """Uniformly distributed interior state (flat Dirichlet per block)."""
    return np.concatenate([rng.dirichlet(np.ones(c)) for c in layout.counts])


def random_tangent(layout: PopulationLayout, rng: np.random.Generator) -> np.ndarray:
    return layout.center(rng.standard_normal(layout.n))


def kl_divergence(x, y) -> float:
    """Sum over populations of sum_i x_i ln(x_i / y_i).

    ``x`` may touch the boundary (0 ln 0 is taken as 0); ``y`` must be
    strictly positive.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise LayoutError(f"shape mismatch {x.shape} vs {y.shape}")
    if np.any(y <= 0):
        raise DomainError("second argument of the KL divergence must be interior")
    if np.any(x < 0):
        raise DomainError("first argument of the KL divergence must be nonnegative")
    pos = x > 0
    return float(np.sum(x[pos] * np.log(x[pos] / y[pos])))


def kl_gradient(x, y) -> np.ndarray:
    """Gradient of ``kl_divergence`` in its first argument: ln(x_i / y_i)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise LayoutError(f"shape mismatch {x.shape} vs {y.shape}")
    if np.any(x <= 0) or np.any(y <= 0):
        raise DomainError("KL gradient needs interior arguments")
    return np.log(x / y)


def linear_argmax(r, layout: PopulationLayout) -> tuple[np.ndarray, float]:
    """Maximize z^T r over the product of simplices.

    Returns the maximizing vertex (ties go to the lowest index in each
    block) and the optimal value.
    """
    r = layout.check(r, "payoff")
    z = np.zeros(layout.n)
    value = 0.0
    for sl in layout.slices:
        i = int(np.argmax(r[sl]))
        z[sl.start + i] = 1.0
        value += float(r[sl.start + i])
    return z, value


def linear_max(r: np.ndarray, layout: PopulationLayout) -> float:
    """Value of ``linear_argmax`` without building the vertex."""
    return float(np.sum(layout.block_max(r)))


def interior_clamp(x, layout: PopulationLayout, eps: float = DEFAULT_EPS) -> np.ndarray:
    """Raise every entry to at least ``eps`` while keeping unit block masses.

    Blocks already satisfying the floor are returned untouched.  Otherwise
    the deficit is taken proportionally from the entries above the floor.
    """
    if not 0 < eps < 1.0 / max(layout.counts):
        raise DomainError(f"eps={eps} must lie in (0, 1/max block size)")
    x = layout.check(x).copy()
    for sl in layout.slices:
        b = x[sl]
        if np.all(b >= eps) and abs(b.sum() - 1.0) <= MASS_TOL:
            continue
        b = np.maximum(b, 0.0)
        b = b / b.sum()
        low = b < eps
        if np.any(low):
            free = 1.0 - eps * low.sum()
            high_mass = b[~low].sum()
            b = np.where(low, eps, b * (free / high_mass))
        x[sl] = b
    return x


def renormalize(x: np.ndarray, layout: PopulationLayout) -> np.ndarray:
    return x / layout.expand(layout.block_sum(x))


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of ``v`` onto the unit simplex (sort-based)."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    return np.maximum(v - css[rho] / (rho + 1), 0.0)


def project_state(v: np.ndarray, layout: PopulationLayout) -> np.ndarray:
    out = np.empty(layout.n)
    for sl in layout.slices:
        out[sl] = project_simplex(v[sl])
    return out


def states_from(values: Sequence[float], layout: PopulationLayout) -> np.ndarray:
    return check_state(np.asarray(values, dtype=float), layout)
