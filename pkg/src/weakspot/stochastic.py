"""Uniform random load factors, load groups and tensor Gauss-Legendre grids."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionMismatch, GridTooLarge, InvalidOrder

GRID_CAP = 10**6


@dataclass(frozen=True)
class ParamBox:
    """Box ``[a_1, b_1] x ... x [a_d, b_d]`` carrying the uniform density."""

    intervals: tuple

    def __post_init__(self):
        iv = tuple((float(a), float(b)) for a, b in self.intervals)
        if not iv:
            raise ValueError("parameter box needs at least one interval")
        for a, b in iv:
            if not a < b:
                raise ValueError(f"interval [{a}, {b}] is empty")
        object.__setattr__(self, "intervals", iv)

    @property
    def dim(self) -> int:
        return len(self.intervals)

    @property
    def lower(self) -> np.ndarray:
        return np.array([a for a, _ in self.intervals])

    @property
    def upper(self) -> np.ndarray:
        return np.array([b for _, b in self.intervals])

    @property
    def density(self) -> float:
        return float(1.0 / np.prod(self.upper - self.lower))

    def contains(self, xi) -> bool:
        xi = np.asarray(xi, dtype=float)
        return bool(np.all(xi >= self.lower) and np.all(xi <= self.upper))

    def sample(self, rng: np.random.Generator, size=None) -> np.ndarray:
        shape = (self.dim,) if size is None else (size, self.dim)
        return rng.uniform(self.lower, self.upper, size=shape)


@dataclass(frozen=True)
class QuadratureGrid:
    """Nodes (one row per point) and weights with the density folded in."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float, ndmin=2)
        weights = np.array(self.weights, dtype=float)
        if weights.ndim != 1 or nodes.shape[0] != weights.size:
            raise DimensionMismatch("one weight per node required")
        if np.any(weights <= 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be positive and sum to 1")
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    def __len__(self):
        return len(self.weights)


def gauss_legendre_1d(n: int, interval=(-1.0, 1.0)):
    """Gauss-Legendre nodes/weights on ``interval``; weights sum to its length."""
    if int(n) != n or n < 1:
        raise InvalidOrder(f"quadrature order must be a positive integer, got {n}")
    a, b = map(float, interval)
    x, w = np.polynomial.legendre.leggauss(int(n))
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def tensor_grid(box: ParamBox, n_g: int, cap: int = GRID_CAP) -> QuadratureGrid:
    """Tensor-product rule over ``box`` with weights normalized to sum to one.

    Nodes are enumerated lexicographically, the last coordinate varying
    fastest.
    """
    if int(n_g) != n_g or n_g < 1:
        raise InvalidOrder(f"quadrature order must be a positive integer, got {n_g}")
    size = int(n_g) ** box.dim
    if size > cap:
        raise GridTooLarge(f"{n_g}^{box.dim} = {size} nodes exceeds the cap of {cap}")
    rules = []
    for a, b in box.intervals:
        x, w = gauss_legendre_1d(n_g, (a, b))
        rules.append((x, w / (b - a)))
    nodes = np.array([p for p in itertools.product(*[r[0] for r in rules])])
    weights = np.array([np.prod(p) for p in itertools.product(*[r[1] for r in rules])])
    weights = weights / weights.sum()
    return QuadratureGrid(nodes.reshape(size, box.dim), weights)


@dataclass(frozen=True)
class LoadGroups:
    """Assignment of loaded dofs to random load factors.

    ``group_of_dof[i]`` is the group of dof ``i`` or -1 for dofs scaled by
    no random variable.
    """

    group_of_dof: np.ndarray
    n_groups: int

    def __post_init__(self):
        g = np.asarray(self.group_of_dof, dtype=int)
        if g.size and (g.max() >= self.n_groups or g.min() < -1):
            raise ValueError("group index out of range")
        g.setflags(write=False)
        object.__setattr__(self, "group_of_dof", g)

    @classmethod
    def single(cls, f_base) -> "LoadGroups":
        f_base = np.asarray(f_base)
        return cls(np.where(f_base != 0, 0, -1), 1)

    @classmethod
    def uniform_slabs(cls, f_base, coords, direction: int, count: int) -> "LoadGroups":
        """Split loaded dofs into ``count`` equal-width slabs along one axis.

        ``coords[i]`` is the position of the node carrying dof ``i``.
        """
        f_base = np.asarray(f_base)
        coords = np.asarray(coords, dtype=float)
        loaded = f_base != 0
        groups = np.full(f_base.shape, -1, dtype=int)
        if not loaded.any():
            return cls(groups, count)
        x = coords[:, direction]
        lo, hi = x[loaded].min(), x[loaded].max()
        if hi > lo:
            g = np.floor((x - lo) / (hi - lo) * count).astype(int)
            g = np.clip(g, 0, count - 1)
        else:
            g = np.zeros_like(groups)
        groups[loaded] = g[loaded]
        return cls(groups, count)


def scale_loads(f_base, groups: LoadGroups, xi) -> np.ndarray:
    """Apply the diagonal scaling ``Q_xi``: dof ``i`` in group ``g`` gets ``xi[g] * f_i``."""
    f_base = np.asarray(f_base, dtype=float)
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if xi.shape != (groups.n_groups,):
        raise DimensionMismatch(f"xi has {xi.size} entries, expected {groups.n_groups}")
    if f_base.shape[0] != groups.group_of_dof.shape[0]:
        raise DimensionMismatch("load vector and group map differ in length")
    g = groups.group_of_dof
    factor = np.where(g >= 0, xi[np.maximum(g, 0)], 1.0)
    return factor * f_base


def expectation(values, grid: QuadratureGrid) -> float:
    values = np.asarray(values, dtype=float)
    if values.shape[0] != len(grid):
        raise DimensionMismatch(f"{values.shape[0]} values for a grid of {len(grid)} nodes")
    # explicit ordered sum keeps the reduction order fixed
    total = 0.0
    for w, v in zip(grid.weights, values):
        total += w * v
    return float(total)
