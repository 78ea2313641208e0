"""Uniform cell-centred grids and Neumann finite-volume operators.

Nodes sit at cell centres.  The zero-flux closure mirrors the first interior
value into a ghost cell, which gives a symmetric matrix whose rows sum to zero.
Quadrature is the composite midpoint rule on the same cells, so the discrete
divergence theorem ``sum(w * L f) == 0`` holds exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import GridMismatch

MIN_CELLS = 8


def _neumann_second_difference(n: int, h: float) -> sp.csr_matrix:
    main = np.full(n, -2.0)
    main[0] = main[-1] = -1.0
    off = np.ones(n - 1)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr") / h**2


def _neumann_gradient(n: int, h: float) -> sp.csr_matrix:
    # one row per interior face; L = -G.T @ G
    return sp.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n), format="csr") / h


@dataclass(frozen=True)
class SpatialGrid:
    """Tensor grid on the box ``prod [0, extent_i]`` in one or two dimensions."""

    extents: tuple[float, ...] = (1.0,)
    cells: tuple[int, ...] = (96,)

    def __post_init__(self):
        object.__setattr__(self, "extents", tuple(float(e) for e in self.extents))
        object.__setattr__(self, "cells", tuple(int(n) for n in self.cells))
        if len(self.extents) not in (1, 2) or len(self.cells) != len(self.extents):
            raise ValueError("SpatialGrid supports dimension 1 or 2 with one cell count per axis")
        if any(n < MIN_CELLS for n in self.cells):
            raise ValueError(f"need at least {MIN_CELLS} cells per axis, got {self.cells}")
        if any(not np.isfinite(e) or e <= 0 for e in self.extents):
            raise ValueError("extents must be positive and finite")

    @property
    def dimension(self) -> int:
        return len(self.extents)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(e / n for e, n in zip(self.extents, self.cells))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def volume(self) -> float:
        return float(np.prod(self.extents))

    @property
    def size(self) -> int:
        return int(np.prod(self.cells))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.cells

    @cached_property
    def axes(self) -> tuple[np.ndarray, ...]:
        """Cell-centre coordinates along each axis."""
        return tuple((np.arange(n) + 0.5) * h for n, h in zip(self.cells, self.spacing))

    @cached_property
    def points(self) -> tuple[np.ndarray, ...]:
        """Flattened (C order) coordinates of every node, one array per axis."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return tuple(c.ravel() for c in mesh)

    @cached_property
    def gradient(self) -> sp.csr_matrix:
        """Face-difference operator; ``-gradient.T @ gradient`` is the Laplacian."""
        g = [_neumann_gradient(n, h) for n, h in zip(self.cells, self.spacing)]
        if self.dimension == 1:
            return g[0]
        n0, n1 = self.cells
        return sp.vstack([sp.kron(g[0], sp.identity(n1)), sp.kron(sp.identity(n0), g[1])]).tocsr()


@dataclass(frozen=True)
class TraitGrid:
    """Cell-centred grid on the trait interval ``[alpha_lo, alpha_hi]``."""

    alpha_lo: float
    alpha_hi: float
    cells: int

    def __post_init__(self):
        if not 0 < self.alpha_lo < self.alpha_hi:
            raise ValueError(f"need 0 < alpha_lo < alpha_hi, got {self.alpha_lo}, {self.alpha_hi}")
        if self.cells < 1:
            raise ValueError("trait grid needs at least one cell")

    @property
    def spacing(self) -> float:
        return (self.alpha_hi - self.alpha_lo) / self.cells

    @property
    def length(self) -> float:
        return self.alpha_hi - self.alpha_lo

    @cached_property
    def nodes(self) -> np.ndarray:
        return self.alpha_lo + (np.arange(self.cells) + 0.5) * self.spacing

    @property
    def edges(self) -> np.ndarray:
        return self.alpha_lo + np.arange(self.cells + 1) * self.spacing


@dataclass(frozen=True)
class LinearOperator:
    matrix: sp.csr_matrix
    symmetric: bool
    tag: str = ""

    def __matmul__(self, other):
        return self.matrix @ other

    @property
    def shape(self):
        return self.matrix.shape


@dataclass(frozen=True, eq=False)
class SpatialField:
    """Values at the nodes of a :class:`SpatialGrid` (flattened, C order)."""

    values: np.ndarray
    grid: SpatialGrid

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if v.size != self.grid.size:
            raise GridMismatch(f"field has {v.size} values, grid has {self.grid.size} nodes")
        if not np.all(np.isfinite(v)):
            raise ValueError("SpatialField values must be finite")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: SpatialGrid, func) -> SpatialField:
        return cls(np.broadcast_to(func(*grid.points), (grid.size,)).astype(float), grid)

    @classmethod
    def constant(cls, grid: SpatialGrid, c: float) -> SpatialField:
        return cls(np.full(grid.size, float(c)), grid)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def with_values(self, values) -> SpatialField:
        return SpatialField(values, self.grid)


@dataclass(frozen=True, eq=False)
class StateField:
    """Density ``u[i_x, i_alpha]`` on the product of a spatial and a trait grid."""

    values: np.ndarray
    space: SpatialGrid
    trait: TraitGrid

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        shape = (self.space.size, self.trait.cells)
        if v.size != shape[0] * shape[1]:
            raise GridMismatch(f"state has {v.size} values, grids need {shape}")
        v = v.reshape(shape)
        if not np.all(np.isfinite(v)):
            raise ValueError("StateField values must be finite")
        object.__setattr__(self, "values", v)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def with_values(self, values) -> StateField:
        return StateField(values, self.space, self.trait)


def build_spatial_laplacian(grid: SpatialGrid) -> LinearOperator:
    mats = [_neumann_second_difference(n, h) for n, h in zip(grid.cells, grid.spacing)]
    if grid.dimension == 1:
        lap = mats[0]
    else:
        n0, n1 = grid.cells
        lap = sp.kron(mats[0], sp.identity(n1)) + sp.kron(sp.identity(n0), mats[1])
    return LinearOperator(sp.csr_matrix(lap), True, f"neumann-laplacian-{grid.dimension}d")


def build_trait_laplacian(grid: TraitGrid) -> LinearOperator:
    if grid.cells == 1:
        return LinearOperator(sp.csr_matrix((1, 1)), True, "neumann-laplacian-trait")
    return LinearOperator(_neumann_second_difference(grid.cells, grid.spacing), True,
                          "neumann-laplacian-trait")


def integrate_trait(u: StateField) -> SpatialField:
    """Trait integral ``u_hat(x) = int u(x, alpha) d alpha`` (midpoint rule)."""
    return SpatialField(u.values.sum(axis=1) * u.trait.spacing, u.space)


def trait_moment(u: StateField) -> SpatialField:
    """``v(x) = int alpha u(x, alpha) d alpha``."""
    return SpatialField(u.values @ u.trait.nodes * u.trait.spacing, u.space)


def integrate_spatial(f: SpatialField) -> float:
    return float(f.values.sum() * f.grid.cell_volume)


def dirichlet_energy(f: SpatialField) -> float:
    """Discrete ``int |grad f|^2 dx``; equals ``-<f, L f>`` exactly."""
    g = f.grid.gradient @ f.values
    return float(g @ g * f.grid.cell_volume)


def require_same_grid(a: SpatialGrid, b: SpatialGrid):
    if a != b:
        raise GridMismatch(f"spatial grids differ: {a} vs {b}")


HABITAT_PRESETS = ("one", "cosine", "two-bump")


def habitat(grid: SpatialGrid, preset: str = "cosine", amplitude: float = 0.5,
            mean: float = 1.0, width: float = 0.1) -> SpatialField:
    """Named habitat-quality profiles ``m(x)``.

    ``cosine`` is ``mean + amplitude * prod cos(pi x_i / L_i)``; ``two-bump``
    places two Gaussian patches at 1/4 and 3/4 of the first axis.
    """
    xs = grid.points
    if preset == "one":
        vals = np.full(grid.size, mean)
    elif preset == "cosine":
        shape = np.ones(grid.size)
        for x, ext in zip(xs, grid.extents):
            shape = shape * np.cos(np.pi * x / ext)
        vals = mean + amplitude * shape
    elif preset == "two-bump":
        x0 = xs[0] / grid.extents[0]
        bumps = np.exp(-((x0 - 0.25) / width) ** 2) + np.exp(-((x0 - 0.75) / width) ** 2)
        vals = mean + amplitude * (bumps - bumps.mean())
    else:
        raise ValueError(f"unknown habitat preset {preset!r}; choose from {HABITAT_PRESETS}")
    return SpatialField(vals, grid)
