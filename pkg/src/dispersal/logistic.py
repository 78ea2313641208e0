"""Positive steady state of the spatial logistic equation.

Solves ``alpha * Lap(theta) + theta * (m - theta) = 0`` with zero-flux
boundary conditions.  Damped Newton is tried first; if it stalls, a
semi-implicit pseudo-time march (unconditionally positive) takes over and
Newton is restarted from where it lands.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NegativeSolution, NonConvergence
from .grid import SpatialField, SpatialGrid, build_spatial_laplacian, require_same_grid

log = logging.getLogger(__name__)

POSITIVE_FLOOR = 1e-3


@dataclass(frozen=True)
class LogisticSolution:
    theta: SpatialField
    alpha: float
    residual_inf: float
    iterations: int

    @property
    def values(self) -> np.ndarray:
        return self.theta.values

    @property
    def grid(self) -> SpatialGrid:
        return self.theta.grid


def roundoff_floor(coef: float, grid: SpatialGrid, scale: float) -> float:
    """Smallest residual sup-norm resolvable in double precision.

    The stencil subtracts O(scale) neighbours and divides by h**2, so the
    residual cannot be evaluated below ~ eps * coef * 4d/h**2 * scale.
    """
    stiff = sum(4.0 / h**2 for h in grid.spacing)
    return 64 * np.finfo(float).eps * (coef * stiff + 1.0) * max(scale, 1.0)


def _residual(lap, alpha, m, t):
    return alpha * (lap @ t) + t * (m - t)


def _pseudo_time(lap, alpha, m, t, dt, steps):
    mp, mn = np.maximum(m, 0.0), np.maximum(-m, 0.0)
    ident = sp.identity(t.size, format="csr")
    for _ in range(steps):
        # M-matrix on the left, non-negative right-hand side: stays positive
        lhs = (ident - dt * alpha * lap + sp.diags(dt * (t + mn))).tocsc()
        t = spla.spsolve(lhs, t * (1.0 + dt * mp))
    return t


def solve_theta(alpha: float, m: SpatialField, grid: SpatialGrid | None = None,
                tol: float = 1e-10, max_iter: int = 100, theta0=None) -> LogisticSolution:
    """Unique positive solution theta_alpha for habitat ``m``.

    ``theta0`` overrides the default start ``max(m, 1e-3)``.  The residual
    target is ``max(tol, roundoff floor)``; the floor only matters for very
    large ``alpha`` on fine grids.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    grid = m.grid if grid is None else grid
    require_same_grid(grid, m.grid)
    lap = build_spatial_laplacian(grid).matrix
    mv = m.values
    if theta0 is None:
        t = np.maximum(mv, POSITIVE_FLOOR)
    else:
        t = np.array(theta0, dtype=float).reshape(-1)
    target = max(tol, roundoff_floor(alpha, grid, float(np.max(np.abs(mv)))))

    res = _residual(lap, alpha, mv, t)
    rnorm = np.abs(res).max()
    restarted = False
    it = 0
    while rnorm > target:
        it += 1
        if it > max_iter:
            raise NonConvergence(f"logistic Newton: residual {rnorm:.3e} after {max_iter} iterations")
        jac = (alpha * lap + sp.diags(mv - 2.0 * t)).tocsc()
        step = spla.spsolve(jac, -res)
        subsolution = bool(res.min() >= 0)
        lam, accepted = 1.0, False
        while lam > 1e-6:
            trial = t + lam * step
            # a subsolution lies below theta, so shrinking it heads for the unstable root 0
            collapsing = subsolution and trial.max() < (1.0 - 1e-8) * t.max()
            if trial.min() > 0 and not collapsing:
                tres = _residual(lap, alpha, mv, trial)
                tn = np.abs(tres).max()
                if tn < (1.0 - 1e-4 * lam) * rnorm:
                    accepted = True
                    break
            lam *= 0.5
        if not accepted:
            if restarted:
                raise NegativeSolution("logistic Newton left the positive cone twice")
            log.debug("Newton stalled at residual %.3e; pseudo-time fallback", rnorm)
            t = _pseudo_time(lap, alpha, mv, t, dt=0.5, steps=400)
            if t.min() <= 0:
                raise NegativeSolution("pseudo-time march lost positivity")
            res = _residual(lap, alpha, mv, t)
            rnorm = np.abs(res).max()
            restarted = True
            continue
        t, res, rnorm = trial, tres, tn
    return LogisticSolution(SpatialField(t, grid), float(alpha), float(rnorm), it)
