"""Principal eigenpairs of ``-alpha * Lap + h`` with zero-flux boundaries.

The workhorse is shifted inverse iteration.  All operators here are
symmetric Z-matrices (non-positive off-diagonal), so for any positive vector
``x`` the Collatz-Wielandt quotient ``min_i (K x)_i / x_i`` is a rigorous
lower bound on the smallest eigenvalue.  The shift is kept just below that
bound, which keeps ``K - shift`` positive definite (CG applies) and makes
every iterate strictly positive.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NonConvergence, ZeroField
from .grid import (SpatialField, SpatialGrid, build_spatial_laplacian, dirichlet_energy,
                   integrate_spatial, require_same_grid)
from .logistic import LogisticSolution

MIN_MARGIN = 1e-6


@dataclass(frozen=True)
class EigenPair:
    eigenvalue: float
    phi: SpatialField
    residual_inf: float
    normalization: float
    alpha: float = float("nan")


@dataclass(frozen=True)
class SigmaCurve:
    alphas: np.ndarray
    sigma: np.ndarray
    derivative: np.ndarray
    sigma0: float
    sigma1: float


def inverse_iteration(K: sp.spmatrix, x0=None, tol: float = 1e-9, max_iter: int = 200,
                      solver: str = "cg", floor: float = 0.0):
    """Smallest eigenpair of a symmetric Z-matrix ``K``.

    Returns ``(value, vector, residual_inf)`` with ``vector`` positive and of
    unit Euclidean norm.  ``solver`` is ``"cg"`` or ``"direct"``; the latter
    refactorises whenever the shift moves and suits large 2-D operators with
    tiny spectral gaps.
    """
    K = sp.csr_matrix(K)
    n = K.shape[0]
    x = np.ones(n) if x0 is None else np.abs(np.asarray(x0, dtype=float)).reshape(-1)
    if not np.all(x > 0):
        x = x + 1e-3 * max(x.max(), 1.0)
    x /= np.linalg.norm(x)
    ident = sp.identity(n, format="csr")
    bound = -np.inf
    for it in range(1, max_iter + 1):
        kx = K @ x
        rho = float(x @ kx)
        res = kx - rho * x
        rinf = float(np.abs(res).max())
        scale = 1.0 + abs(rho)
        if rinf <= max(tol * scale, floor) and it > 1:
            return rho, x, rinf
        if np.all(x > 0):
            bound = max(bound, float(np.min(kx / x)))
        margin = max(rho - bound, MIN_MARGIN * scale)
        shifted = (K - (bound - margin) * ident).tocsc()
        if solver == "direct":
            y = spla.splu(shifted, permc_spec="MMD_AT_PLUS_A").solve(x)
        else:
            y, info = spla.cg(shifted, x, x0=x, rtol=1e-13, atol=0.0, maxiter=20 * n)
        if not np.all(np.isfinite(y)):
            raise NonConvergence("inverse iteration produced non-finite values")
        if y.sum() < 0:
            y = -y
        x = y / np.linalg.norm(y)
    raise NonConvergence(f"inverse iteration: residual {rinf:.3e} after {max_iter} iterations")


def schrodinger_matrix(alpha: float, h: SpatialField) -> sp.csr_matrix:
    lap = build_spatial_laplacian(h.grid).matrix
    return sp.csr_matrix(-alpha * lap + sp.diags(h.values))


def principal_eigenpair(alpha: float, h: SpatialField, grid: SpatialGrid | None = None,
                        normalization: float = 1.0, tol: float = 1e-9, x0=None) -> EigenPair:
    """Principal eigenpair of ``-alpha Lap phi + h phi = lambda phi``.

    The eigenfunction is positive and scaled so that ``int phi^2 = normalization``.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    grid = h.grid if grid is None else grid
    require_same_grid(grid, h.grid)
    K = schrodinger_matrix(alpha, h)
    # unit-vector residuals are smaller than normalised ones by this factor
    to_unit = np.sqrt(normalization / grid.cell_volume)
    stiff = alpha * sum(4.0 / dx**2 for dx in grid.spacing) + float(np.abs(h.values).max())
    floor = 64 * np.finfo(float).eps * stiff / np.sqrt(grid.size)
    lam, x, _ = inverse_iteration(K, x0=x0, tol=0.5 * tol / to_unit, floor=floor)
    if not np.all(x > 0):
        raise NonConvergence("principal eigenfunction is not one-signed")
    x *= np.sqrt(normalization / (x @ x * grid.cell_volume))
    rinf = float(np.abs(K @ x - lam * x).max())
    return EigenPair(float(lam), SpatialField(x, grid), rinf, float(normalization), float(alpha))


def eigen_derivative_alpha(pair: EigenPair, grid: SpatialGrid | None = None) -> float:
    """d lambda_1 / d alpha = int |grad phi|^2 / int phi^2 (exact for the discrete operator)."""
    if grid is not None:
        require_same_grid(grid, pair.phi.grid)
    phi = pair.phi
    return dirichlet_energy(phi) / integrate_spatial(phi.with_values(phi.values**2))


def rayleigh_quotient(alpha: float, h: SpatialField, phi: SpatialField) -> float:
    require_same_grid(h.grid, phi.grid)
    mass = integrate_spatial(phi.with_values(phi.values**2))
    if mass == 0.0:
        raise ZeroField("Rayleigh quotient of the zero function")
    potential = integrate_spatial(phi.with_values(h.values * phi.values**2))
    return (alpha * dirichlet_energy(phi) + potential) / mass


def sigma_star_curve(m: SpatialField, theta: LogisticSolution, alphas) -> SigmaCurve:
    """sigma*(alpha) for the potential ``theta - m`` with ``int psi^2 = int theta^2``.

    ``theta`` must be the logistic solution at the lowest trait; its ``alpha``
    is the expansion point for ``sigma0`` and ``sigma1``.
    """
    require_same_grid(m.grid, theta.grid)
    h = m.with_values(theta.values - m.values)
    norm = integrate_spatial(m.with_values(theta.values**2))
    alphas = np.asarray(alphas, dtype=float)
    sig = np.empty_like(alphas)
    der = np.empty_like(alphas)
    x0 = theta.values
    for i, a in enumerate(alphas):
        pair = principal_eigenpair(a, h, normalization=norm, x0=x0)
        sig[i] = pair.eigenvalue
        der[i] = eigen_derivative_alpha(pair)
        x0 = pair.phi.values
    base = principal_eigenpair(theta.alpha, h, normalization=norm, x0=theta.values)
    return SigmaCurve(alphas, sig, der, base.eigenvalue, eigen_derivative_alpha(base))
