"""k competing species that differ only in their diffusion rate.

    d_t u_i = alpha_i Lap u_i + (m - sum_j u_j) u_i + eps^2 sum_j M_ij u_j

With ``eps = 0`` the slowest diffuser excludes the rest; small mutation
leaves it dominant while the others persist at low density.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

from .errors import BlowUp, NonConvergence, NonPositive
from .grid import SpatialField, build_spatial_laplacian, integrate_spatial
from .logistic import solve_theta
from .solver import BLOWUP, ModelConfig, mmatrix_solver, step_sizes

DISCRETE_FORMAT = "sweep-v1"


def nearest_neighbor_mutation(k: int) -> np.ndarray:
    """Tridiagonal mutation between adjacent traits, zero column sums (mass conserving)."""
    M = np.zeros((k, k))
    for i in range(k - 1):
        M[i, i + 1] = M[i + 1, i] = 1.0
    M -= np.diag(M.sum(axis=0))
    return M


@dataclass(frozen=True, eq=False)
class DiscreteTraitSystem:
    alphas: np.ndarray
    mutation: np.ndarray
    epsilon: float
    m: SpatialField

    def __post_init__(self):
        a = np.asarray(self.alphas, dtype=float)
        M = np.asarray(self.mutation, dtype=float)
        object.__setattr__(self, "alphas", a)
        object.__setattr__(self, "mutation", M)
        k = a.size
        if k < 1 or np.any(a <= 0) or np.any(np.diff(a) <= 0):
            raise ValueError("diffusivities must be positive and strictly increasing")
        if M.shape != (k, k):
            raise ValueError(f"mutation matrix must be {k}x{k}")
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")
        if k > 1:
            off = M - np.diag(np.diag(M))
            if np.any(np.diag(M) >= 0) or np.any(off < 0):
                raise ValueError("need M_ii < 0 and M_ij >= 0 for i != j")
            ncomp, _ = connected_components(sp.csr_matrix(off), directed=True, connection="strong")
            if ncomp != 1:
                raise ValueError("mutation matrix must be irreducible")

    @property
    def k(self) -> int:
        return self.alphas.size

    @property
    def grid(self):
        return self.m.grid

    @classmethod
    def from_model(cls, config: ModelConfig) -> DiscreteTraitSystem:
        """The k-species system that is algebraically identical to ``config``'s trait discretization.

        Species densities correspond to ``h_alpha * u(x, alpha_i)``.
        """
        trait = config.trait
        return cls(trait.nodes, nearest_neighbor_mutation(trait.cells),
                   config.epsilon / trait.spacing, config.m)


def _stack(fields):
    return np.stack([np.asarray(f.values if isinstance(f, SpatialField) else f, dtype=float)
                     for f in fields])


def discrete_residual(sys: DiscreteTraitSystem, U: np.ndarray) -> np.ndarray:
    lap = build_spatial_laplacian(sys.grid).matrix
    total = U.sum(axis=0)
    out = np.stack([a * (lap @ u) for a, u in zip(sys.alphas, U)])
    out += (sys.m.values - total) * U
    out += sys.epsilon**2 * (sys.mutation @ U)
    return out


def evolve_discrete(sys: DiscreteTraitSystem, u0, t_end: float, dt: float = 0.5,
                    callback=None) -> list[SpatialField]:
    """IMEX Euler: diffusion implicit per species, reaction and mutation explicit."""
    U = _stack(u0)
    if U.shape != (sys.k, sys.grid.size):
        raise ValueError("initial data must have one field per species")
    if U.min() < 0 or not U.any():
        raise NonPositive("initial densities must be non-negative and not all zero")
    lap = build_spatial_laplacian(sys.grid).matrix
    ident = sp.identity(sys.grid.size, format="csr")
    steps = step_sizes(t_end, dt)
    solvers = {}
    eps2M = sys.epsilon**2 * sys.mutation
    t = 0.0
    for h in steps:
        if h not in solvers:
            solvers[h] = [mmatrix_solver(ident - h * a * lap) for a in sys.alphas]
        growth = 1.0 + h * (sys.m.values - U.sum(axis=0))
        factor = growth + h * np.diag(eps2M)[:, None]
        if factor.min() <= 0:
            raise NonPositive(f"explicit factor {factor.min():.3g} <= 0 at t={t:.4g}; reduce dt")
        rhs = U * growth + h * (eps2M @ U)
        U = np.stack([s.solve(r) for s, r in zip(solvers[h], rhs)])
        t += h
        top = U.max()
        if not np.isfinite(top) or top > BLOWUP:
            raise BlowUp(f"sup u = {top:.3g} at t={t:.4g}")
        if U.min() < 0:
            raise NonPositive(f"density became negative at t={t:.4g}")
        if callback is not None:
            callback(t, U)
    return [SpatialField(u, sys.grid) for u in U]


def _jacobian(sys, U, lap):
    k, n = U.shape
    total = U.sum(axis=0)
    eps2M = sys.epsilon**2 * sys.mutation
    blocks = [[None] * k for _ in range(k)]
    for i in range(k):
        for j in range(k):
            diag = -U[i] + eps2M[i, j]
            if i == j:
                blocks[i][j] = sys.alphas[i] * lap + sp.diags(sys.m.values - total + diag)
            else:
                blocks[i][j] = sp.diags(diag)
    return sp.bmat(blocks, format="csc")


def steady_discrete(sys: DiscreteTraitSystem, tol: float = 1e-9, initial=None,
                    max_iter: int = 50, march_time: float = 300.0) -> list[SpatialField]:
    """Positive equilibrium by Newton's method, started from a short IMEX march.

    The default start marches from ``(theta_{alpha_1}, theta_{alpha_1}/k, ...)``
    for ``march_time`` before Newton takes over.  ``tol`` bounds the residual
    sup-norm relative to ``1 + sup u``.
    """
    if sys.epsilon <= 0 and sys.k > 1:
        raise ValueError("steady_discrete needs eps > 0 (otherwise the equilibria are not unique)")
    lap = build_spatial_laplacian(sys.grid).matrix
    if initial is None:
        theta = solve_theta(sys.alphas[0], sys.m).values
        start = [theta] + [theta / sys.k] * (sys.k - 1)
        U = _stack(evolve_discrete(sys, start, march_time))
    else:
        U = _stack(initial)
    res = discrete_residual(sys, U)
    rnorm = np.abs(res).max()
    converged = False
    for it in range(max_iter):
        within = rnorm <= tol * (1.0 + U.max())
        # at least one Newton step: the march can meet tol while weakly damped mutation modes lag
        if it > 0 and within:
            converged = True
            break
        step = spla.spsolve(_jacobian(sys, U, lap), -res.ravel()).reshape(U.shape)
        lam = 1.0
        while lam > 1.0 / 1024:
            trial = U + lam * step
            tres = discrete_residual(sys, trial)
            tn = np.abs(tres).max()
            if tn < (1.0 - 1e-4 * lam) * rnorm:
                break
            lam *= 0.5
        else:
            # no further decrease available (roundoff level)
            converged = within
            break
        U, res, rnorm = trial, tres, tn
    if converged:
        if U.min() < 0:
            raise NonConvergence("Newton converged to a state with negative densities")
        return [SpatialField(u, sys.grid) for u in U]
    raise NonConvergence(f"discrete steady state: residual {rnorm:.3e}")


def species_masses(fields) -> np.ndarray:
    return np.array([integrate_spatial(f) for f in fields])


def write_discrete_csv(rows, path, config_hash: str = "") -> None:
    """Rows of ``(epsilon, species, alpha, mass, mass_frac, sup_u)``."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# format={DISCRETE_FORMAT} config_sha256={config_hash}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epsilon", "species", "alpha", "mass", "mass_frac", "sup_u"])
        for r in rows:
            w.writerow([repr(float(r[0])), int(r[1])] + [repr(float(x)) for x in r[2:]])


def discrete_rows(sys: DiscreteTraitSystem, fields):
    masses = species_masses(fields)
    total = masses.sum()
    return [(sys.epsilon, i, a, mi, mi / total, float(f.values.max()))
            for i, (a, mi, f) in enumerate(zip(sys.alphas, masses, fields))]
