"""Time evolution and positive steady states of the mutation-selection model

    u_t = alpha Lap_x u + eps^2 u_aa + (m(x) - u_hat(x)) u,   u_hat = int u d alpha,

with zero-flux conditions in ``x`` and in ``alpha``.

Steady states come from Newton's method on the bordered system
``(u, u_hat)``, which keeps the Jacobian sparse (the trait integral becomes a
separate block instead of dense per-site couplings).  Evolution is IMEX
Euler: both diffusions implicit, reaction explicit.  Its fixed points are
exactly the discrete steady states for every ``dt``, so a long run doubles
as an independent check on Newton.
"""
from __future__ import annotations

import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import BlowUp, ConfigError, NonConvergence, NonExistence, NonPositive
from .grid import (SpatialField, SpatialGrid, StateField, TraitGrid, build_spatial_laplacian,
                   build_trait_laplacian, integrate_spatial, integrate_trait, trait_moment)

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "dispersal-v1"
BLOWUP = 1e8


def default_trait_cells(alpha_lo, alpha_hi, epsilon, factor=8.0, minimum=128):
    """Enough trait cells that the eps^(2/3) layer spans ``factor`` cells."""
    return max(minimum, int(math.ceil(factor * (alpha_hi - alpha_lo) / epsilon ** (2.0 / 3.0))))


@dataclass(frozen=True, eq=False)
class ModelConfig:
    """Model data and numerical controls.

    ``trivial=True`` admits a constant habitat; ``strict=False`` skips the
    ``int m > 0`` requirement so that non-existence can be exercised.
    """

    m: SpatialField
    alpha_lo: float = 0.5
    alpha_hi: float = 2.0
    epsilon: float = 0.04
    trait_cells: int | None = None
    trait_factor: float = 8.0
    min_trait_cells: int = 128
    tol: float = 1e-9
    max_newton: int = 40
    dt: float = 0.5
    fallback_time: float = 200.0
    trivial: bool = False
    strict: bool = True

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive", ("epsilon",))
        if not 0 < self.alpha_lo < self.alpha_hi:
            raise ConfigError("need 0 < alpha_lo < alpha_hi", ("alpha_lo",))
        mv = self.m.values
        if np.ptp(mv) == 0 and not self.trivial:
            raise ConfigError("habitat m is constant; pass trivial=True to allow it", ("m",))
        if self.strict and not integrate_spatial(self.m) > 0:
            raise ConfigError("habitat must satisfy int m dx > 0", ("m",))

    @property
    def space(self) -> SpatialGrid:
        return self.m.grid

    @cached_property
    def trait(self) -> TraitGrid:
        n = self.trait_cells or default_trait_cells(self.alpha_lo, self.alpha_hi, self.epsilon,
                                                    self.trait_factor, self.min_trait_cells)
        return TraitGrid(self.alpha_lo, self.alpha_hi, n)

    def replace(self, **changes) -> ModelConfig:
        fields = {k: getattr(self, k) for k in self.__dataclass_fields__}
        fields.update(changes)
        return ModelConfig(**fields)

    def as_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "m"}
        d["trait_cells"] = self.trait.cells
        d["space"] = {"extents": list(self.space.extents), "cells": list(self.space.cells)}
        return d


class Discretization:
    """Sparse operators on the product grid; unknowns ordered ``i_x * n_alpha + i_alpha``."""

    def __init__(self, config: ModelConfig):
        self.config = config
        space, trait = config.space, config.trait
        nx, na = space.size, trait.cells
        self.shape = (nx, na)
        lx = build_spatial_laplacian(space).matrix
        la = build_trait_laplacian(trait).matrix
        self.diffusion = sp.csr_matrix(sp.kron(lx, sp.diags(trait.nodes))
                                       + config.epsilon**2 * sp.kron(sp.identity(nx), la))
        self.integrate = sp.csr_matrix(sp.kron(sp.identity(nx), np.full((1, na), trait.spacing)))
        self.spread = sp.csr_matrix(sp.kron(sp.identity(nx), np.ones((na, 1))))
        self.m = np.repeat(config.m.values, na)
        self.size = nx * na

    def residual(self, u):
        return self.diffusion @ u + (self.m - self.spread @ (self.integrate @ u)) * u

    def selection_operator(self, u_hat):
        """``-A + (u_hat - m)``: the frozen-potential operator with eigenvalue 0 at steady state."""
        return sp.csr_matrix(-self.diffusion + sp.diags(self.spread @ u_hat - self.m))


def mmatrix_solver(matrix):
    """LU without pivoting under a symmetric ordering.

    For a non-singular symmetric M-matrix the factors are M-matrices too, so
    triangular solves with non-negative data involve no cancellation and
    return strictly positive results even far out in the tails.
    """
    return spla.splu(sp.csc_matrix(matrix), permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                     options={"SymmetricMode": True})


@dataclass(frozen=True, eq=False)
class SteadyState:
    u: StateField
    u_hat: SpatialField
    v: SpatialField
    residual_inf: float
    iterations: int
    epsilon: float
    config: ModelConfig | None = field(default=None, repr=False)

    @classmethod
    def from_state(cls, u: StateField, config: ModelConfig, residual_inf=None, iterations=0):
        disc = Discretization(config)
        flat = u.values.ravel()
        if residual_inf is None:
            residual_inf = float(np.abs(disc.residual(flat)).max())
        return cls(u, integrate_trait(u), trait_moment(u), float(residual_inf), int(iterations),
                   float(config.epsilon), config)

    @property
    def sup_u(self) -> float:
        return float(self.u.values.max())


def step_sizes(t_end: float, dt: float):
    """Yield ``dt`` repeatedly, then one shorter step that lands exactly on ``t_end``."""
    nsteps = int(math.floor(t_end / dt + 1e-9))
    yield from itertools.repeat(dt, nsteps)
    rest = t_end - nsteps * dt
    if rest > 1e-12 * max(dt, 1.0):
        yield rest


def evolve(config: ModelConfig, u0: StateField, t_end: float, dt: float | None = None,
           callback=None) -> StateField:
    """IMEX Euler from ``u0`` to ``t_end``.

    Positivity holds while ``dt * max(u_hat - m) < 1``; a violation raises
    :class:`NonPositive`.  ``callback(t, u)`` is called after every step.
    """
    dt = config.dt if dt is None else float(dt)
    disc = Discretization(config)
    u = np.asarray(u0.values, dtype=float).ravel().copy()
    if u.shape[0] != disc.size:
        raise ValueError("initial state does not match the configured grids")
    if u.min() < 0 or not u.any():
        raise NonPositive("initial density must be non-negative and not identically zero")
    ident = sp.identity(disc.size, format="csr")
    steps = step_sizes(t_end, dt)
    lus = {}
    t = 0.0
    for h in steps:
        if h not in lus:
            lus[h] = mmatrix_solver(ident - h * disc.diffusion)
        growth = 1.0 + h * (disc.m - disc.spread @ (disc.integrate @ u))
        if growth.min() <= 0:
            raise NonPositive(f"explicit reaction factor {growth.min():.3g} <= 0 at t={t:.4g}; reduce dt")
        u = lus[h].solve(u * growth)
        t += h
        top = u.max()
        if not np.isfinite(top) or top > BLOWUP:
            raise BlowUp(f"sup u = {top:.3g} at t={t:.4g}")
        if u.min() <= 0:
            raise NonPositive(f"density lost positivity at t={t:.4g}")
        if callback is not None:
            callback(t, StateField(u, config.space, config.trait))
    return StateField(u, config.space, config.trait)


def existence_mu1(config: ModelConfig, tol: float = 1e-10) -> float:
    """Principal eigenvalue of ``alpha Lap + eps^2 d_aa + m + mu = 0``.

    A positive steady state exists iff the returned value is negative.
    """
    disc = Discretization(config)
    K = -disc.diffusion - sp.diags(disc.m)
    mu, _, _ = inverse_iteration(K, tol=tol, solver="direct")
    return float(mu)


def layer_guess(config: ModelConfig) -> StateField:
    """Initial guess ``eps^(-2/3) theta(x) eta*(s)`` (flat when there is no selection)."""
    from .airy import build_eta_star
    from .eigen import eigen_derivative_alpha, principal_eigenpair
    from .logistic import solve_theta

    space, trait = config.space, config.trait
    if np.ptp(config.m.values) == 0:
        theta = np.maximum(config.m.values, 1e-3)
        return StateField(np.outer(theta, np.full(trait.cells, 1.0 / trait.length)), space, trait)
    theta = solve_theta(config.alpha_lo, config.m)
    h = config.m.with_values(theta.values - config.m.values)
    a1 = eigen_derivative_alpha(principal_eigenpair(config.alpha_lo, h, x0=theta.values))
    scale = config.epsilon ** (2.0 / 3.0)
    if a1 <= 1e-12:
        profile = np.full(trait.cells, 1.0 / trait.length)
    else:
        profile = build_eta_star(a1)((trait.nodes - trait.alpha_lo) / scale) / scale
        profile = np.maximum(profile, 1e-300)
    return StateField(np.outer(theta.values, profile), space, trait)


def continuation_guess(previous: SteadyState, config: ModelConfig) -> StateField:
    """Rescale a steady state computed at a larger epsilon onto ``config``'s grids.

    Uses the layer variable ``s = (alpha - alpha_lo) / eps^(2/3)``; log u is
    interpolated linearly and extrapolated with the last log-slope.
    """
    if previous.u.space != config.space:
        raise ValueError("continuation needs identical spatial grids")
    r = (previous.epsilon / config.epsilon) ** (2.0 / 3.0)
    old = previous.u.trait
    new = config.trait
    src = old.nodes
    dst = old.alpha_lo + (new.nodes - new.alpha_lo) * r
    logu = np.log(np.maximum(previous.u.values, 1e-300))
    out = np.empty((config.space.size, new.cells))
    beyond = dst > src[-1]
    for i, row in enumerate(logu):
        vals = np.interp(dst, src, row)
        if beyond.any() and src.size > 1:
            slope = (row[-1] - row[-2]) / (src[-1] - src[-2])
            vals[beyond] = row[-1] + slope * (dst[beyond] - src[-1])
        out[i] = vals
    return StateField(r * np.exp(np.maximum(out, -700.0)), config.space, new)


def _newton(disc: Discretization, u, tol, max_iter):
    nx = disc.shape[0]
    ident = sp.identity(nx, format="csr")
    res = disc.residual(u)
    rnorm = float(np.abs(res).max())
    for it in range(max_iter + 1):
        if rnorm <= tol * (1.0 + u.max()):
            return u, rnorm, it, True
        if it == max_iter:
            break
        uh = disc.integrate @ u
        jac = sp.bmat([[disc.diffusion + sp.diags(disc.m - disc.spread @ uh),
                        -sp.diags(u) @ disc.spread],
                       [-disc.integrate, ident]], format="csc")
        step = spla.splu(jac, permc_spec="MMD_AT_PLUS_A").solve(np.concatenate([-res, np.zeros(nx)]))
        du = step[:disc.size]
        if not np.all(np.isfinite(du)):
            break
        lam = 1.0
        while lam > 1.0 / 1024:
            trial = u + lam * du
            if (disc.integrate @ trial).min() > 0:
                tres = disc.residual(trial)
                tn = float(np.abs(tres).max())
                if tn < (1.0 - 1e-4 * lam) * rnorm:
                    break
            lam *= 0.5
        else:
            log.debug("Newton line search failed at residual %.3e", rnorm)
            break
        u, res, rnorm = trial, tres, tn
    return u, rnorm, it, False


def _positivity_polish(disc: Discretization, u, sweeps=2):
    """Inverse steps with the frozen-potential M-matrix; fixed point is the steady state."""
    for _ in range(sweeps):
        uh = disc.integrate @ u
        op = disc.selection_operator(uh)
        c = max(0.0, float((disc.m - disc.spread @ uh).max())) + 1.0
        u = mmatrix_solver(op + c * sp.identity(disc.size)).solve(c * np.maximum(u, 0.0))
    return u


def solve_steady_state(config: ModelConfig, initial: StateField | None = None,
                       check_existence: bool = True) -> SteadyState:
    """Positive steady state by damped Newton, with an IMEX fallback.

    Raises :class:`NonExistence` when ``mu_1 >= 0`` and
    :class:`NonConvergence` when neither Newton nor the fallback reaches
    ``residual <= tol * (1 + sup u)``.
    """
    if check_existence:
        mu1 = existence_mu1(config)
        if mu1 >= 0:
            raise NonExistence(f"mu_1 = {mu1:.6g} >= 0: no positive steady state")
    disc = Discretization(config)
    guess = layer_guess(config) if initial is None else initial
    if guess.space != config.space or guess.trait != config.trait:
        raise ValueError("initial guess does not match the configured grids")
    u = guess.values.ravel().astype(float)
    u, rnorm, its, ok = _newton(disc, u, config.tol, config.max_newton)
    if not ok:
        log.info("Newton failed (residual %.3e); marching for t=%g", rnorm, config.fallback_time)
        start = StateField(np.maximum(u, 0.0) if (disc.integrate @ np.maximum(u, 0)).min() > 0
                           else guess.values, config.space, config.trait)
        marched = evolve(config, start, config.fallback_time)
        u, rnorm, more, ok = _newton(disc, marched.values.ravel(), config.tol, config.max_newton)
        its += more
        if not ok:
            raise NonConvergence(f"steady state: residual {rnorm:.3e} after fallback")
    if u.min() <= 0:
        u = _positivity_polish(disc, u)
        rnorm = float(np.abs(disc.residual(u)).max())
        if u.min() <= 0 or rnorm > config.tol * (1.0 + u.max()):
            raise NonConvergence("could not recover a strictly positive steady state")
    state = StateField(u, config.space, config.trait)
    return SteadyState.from_state(state, config, rnorm, its)


def self_consistency(state: SteadyState) -> float:
    """Rayleigh quotient of u for ``-alpha Lap - eps^2 d_aa + (u_hat - m)``; zero at a steady state."""
    disc = Discretization(state.config)
    u = state.u.values.ravel()
    return float(u @ (disc.selection_operator(state.u_hat.values) @ u) / (u @ u))


def log_gradient_norms(state: SteadyState) -> tuple[float, float]:
    """(eps * max |u_alpha / u|, max |grad_x u / u|) from log-differences between neighbours."""
    logu = np.log(state.u.values)
    trait = state.u.trait
    da = np.abs(np.diff(logu, axis=1)).max() / trait.spacing if trait.cells > 1 else 0.0
    dx = np.abs(state.u.space.gradient @ logu).max()
    return float(state.epsilon * da), float(dx)


def steady_state_checks(state: SteadyState, slack: float = 1e-3) -> dict[str, tuple[bool, float]]:
    """Invariant suite; maps a name to ``(passed, measured value)``."""
    cfg = state.config
    m = cfg.m.values
    uh = state.u_hat.values
    vol = cfg.space.cell_volume
    lx = build_spatial_laplacian(cfg.space).matrix
    bal = float(np.sum(uh * (m - uh)) * vol)
    excess = float(np.sum(uh - m) * vol)
    lo = cfg.alpha_lo * uh - state.v.values
    hi = state.v.values - cfg.alpha_hi * uh
    bound = cfg.alpha_hi / cfg.alpha_lo * m.max() + slack
    v_res = float(np.abs(lx @ state.v.values + (m - uh) * uh).max())
    rq = self_consistency(state)
    tol = cfg.tol * (1.0 + state.sup_u)
    out = {
        "positive": (bool(state.u.values.min() > 0), float(state.u.values.min())),
        "residual": (state.residual_inf <= tol, state.residual_inf),
        "balance": (abs(bal) <= 1e-8, bal),
        "excess": (excess > 0, excess),
        "moment_bounds": (bool(max(lo.max(), hi.max()) <= 1e-12 * max(1.0, np.abs(state.v.values).max())),
                          float(max(lo.max(), hi.max()))),
        "uhat_bound": (bool(uh.max() <= bound), float(uh.max())),
        "moment_equation": (v_res <= 1e3 * tol, v_res),
        "rayleigh_zero": (abs(rq) <= 1e-6, rq),
    }
    if cfg.trivial and np.ptp(m) == 0:
        del out["excess"]
    return out


def save_checkpoint(state: SteadyState, path, config_hash: str = "") -> None:
    cfg = state.config
    doc = {
        "format": CHECKPOINT_FORMAT,
        "config_sha256": config_hash,
        "space": {"extents": list(cfg.space.extents), "cells": list(cfg.space.cells)},
        "trait": {"alpha_lo": cfg.alpha_lo, "alpha_hi": cfg.alpha_hi, "cells": cfg.trait.cells},
        "epsilon": cfg.epsilon,
        "m": cfg.m.values.tolist(),
        "u": state.u.values.tolist(),
        "residual_inf": state.residual_inf,
        "iterations": state.iterations,
        "controls": {"tol": cfg.tol, "trivial": cfg.trivial, "strict": cfg.strict},
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_checkpoint(path) -> SteadyState:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ConfigError(f"unsupported checkpoint format {doc.get('format')!r}", ("format",))
    space = SpatialGrid(tuple(doc["space"]["extents"]), tuple(doc["space"]["cells"]))
    tr = doc["trait"]
    ctl = doc.get("controls", {})
    cfg = ModelConfig(SpatialField(np.array(doc["m"]), space), tr["alpha_lo"], tr["alpha_hi"],
                      doc["epsilon"], trait_cells=tr["cells"], tol=ctl.get("tol", 1e-9),
                      trivial=ctl.get("trivial", False), strict=ctl.get("strict", True))
    u = StateField(np.array(doc["u"]), space, cfg.trait)
    return SteadyState.from_state(u, cfg, iterations=doc.get("iterations", 0))


from .eigen import inverse_iteration  # noqa: E402  (eigen imports logistic only)
