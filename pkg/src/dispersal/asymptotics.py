"""Verification harness for the small-mutation limit.

Builds the predicted profile ``eps^(-2/3) theta(x) eta*((alpha - alpha_lo)/eps^(2/3))``,
runs epsilon sweeps of the steady solver and regresses the scaling laws
``-sigma_0 ~ (sigma1*)^(2/3) A0 eps^(2/3)`` and ``sup u ~ eps^(-2/3)``.
"""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .airy import A0, AiryProfile, build_eta_star
from .eigen import eigen_derivative_alpha, principal_eigenpair
from .errors import InsufficientData, InsufficientTail, InvalidA1
from .grid import SpatialField, StateField, TraitGrid, integrate_spatial, require_same_grid
from .logistic import LogisticSolution, solve_theta
from .solver import (ModelConfig, SteadyState, continuation_guess, log_gradient_norms,
                     self_consistency, solve_steady_state)

SWEEP_FORMAT = "sweep-v1"
CSV_COLUMNS = ("epsilon", "sigma0", "sigma1", "sup_u", "uhat_err", "profile_err", "beta_hat",
               "mass_frac")
MASS_LEVEL = 0.99
# 0.08 -> 0.01 is the default desk-scale sweep
MIN_SPAN = 8.0


@dataclass(frozen=True, eq=False)
class TheoryProfile:
    theta: LogisticSolution
    eta: AiryProfile
    sigma1_star: float

    def layer(self, trait: TraitGrid, epsilon: float) -> np.ndarray:
        """``theta(x) eta*(s)`` on the product grid (the limit of ``eps^(2/3) u``)."""
        s = (trait.nodes - trait.alpha_lo) / epsilon ** (2.0 / 3.0)
        return np.outer(self.theta.values, self.eta(s))

    def predict(self, trait: TraitGrid, epsilon: float) -> StateField:
        return StateField(self.layer(trait, epsilon) / epsilon ** (2.0 / 3.0), self.theta.grid, trait)


def build_theory_profile(m: SpatialField, config: ModelConfig) -> TheoryProfile:
    """theta at the lowest trait, sigma1* = d sigma*/d alpha there, and eta*."""
    theta = solve_theta(config.alpha_lo, m)
    h = m.with_values(theta.values - m.values)
    norm = integrate_spatial(m.with_values(theta.values**2))
    pair = principal_eigenpair(config.alpha_lo, h, normalization=norm, x0=theta.values)
    a1 = eigen_derivative_alpha(pair)
    if not a1 > 1e-12:
        raise InvalidA1(f"sigma1* = {a1:.3g}: no selection gradient, profile undefined")
    return TheoryProfile(theta, build_eta_star(a1), a1)


def _split(u, epsilon):
    if isinstance(u, SteadyState):
        return u.u, u.epsilon
    if epsilon is None:
        raise ValueError("epsilon is required when passing a bare StateField")
    return u, float(epsilon)


def profile_error(u, theory: TheoryProfile, relative: bool = False, epsilon=None) -> float:
    """sup over grid nodes of ``|eps^(2/3) u - theta eta*|``.

    With ``relative=True`` the result is divided by the nodal sup of ``theta eta*``.
    """
    state, eps = _split(u, epsilon)
    require_same_grid(state.space, theory.theta.grid)
    target = theory.layer(state.trait, eps)
    err = float(np.abs(eps ** (2.0 / 3.0) * state.values - target).max())
    return err / float(target.max()) if relative else err


def uhat_error(u, theta: LogisticSolution) -> float:
    state = u.u if isinstance(u, SteadyState) else u
    require_same_grid(state.space, theta.grid)
    uh = state.values.sum(axis=1) * state.trait.spacing
    return float(np.abs(uh - theta.values).max())


def tail_decay_fit(u, beta_window=(0.0, math.inf), epsilon=None, threshold=1e-12) -> float:
    """Least-squares decay rate of ``log max_x u`` in the layer variable s.

    Only nodes with ``s`` inside ``beta_window`` and envelope above
    ``threshold * sup u`` enter the fit.
    """
    state, eps = _split(u, epsilon)
    env = state.values.max(axis=0)
    s = (state.trait.nodes - state.trait.alpha_lo) / eps ** (2.0 / 3.0)
    lo, hi = beta_window
    mask = (s >= lo) & (s <= hi) & (env > threshold * env.max())
    if mask.sum() < 4:
        raise InsufficientTail(f"only {int(mask.sum())} resolved nodes in window {beta_window}")
    slope = np.polyfit(s[mask], np.log(env[mask]), 1)[0]
    return float(-slope)


def concentration_mass(u, K: float, epsilon=None) -> float:
    """Fraction of ``int int u`` carried by the band ``[alpha_lo, alpha_lo + K eps^(2/3)]``.

    Cells straddling the band edge contribute their overlapping fraction.
    """
    state, eps = _split(u, epsilon)
    if K <= 0:
        return 0.0
    trait = state.trait
    edge = trait.alpha_lo + K * eps ** (2.0 / 3.0)
    left = trait.edges[:-1]
    frac = np.clip((edge - left) / trait.spacing, 0.0, 1.0)
    column = state.values.sum(axis=0)
    return float(column @ frac / column.sum())


@dataclass
class SweepRecord:
    epsilon: float
    trait_cells: int
    sigma0: float
    sigma1: float
    sup_u: float
    uhat_err: float
    profile_err: float
    profile_rel_err: float
    beta_hat: float
    mass_frac: float
    v_gap: float
    h_oscillation: float
    log_grad_alpha: float
    log_grad_x: float
    rayleigh: float
    residual_inf: float
    iterations: int


@dataclass
class ScalingFits:
    sigma_slope: float
    sigma_slope_ci: tuple[float, float]
    supu_slope: float
    supu_slope_ci: tuple[float, float]
    ratio_smallest: float
    ratio_mean3: float
    target_ratio: float


@dataclass
class SweepReport:
    records: list[SweepRecord]
    sigma1_star: float
    a0: float
    mass_K: float
    config: dict = field(default_factory=dict)
    fits: ScalingFits | None = None
    notes: list[str] = field(default_factory=list)

    def column(self, name) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def to_dict(self) -> dict:
        return {
            "format": SWEEP_FORMAT,
            "sigma1_star": self.sigma1_star,
            "A0": A0,
            "a0": self.a0,
            "mass_K": self.mass_K,
            "config": self.config,
            "records": [asdict(r) for r in self.records],
            "fits": None if self.fits is None else asdict(self.fits),
            "notes": self.notes,
        }


def record_for(state: SteadyState, theory: TheoryProfile, K: float) -> SweepRecord:
    cfg = state.config
    m = cfg.m
    uh = state.u_hat.values
    h = m.with_values(uh - m.values)
    norm = integrate_spatial(m.with_values(theory.theta.values**2))
    pair = principal_eigenpair(cfg.alpha_lo, h, normalization=norm, x0=theory.theta.values)
    ga, gx = log_gradient_norms(state)
    try:
        beta = tail_decay_fit(state)
    except InsufficientTail:
        beta = float("nan")
    return SweepRecord(
        epsilon=state.epsilon,
        trait_cells=state.u.trait.cells,
        sigma0=pair.eigenvalue,
        sigma1=eigen_derivative_alpha(pair),
        sup_u=state.sup_u,
        uhat_err=uhat_error(state, theory.theta),
        profile_err=profile_error(state, theory),
        profile_rel_err=profile_error(state, theory, relative=True),
        beta_hat=beta,
        mass_frac=concentration_mass(state, K),
        v_gap=float(np.abs(state.v.values - cfg.alpha_lo * uh).max()),
        h_oscillation=float(np.ptp(h.values)),
        log_grad_alpha=ga,
        log_grad_x=gx,
        rayleigh=self_consistency(state),
        residual_inf=state.residual_inf,
        iterations=state.iterations,
    )


def scaling_fits(report: SweepReport) -> ScalingFits:
    """Log-log slopes over all points; limiting ratio from the smallest epsilons."""
    recs = report.records
    if len(recs) < 4:
        raise InsufficientData(f"need at least 4 epsilon values, got {len(recs)}")
    eps = report.column("epsilon")
    if eps.max() / eps.min() < MIN_SPAN:
        raise InsufficientData(f"epsilon values must span a factor >= {MIN_SPAN}")
    sig = report.column("sigma0")
    if np.any(sig >= 0):
        raise InsufficientData("sigma0 must be negative for a log fit")
    le = np.log(eps)
    s_fit = stats.linregress(le, np.log(-sig))
    u_fit = stats.linregress(le, np.log(report.column("sup_u")))
    q = stats.t.ppf(0.975, len(eps) - 2)
    ratios = -sig / eps ** (2.0 / 3.0)
    order = np.argsort(eps)
    target = report.sigma1_star ** (2.0 / 3.0) * A0
    return ScalingFits(
        sigma_slope=float(s_fit.slope),
        sigma_slope_ci=(float(s_fit.slope - q * s_fit.stderr), float(s_fit.slope + q * s_fit.stderr)),
        supu_slope=float(u_fit.slope),
        supu_slope_ci=(float(u_fit.slope - q * u_fit.stderr), float(u_fit.slope + q * u_fit.stderr)),
        ratio_smallest=float(ratios[order[0]]),
        ratio_mean3=float(ratios[order[:3]].mean()),
        target_ratio=float(target),
    )


def _solve_one(args):
    config, guess = args
    return solve_steady_state(config, initial=guess)


def run_sweep(m: SpatialField, epsilons, threads: int = 1, keep_states: bool = False,
              **config_kwargs):
    """Solve at each epsilon (largest first) and assemble a :class:`SweepReport`.

    With ``threads == 1`` each solve is seeded by rescaling the previous one;
    otherwise solves run in a process pool from the layer ansatz.  Results are
    deterministic for a fixed thread count.  With ``keep_states`` the steady
    states are returned alongside the report.
    """
    epsilons = sorted({float(e) for e in epsilons}, reverse=True)
    configs = [ModelConfig(m, epsilon=e, **config_kwargs) for e in epsilons]
    theory = build_theory_profile(m, configs[0])
    K = theory.eta.quantile(MASS_LEVEL)
    states = []
    if threads <= 1:
        prev = None
        for cfg in configs:
            guess = None if prev is None else continuation_guess(prev, cfg)
            prev = solve_steady_state(cfg, initial=guess)
            states.append(prev)
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            states = list(pool.map(_solve_one, [(c, None) for c in configs]))
    report = SweepReport(
        records=[record_for(s, theory, K) for s in states],
        sigma1_star=theory.sigma1_star,
        a0=theory.eta.a0,
        mass_K=K,
        config={k: v for k, v in configs[0].as_dict().items() if k != "epsilon"} | {"epsilons": epsilons},
        notes=["tail decay is fitted with a single beta per run, not swept over beta"],
    )
    if len(states) >= 4:
        try:
            report.fits = scaling_fits(report)
        except InsufficientData as exc:
            report.notes.append(f"scaling fits skipped: {exc}")
    return (report, states) if keep_states else report


def monotone_with_slack(values, allowed_inversions: int = 1) -> bool:
    """Non-increasing apart from at most ``allowed_inversions`` upticks."""
    diffs = np.diff(np.asarray(values, dtype=float))
    return int(np.sum(diffs > 0)) <= allowed_inversions


def sweep_checks(report: SweepReport, eigen_tol: float = 1e-9) -> dict[str, tuple[bool, float]]:
    """Sweep-level properties; maps a name to ``(passed, measured value)``."""
    sig0 = report.column("sigma0")
    s1err = np.abs(report.column("sigma1") - report.sigma1_star)
    osc = report.column("h_oscillation")
    eps = report.column("epsilon")
    lg = report.column("log_grad_alpha") + report.column("log_grad_x")
    return {
        "sigma0_nonpositive": (bool(sig0.max() <= eigen_tol), float(sig0.max())),
        "sigma1_converges": (monotone_with_slack(s1err, 0), float(s1err[-1])),
        "h_nonconstant": (bool(osc.min() > 1e-3), float(osc.min())),
        "profile_monotone": (monotone_with_slack(report.column("profile_err")),
                             float(report.column("profile_err")[-1])),
        "uhat_monotone": (monotone_with_slack(report.column("uhat_err")),
                          float(report.column("uhat_err")[-1])),
        "eps_supu_bounded": (True, float((eps * report.column("sup_u")).max())),
        "log_gradient_constant": (bool(np.all(np.isfinite(lg))), float(lg.max())),
    }


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def write_sweep_csv(report: SweepReport, path, config_hash: str = "", extra_columns=()) -> None:
    cols = list(CSV_COLUMNS) + list(extra_columns)
    with open(path, "w", newline="") as fh:
        fh.write(f"# format={SWEEP_FORMAT} config_sha256={config_hash}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in report.records:
            w.writerow([_fmt(getattr(r, c)) for c in cols])


def write_sweep_json(report: SweepReport, path, config_hash: str = "") -> None:
    doc = report.to_dict()
    doc["config_sha256"] = config_hash
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=_json_default)


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"cannot serialise {type(obj).__name__}")
