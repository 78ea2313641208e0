import math

import mpmath
import numpy as np
import pytest

from dispersal.airy import A0
from dispersal.asymptotics import (CSV_COLUMNS, SweepReport, build_theory_profile, concentration_mass,
                                   monotone_with_slack, profile_error, run_sweep, scaling_fits,
                                   sweep_checks, tail_decay_fit, uhat_error, write_sweep_csv,
                                   write_sweep_json)
from dispersal.errors import GridMismatch, InsufficientData, InsufficientTail, InvalidA1
from dispersal.grid import SpatialGrid, StateField, TraitGrid, habitat, integrate_trait
from dispersal.solver import ModelConfig, SteadyState


@pytest.fixture(scope="module")
def theory(m):
    return build_theory_profile(m, ModelConfig(m))


def test_theory_profile_components(theory, m):
    assert np.ptp(theory.theta.values) > 0
    assert theory.sigma1_star > 0
    assert theory.eta.a1 == theory.sigma1_star
    assert theory.eta.a0 == pytest.approx(theory.sigma1_star ** (2 / 3) * A0, rel=1e-15)


def test_theory_profile_integrates_to_theta(theory):
    errs = []
    for n in (200, 800, 3200):
        trait = TraitGrid(0.5, 2.0, n)
        u = theory.predict(trait, 0.01)
        errs.append(np.abs(integrate_trait(u).values - theory.theta.values).max())
    assert errs[-1] < 1e-4 and errs[0] > errs[1] > errs[2]


def test_doubled_habitat(grid, m):
    m2 = m.with_values(2 * m.values)
    t1 = build_theory_profile(m, ModelConfig(m))
    t2 = build_theory_profile(m2, ModelConfig(m2))
    assert t2.sigma1_star > 0 and t2.sigma1_star != pytest.approx(t1.sigma1_star)
    eta = t2.eta
    assert abs(eta.derivative(0.0)) < 1e-8 and eta.mass(1e4) == pytest.approx(1.0, abs=1e-8)


def test_flat_habitat_has_no_profile(grid):
    one = habitat(grid, "one")
    with pytest.raises(InvalidA1):
        build_theory_profile(one, ModelConfig(one, trivial=True))


def test_exact_profile_has_zero_error(theory):
    trait = TraitGrid(0.5, 2.0, 300)
    u = theory.predict(trait, 0.02)
    assert profile_error(u, theory, epsilon=0.02) == pytest.approx(0.0, abs=1e-12)
    # u_hat of the exact profile differs from theta only by trait quadrature and truncation
    assert uhat_error(u, theory.theta) < 1e-3
    with pytest.raises(GridMismatch):
        other = StateField(np.ones((40, 10)), SpatialGrid((1.0,), (40,)), TraitGrid(0.5, 2.0, 10))
        profile_error(other, theory, epsilon=0.02)


def test_tail_fit_against_known_profile():
    # fit the exact Airy profile by hand with mpmath values as the oracle
    grid = SpatialGrid((1.0,), (16,))
    m = habitat(grid)
    th = build_theory_profile(m, ModelConfig(m))
    eps = 0.02
    trait = TraitGrid(0.5, 2.0, 400)
    u = th.predict(trait, eps)
    window = (2.0, 6.0)
    beta = tail_decay_fit(u, window, epsilon=eps)
    s = (trait.nodes - 0.5) / eps ** (2 / 3)
    sel = (s >= window[0]) & (s <= window[1])
    c = th.sigma1_star ** (1 / 3)
    logeta = np.array([float(mpmath.log(mpmath.airyai(c * x - A0))) for x in s[sel]])
    oracle = -np.polyfit(s[sel], logeta, 1)[0]
    assert beta == pytest.approx(oracle, rel=1e-8)
    assert beta > 0


def test_tail_fit_needs_resolved_nodes(theory):
    trait = TraitGrid(0.5, 2.0, 300)
    u = theory.predict(trait, 0.02)
    with pytest.raises(InsufficientTail):
        tail_decay_fit(u, (1e3, 1e4), epsilon=0.02)


def test_concentration_mass_of_exact_profile(theory):
    eps = 0.01
    trait = TraitGrid(0.5, 2.0, 4000)
    u = theory.predict(trait, eps)
    K = theory.eta.quantile(0.99)
    assert concentration_mass(u, K, epsilon=eps) == pytest.approx(0.99, abs=2e-3)
    assert concentration_mass(u, 0.0, epsilon=eps) == 0.0
    assert concentration_mass(u, 1e6, epsilon=eps) == pytest.approx(1.0)


def test_monotone_with_slack():
    assert monotone_with_slack([3, 2, 1])
    assert monotone_with_slack([3, 4, 1])
    assert not monotone_with_slack([3, 4, 1, 2])
    assert not monotone_with_slack([3, 4, 1], allowed_inversions=0)


def test_sweep_report_structure(desk_sweep):
    report, states = desk_sweep
    eps = report.column("epsilon")
    assert list(eps) == sorted(eps, reverse=True) and len(eps) == 4
    assert all(isinstance(s, SteadyState) for s in states)
    assert np.all(report.column("residual_inf") <= 1e-9 * (1 + report.column("sup_u")))
    assert report.fits is not None
    assert report.fits.target_ratio == pytest.approx(report.sigma1_star ** (2 / 3) * A0)


def test_sweep_checks_hold(desk_sweep):
    report, _ = desk_sweep
    checks = sweep_checks(report)
    assert all(p for p, _ in checks.values()), checks
    assert report.column("sigma0").max() <= 1e-9
    # v approaches alpha_lo * u_hat
    gap = report.column("v_gap")
    assert np.all(np.diff(gap) < 0)


def test_tail_rate_positive_and_stable_under_refinement(desk_sweep, m):
    report, _ = desk_sweep
    assert np.all(report.column("beta_hat") > 0)
    fine = run_sweep(m, [0.04], trait_factor=16.0, min_trait_cells=256)
    coarse = report.records[1]
    assert coarse.epsilon == 0.04
    assert fine.records[0].beta_hat == pytest.approx(coarse.beta_hat, rel=0.20)


def test_mass_fraction_grows_as_eps_shrinks(desk_sweep):
    report, _ = desk_sweep
    frac = report.column("mass_frac")
    assert np.all(np.diff(frac[1:]) > 0)


def test_scaling_fits_need_enough_data(desk_sweep):
    report, _ = desk_sweep
    short = SweepReport(report.records[:3], report.sigma1_star, report.a0, report.mass_K)
    with pytest.raises(InsufficientData):
        scaling_fits(short)
    narrow = SweepReport([report.records[i] for i in (0, 1, 2, 2)], report.sigma1_star, report.a0,
                         report.mass_K)
    with pytest.raises(InsufficientData):
        scaling_fits(narrow)


def test_outputs_are_versioned_and_deterministic(tmp_path, desk_sweep, m):
    report, _ = desk_sweep
    write_sweep_csv(report, tmp_path / "a.csv", "h1")
    lines = (tmp_path / "a.csv").read_text().splitlines()
    assert lines[0] == "# format=sweep-v1 config_sha256=h1"
    assert lines[1].split(",") == list(CSV_COLUMNS)
    assert len(lines) == 6
    again = run_sweep(m, [0.08, 0.04, 0.02, 0.01])
    write_sweep_csv(again, tmp_path / "b.csv", "h1")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    write_sweep_json(report, tmp_path / "a.json", "h1")
    import json
    doc = json.loads((tmp_path / "a.json").read_text())
    assert doc["format"] == "sweep-v1" and doc["config_sha256"] == "h1"
    assert len(doc["records"]) == 4 and math.isfinite(doc["fits"]["sigma_slope"])


def test_threaded_sweep_matches_sequential(m):
    seq = run_sweep(m, [0.08, 0.04])
    par = run_sweep(m, [0.08, 0.04], threads=2)
    assert np.allclose(seq.column("sigma0"), par.column("sigma0"), rtol=1e-6)
    assert np.allclose(seq.column("sup_u"), par.column("sup_u"), rtol=1e-6)
