import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dispersal.discrete import (DiscreteTraitSystem, discrete_residual, evolve_discrete,
                                nearest_neighbor_mutation, species_masses, steady_discrete)
from dispersal.errors import BlowUp, NonPositive
from dispersal.grid import SpatialField, SpatialGrid, habitat, integrate_spatial
from dispersal.logistic import solve_theta
from dispersal.solver import ModelConfig, solve_steady_state


@pytest.mark.parametrize("k", [1, 2, 5])
def test_mutation_matrix(k):
    M = nearest_neighbor_mutation(k)
    assert np.allclose(M.sum(axis=0), 0)
    assert np.allclose(M, M.T)
    if k > 1:
        assert M[0, 0] == -1 and M[-1, -1] == -1
        assert np.all(np.diag(M) < 0)


def test_system_validation(m):
    M = nearest_neighbor_mutation(2)
    with pytest.raises(ValueError):
        DiscreteTraitSystem([2.0, 0.5], M, 0.1, m)
    with pytest.raises(ValueError):
        DiscreteTraitSystem([0.5, 2.0], -M, 0.1, m)
    with pytest.raises(ValueError):
        DiscreteTraitSystem([0.5, 1.0, 2.0], np.diag([-1.0, -1.0, -1.0]), 0.1, m)
    with pytest.raises(ValueError):
        DiscreteTraitSystem([0.5, 2.0], M, -0.1, m)


def test_single_species_is_logistic(m):
    sys_ = DiscreteTraitSystem([0.8], nearest_neighbor_mutation(1), 0.3, m)
    out = evolve_discrete(sys_, [SpatialField.constant(m.grid, 0.2)], 200.0)
    assert np.abs(out[0].values - solve_theta(0.8, m).values).max() < 1e-8


def test_slow_diffuser_excludes_fast_one(m):
    theta_fast = solve_theta(2.0, m).values
    sys_ = DiscreteTraitSystem([0.5, 2.0], nearest_neighbor_mutation(2), 0.0, m)
    out = evolve_discrete(sys_, [0.01 * theta_fast, theta_fast], 1500.0)
    frac = species_masses(out)
    assert frac[1] / frac.sum() < 1e-3
    assert np.abs(out[0].values - solve_theta(0.5, m).values).max() < 1e-3


def test_mass_identity(m):
    sys_ = DiscreteTraitSystem([0.5, 1.0, 2.0], nearest_neighbor_mutation(3), 0.2, m)
    dt, masses, totals = 0.05, [], []

    def record(t, U):
        masses.append(U.sum() * m.grid.cell_volume)
        totals.append(U.sum(axis=0))

    u0 = [SpatialField.constant(m.grid, 0.3)] * 3
    evolve_discrete(sys_, u0, 2.0, dt, callback=record)
    # implicit diffusion and zero-column-sum mutation both conserve mass
    for i in range(1, len(masses)):
        S = totals[i - 1]
        rhs = np.sum(S * (m.values - S)) * m.grid.cell_volume
        assert (masses[i] - masses[i - 1]) / dt == pytest.approx(rhs, abs=1e-10)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.0, 0.5))
def test_positivity(seed, eps):
    grid = SpatialGrid((1.0,), (16,))
    m = habitat(grid, amplitude=1.5)
    rng = np.random.default_rng(seed)
    sys_ = DiscreteTraitSystem([0.3, 0.9, 1.7], nearest_neighbor_mutation(3), eps, m)
    out = evolve_discrete(sys_, [rng.uniform(0, 2, 16) for _ in range(3)], 20.0, 0.1)
    assert min(f.values.min() for f in out) >= 0


def test_errors(m):
    sys_ = DiscreteTraitSystem([0.5, 2.0], nearest_neighbor_mutation(2), 0.1, m)
    with pytest.raises(NonPositive):
        evolve_discrete(sys_, [np.zeros(m.grid.size)] * 2, 1.0)
    with pytest.raises(NonPositive):
        evolve_discrete(sys_, [-np.ones(m.grid.size), np.ones(m.grid.size)], 1.0)
    with pytest.raises(BlowUp):
        evolve_discrete(sys_, [np.full(m.grid.size, 2e8)] * 2, 1e-10, 1e-10)


def test_dominance_increases_as_mutation_vanishes(m):
    theta1 = solve_theta(0.5, m).values
    fracs, dists = [], []
    for eps in (0.1, 0.05, 0.02, 0.01):
        sys_ = DiscreteTraitSystem([0.5, 1.25, 2.0], nearest_neighbor_mutation(3), eps, m)
        out = steady_discrete(sys_)
        assert np.abs(discrete_residual(sys_, np.stack([f.values for f in out]))).max() < 1e-8
        assert min(f.values.min() for f in out) > 0
        masses = species_masses(out)
        fracs.append(masses[0] / masses.sum())
        target = [theta1, 0, 0]
        dists.append(max(np.abs(f.values - t).max() for f, t in zip(out, target)))
    assert np.all(np.diff(fracs) > 0)
    assert np.all(np.diff(dists) < 0)


def test_flat_habitat_equal_split(grid):
    one = habitat(grid, "one")
    sys_ = DiscreteTraitSystem([0.5, 1.0, 1.5, 2.0], nearest_neighbor_mutation(4), 0.3, one)
    out = steady_discrete(sys_)
    for f in out:
        assert np.abs(f.values - 0.25).max() < 1e-9


def test_matches_trait_discretized_continuum():
    grid = SpatialGrid((1.0,), (48,))
    cfg = ModelConfig(habitat(grid), epsilon=0.05, trait_cells=6)
    cont = solve_steady_state(cfg)
    sys_ = DiscreteTraitSystem.from_model(cfg)
    disc = steady_discrete(sys_)
    h = cfg.trait.spacing
    for i, f in enumerate(disc):
        assert np.abs(f.values - h * cont.u.values[:, i]).max() < 1e-8
    assert integrate_spatial(disc[0]) > integrate_spatial(disc[-1])
