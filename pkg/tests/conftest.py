import pytest

from dispersal.grid import SpatialGrid, habitat
from dispersal.logistic import solve_theta
from dispersal.solver import ModelConfig


@pytest.fixture(scope="session")
def grid():
    return SpatialGrid((1.0,), (96,))


@pytest.fixture(scope="session")
def m(grid):
    return habitat(grid, "cosine", amplitude=0.5)


@pytest.fixture(scope="session")
def theta_lo(m):
    return solve_theta(0.5, m)


@pytest.fixture(scope="session")
def small_grid():
    return SpatialGrid((1.0,), (32,))


@pytest.fixture(scope="session")
def small_config(small_grid):
    return ModelConfig(habitat(small_grid), epsilon=0.08, trait_cells=48)


DESK_EPSILONS = (0.08, 0.04, 0.02, 0.01)


@pytest.fixture(scope="session")
def desk_sweep(m):
    """The default-resolution sweep shared by the harness and acceptance tests."""
    from dispersal.asymptotics import run_sweep
    return run_sweep(m, DESK_EPSILONS, keep_states=True)
