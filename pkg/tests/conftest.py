import dataclasses

import numpy as np
import pytest

from clockdp import InputBox, InputGrid, StateGrid, solve_discounted
from clockdp import systems
from clockdp.weights import Geometric


@pytest.fixture(scope="session")
def harmonic():
    return systems.harmonic_scalar()


@pytest.fixture(scope="session")
def pendulum():
    return systems.pendulum_tracking(theta_samples=10_000, theta_seed=1234)


@pytest.fixture(scope="session")
def integrator_small():
    """Coarse integrator instance for unit tests (fast to solve)."""
    prob = systems.nonholonomic_integrator(Geometric(0.8))
    return dataclasses.replace(
        prob,
        grid=StateGrid((-1.0, -1.0, -1.0), (1.0, 1.0, 1.0), (9, 9, 9)),
        input_grid=InputGrid(InputBox([-1.0, -1.0], [1.0, 1.0]), (5, 5)),
    )


@pytest.fixture(scope="session")
def integrator_small_solution(integrator_small):
    p = integrator_small
    return solve_discounted(p.dynamics, p.stage.ell1, 0.8, p.grid, p.input_grid, tol=1e-7)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260809)
