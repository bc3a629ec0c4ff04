"""Shared fixtures: the expensive profile solves run once per session."""

import numpy as np
import pytest

from lanslab import (
    PhysicalParams,
    solve_channel_rho_collocation,
    solve_channel_rho_shooting,
    solve_pipe_rho,
)


@pytest.fixture(scope="session")
def p01():
    return PhysicalParams(alpha=0.1, nu=1.0, beta=1.0)


@pytest.fixture(scope="session")
def channel_shoot(p01):
    profile, report = solve_channel_rho_shooting(p01, n=1025)
    return profile, report


@pytest.fixture(scope="session")
def channel_coll(p01):
    profile, report = solve_channel_rho_collocation(p01, tol=1e-8)
    return profile, report


@pytest.fixture(scope="session")
def channel_shoot_small(p01):
    # coarse sampling of the same trajectory, for the time-stepping tests
    profile, _ = solve_channel_rho_shooting(p01, n=257)
    return profile


@pytest.fixture(scope="session")
def pipe_sol(p01):
    profile, report = solve_pipe_rho(p01)
    return profile, report


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
