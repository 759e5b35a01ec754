"""Shared fixtures for the consensus engine tests."""

import numpy as np
import pytest

from src.core.logging import clear_run
from src.simulation.analysis import diameter
from src.simulation.dynamics import SystemState
from src.simulation.history import Trajectory
from src.simulation.influence import InfluenceFunction, validate_influence


@pytest.fixture(autouse=True)
def fresh_run_label():
    clear_run()
    yield
    clear_run()


@pytest.fixture
def rational_psi():
    """psi(r) = 1 / (1 + r^2); sup psi(r) r = 1/2 at r = 1."""
    return InfluenceFunction.rational(1.0, 1.0)


@pytest.fixture
def certified(rational_psi):
    return validate_influence(rational_psi, c=1.0, r_max=10.0)


@pytest.fixture
def make_state(certified):
    """
    Factory for states whose agents moved along straight lines before t = 0.

    Histories cover at least d0 / (c - s) plus one time unit.
    """
    def build(points, velocities=None, certification=None, window=None):
        cert = certification or certified
        x = np.asarray(points, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        v = np.zeros_like(x) if velocities is None else np.asarray(velocities, dtype=float).reshape(x.shape)
        S0 = window or diameter(x) / (cert.c - cert.s) + 1.0
        trajectories = [Trajectory([-S0, 0.0], [p - vi * S0, p], cert.s) for p, vi in zip(x, v)]
        return SystemState(trajectories, 0.0, cert.c, cert)

    return build


@pytest.fixture
def out_dir(tmp_path):
    return tmp_path / "runs"
