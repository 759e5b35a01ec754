"""Tests for the delayed velocity field."""

import numpy as np
import pytest

from src.core.exceptions import ContractViolationError
from src.simulation.delay_solver import delay_table, delayed_positions
from src.simulation.dynamics import (
    SystemState,
    delayed_velocities,
    rhs,
    rhs_all,
    rhs_classical,
)
from src.simulation.history import Trajectory
from src.simulation.influence import validate_influence


class TestClassical:
    def test_two_agents(self, rational_psi):
        v = rhs_classical(np.array([[0.0], [1.0]]), rational_psi)
        assert v[:, 0] == pytest.approx([0.5, -0.5])

    def test_equal_positions(self, rational_psi):
        assert np.all(rhs_classical(np.full((4, 2), 0.3), rational_psi) == 0.0)

    def test_symmetric_middle_agent(self, rational_psi):
        v = rhs_classical(np.array([-1.0, 0.0, 1.0]), rational_psi)
        assert v[1, 0] == pytest.approx(0.0, abs=1e-15)

    def test_mean_is_conserved(self, rational_psi):
        rng = np.random.default_rng(1)
        v = rhs_classical(rng.normal(size=(6, 2)), rational_psi)
        assert np.abs(v.sum(axis=0)).max() < 1e-12

    def test_single_agent(self, rational_psi):
        with pytest.raises(ContractViolationError):
            rhs_classical(np.zeros((1, 1)), rational_psi)


class TestDelayed:
    def test_stationary_pair(self, make_state):
        state = make_state([0.0, 1.0])
        assert rhs_all(state)[:, 0] == pytest.approx([0.5, -0.5])

    def test_consensus_is_equilibrium(self, make_state):
        state = make_state([[0.2, -0.1]] * 3)
        assert np.all(rhs_all(state) == 0.0)

    def test_per_agent_rhs_matches_table(self, make_state):
        state = make_state(
            [[0.0, 0.0], [1.0, 0.5], [-0.5, 1.0], [0.3, -0.8]],
            velocities=[[0.2, 0.0], [0.0, -0.3], [0.1, 0.1], [-0.25, 0.2]]
        )
        table_v = rhs_all(state)
        looped = np.vstack(delayed_velocities(state))
        assert np.allclose(table_v, looped, atol=1e-12)

    def test_rhs_with_explicit_delays(self, make_state):
        state = make_state([0.0, 1.0, 3.0])
        v0 = rhs(state, 0, delayed_positions(state, 0))
        expected = (0.5 * 1.0 + 0.1 * 3.0) / 2.0
        assert v0 == pytest.approx([expected])

    def test_wrong_delay_count(self, make_state):
        state = make_state([0.0, 1.0, 3.0])
        with pytest.raises(ContractViolationError):
            rhs(state, 0, delayed_positions(state, 0)[:2])

    def test_speed_never_exceeds_bound(self, make_state, certified):
        rng = np.random.default_rng(7)
        x = rng.uniform(-3.0, 3.0, (6, 2))
        v = rng.normal(size=(6, 2))
        v *= 0.9 * certified.s / np.linalg.norm(v, axis=1, keepdims=True)
        state = make_state(x, velocities=v)
        speeds = np.linalg.norm(rhs_all(state, delay_table(state)), axis=1)
        assert speeds.max() <= certified.s

    def test_classical_limit(self, rational_psi):
        x = np.array([[0.0], [1.0], [2.5]])
        v = np.array([[0.3], [-0.2], [0.1]])
        errors = []
        for c in (5.0, 50.0, 500.0):
            cert = validate_influence(rational_psi, c=c, r_max=10.0)
            S0 = 5.0
            paths = [Trajectory([-S0, 0.0], [p - vi * S0, p], cert.s) for p, vi in zip(x, v)]
            state = SystemState(paths, 0.0, c, cert)
            errors.append(np.abs(rhs_all(state) - rhs_classical(x, rational_psi)).max())
        assert errors[1] < errors[0] / 5.0
        assert errors[2] < errors[1] / 5.0


class TestSystemState:
    def test_needs_two_agents(self, certified):
        with pytest.raises(ContractViolationError):
            SystemState([Trajectory([0.0], [0.0], certified.s)], 0.0, 1.0, certified)

    def test_frontiers_must_match(self, certified):
        paths = [Trajectory([-1.0, 0.0], [0.0, 0.0], certified.s), Trajectory([-1.0, 0.5], [1.0, 1.0], certified.s)]
        with pytest.raises(ContractViolationError):
            SystemState(paths, 0.0, 1.0, certified)

    def test_history_bound_above_certificate(self, certified):
        paths = [Trajectory([-1.0, 0.0], [0.0, 0.0], 0.9), Trajectory([-1.0, 0.0], [1.0, 1.0], 0.9)]
        with pytest.raises(ContractViolationError):
            SystemState(paths, 0.0, 1.0, certified)

    def test_staged_view_moves_along_slopes(self, make_state):
        state = make_state([0.0, 1.0])
        staged = state.staged(np.array([[0.1], [-0.1]]), 0.5)
        assert staged.t == pytest.approx(0.5)
        assert staged.positions[:, 0] == pytest.approx([0.05, 0.95])
