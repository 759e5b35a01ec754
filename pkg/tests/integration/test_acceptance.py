"""
End-to-end property checks of the delayed engine.

Each property has a quick variant on a few seeds and a `slow` variant at
full scale (run with `pytest -m slow`).
"""

import numpy as np
import pytest

from src.simulation.analysis import (
    AuditContext,
    Auditor,
    decay_certificate,
    decay_envelope_holds,
    ordering_preserved,
    symmetric_pair_checks,
    trace_gap,
)
from src.simulation.delay_solver import solve_delay
from src.simulation.dynamics import SystemState
from src.simulation.history import Trajectory
from src.simulation.influence import InfluenceFunction, validate_influence
from src.simulation.integrator import integrate
from src.simulation.picard import contraction_window, picard_reference
from src.simulation.scenarios import (
    ScenarioParams,
    certified_random_datum,
    symmetric_pair_datum,
    symmetric_pair_history,
    symmetric_pair_scalar,
)


def audited_run(datum, cert, T, dt=None, certificate=None):
    state = SystemState(datum.copy().trajectories, 0.0, cert.c, cert)
    context = AuditContext.from_state(state, r0=datum.R0, certificate=certificate)
    auditor = Auditor(context, strict=True)
    trace = integrate(state, T, dt=dt, observers=[auditor], r0=datum.R0)
    return trace, auditor


def assert_universal_checks(auditor):
    """Speed limit, retarded distance and delay brackets hold on every audited step."""
    counts = auditor.counts()
    for check in ("speed_limit", "delay_bracket", "delay_residual", "radius_bound"):
        assert counts[check]["failed"] == 0, check
    assert counts.get("retarded_distance", {"failed": 0})["failed"] == 0
    assert auditor.failures == []


def psi_floor(psi, cert, datum):
    return decay_certificate(psi, cert.s, cert.c, datum.n_agents, datum.R0, range_kind="diameter").psi_lo


# ==================== Radius bound in several dimensions ====================


class TestRadiusBound:
    @pytest.mark.parametrize("seed,dim", [(0, 2), (1, 3), (2, 2)])
    def test_random_multid(self, seed, dim):
        psi = InfluenceFunction.rational(1.0, 1.0)
        datum, cert = certified_random_datum(psi, 2.0, seed, 5, dim, 1.0)
        trace, auditor = audited_run(datum, cert, 5.0, dt=0.02)
        assert max(trace.radius) <= datum.R0 + 1e-8
        assert_universal_checks(auditor)

    @pytest.mark.slow
    def test_random_multid_full(self):
        psi = InfluenceFunction.rational(1.0, 1.0)
        rng = np.random.default_rng(2024)
        for seed in range(50):
            n = int(rng.integers(2, 11))
            dim = int(rng.choice([2, 3]))
            datum, cert = certified_random_datum(psi, 2.0, seed, n, dim, 1.0)
            T = 50.0 / psi_floor(psi, cert, datum)
            trace, auditor = audited_run(datum, cert, T)
            assert max(trace.radius) <= datum.R0 + 1e-8
            assert_universal_checks(auditor)


# ==================== Consensus on the line ====================


class TestLineConsensus:
    @pytest.mark.parametrize("seed", [0, 1, 2, 3])
    def test_random_1d(self, seed):
        psi = InfluenceFunction.rational(1.0, 1.0)
        datum, cert = certified_random_datum(psi, 4.0, seed, 5, 1, 1.0)
        trace, auditor = audited_run(datum, cert, 10.0, dt=0.02)
        assert np.all(np.diff(trace.diameter) <= 1e-8)
        assert ordering_preserved(trace)
        assert trace.diameter[-1] < trace.diameter[0]
        counts = auditor.counts()
        for check in ("hull_containment", "retarded_ordering", "diameter_nonincreasing"):
            assert counts[check]["failed"] == 0, check
        assert_universal_checks(auditor)

    @pytest.mark.slow
    def test_random_1d_full(self):
        psi = InfluenceFunction.rational(1.0, 1.0)
        rng = np.random.default_rng(7)
        for seed in range(20):
            n = int(rng.integers(2, 11))
            datum, cert = certified_random_datum(psi, 4.0, seed, n, 1, 1.0)
            T = 10.0 * (n - 1) / psi_floor(psi, cert, datum)
            trace, auditor = audited_run(datum, cert, T)
            assert np.all(np.diff(trace.diameter) <= 1e-8)
            assert trace.diameter[-1] <= 0.05 * trace.diameter[0]
            assert ordering_preserved(trace)
            assert_universal_checks(auditor)


# ==================== Certified exponential decay ====================


class TestExponentialDecay:
    @staticmethod
    def certified_case(seed, n_agents=4, dim=2):
        psi = InfluenceFunction.rational(1.0, 0.0)
        datum, cert = certified_random_datum(psi, 30.0, seed, n_agents, dim, 0.5)
        assert 3.0 * cert.s <= cert.c
        certificate = decay_certificate(psi, cert.s, cert.c, n_agents, datum.R0, range_kind="diameter")
        assert certificate.condition_met
        return datum, cert, certificate

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_envelope_holds(self, seed):
        datum, cert, certificate = self.certified_case(seed)
        trace, auditor = audited_run(datum, cert, 5.0, dt=0.01, certificate=certificate)
        assert decay_envelope_holds(trace, certificate, slack=0.01)
        assert auditor.counts()["decay_envelope"]["failed"] == 0

    @pytest.mark.slow
    def test_envelope_holds_full(self):
        for seed in range(20):
            datum, cert, certificate = self.certified_case(seed, n_agents=2 + seed % 6, dim=2 + seed % 2)
            trace, _ = audited_run(datum, cert, 10.0, certificate=certificate)
            assert decay_envelope_holds(trace, certificate, slack=0.01)


# ==================== Picard reference agreement ====================


class TestPicardAgreement:
    @staticmethod
    def gaps(datum, cert, psi, fractions):
        t_star = contraction_window(
            datum.R0, datum.d0 / (cert.c - cert.s), cert.s, cert.c, psi.lipschitz_const, psi.psi_sup
        )
        horizon = 5.0 * t_star
        out = []
        for fraction in fractions:
            dt = fraction * t_star
            reference = picard_reference(datum, cert, horizon, dt, tol=1e-13)
            heun = integrate(SystemState(datum.copy().trajectories, 0.0, cert.c, cert), horizon, dt=dt)
            out.append(trace_gap(reference, heun))
        return out

    def test_symmetric_pair(self, certified):
        params = ScenarioParams.from_certification(certified)
        datum = symmetric_pair_datum(symmetric_pair_history(1.0, 0.1, params), params)
        gaps = self.gaps(datum, certified, certified.psi, (0.05, 0.025, 0.0125))
        assert gaps[0] <= 1e-5
        assert gaps[0] > gaps[1] > gaps[2]

    def test_four_agents_in_plane(self):
        psi = InfluenceFunction.rational(1.0, 1.0)
        datum, cert = certified_random_datum(psi, 2.0, 3, 4, 2, 1.0)
        gaps = self.gaps(datum, cert, psi, (0.05, 0.025, 0.0125))
        assert gaps[0] <= 1e-5
        assert gaps[0] > gaps[1] > gaps[2]

    @pytest.mark.slow
    def test_four_agents_in_plane_fine(self):
        psi = InfluenceFunction.rational(1.0, 1.0)
        datum, cert = certified_random_datum(psi, 2.0, 3, 4, 2, 1.0)
        gaps = self.gaps(datum, cert, psi, (1e-3, 5e-4, 2.5e-4))
        assert gaps[0] <= 1e-5
        assert gaps[0] >= gaps[1] >= gaps[2]


# ==================== Symmetric pair ====================


class TestSymmetricPair:
    def test_decay_to_consensus(self, rational_psi):
        cert = validate_influence(rational_psi, c=1.0, r_max=10.0)
        path = symmetric_pair_history(1.0, 0.1, ScenarioParams.from_certification(cert))
        T = 20.0 / rational_psi(2.0)
        trace = symmetric_pair_scalar(path, cert, T, 0.02)
        checks = symmetric_pair_checks(trace, slack=1e-8)
        assert checks["abs_nonincreasing"]
        assert checks["sign_consistent"]
        assert abs(trace.final_positions[0, 0]) <= 1e-3
        assert all(p[0, 0] >= -1e-12 and p[1, 0] <= 1e-12 for p in trace.positions)

    @pytest.mark.parametrize("x0,slope", [(2.0, -0.4), (0.5, 0.45), (-1.0, 0.2)])
    def test_various_histories(self, rational_psi, x0, slope):
        cert = validate_influence(rational_psi, c=1.0, r_max=20.0)
        path = symmetric_pair_history(x0, slope, ScenarioParams.from_certification(cert))
        trace = symmetric_pair_scalar(path, cert, 10.0, 0.02)
        assert symmetric_pair_checks(trace, slack=1e-8) == {"abs_nonincreasing": True, "sign_consistent": True}


# ==================== Delay solver at scale ====================


@pytest.mark.slow
def test_delay_solver_randomized():
    rng = np.random.default_rng(99)
    for k in range(1000):
        s = float(rng.choice([0.1, 0.5, 0.9]))
        dim = int(rng.integers(1, 4))
        z = rng.uniform(-3.0, 3.0, dim)
        length = (np.linalg.norm(z) + 2.0) / (1.0 - s) + 1.0
        n = int(np.ceil(length / 0.25))
        times = np.linspace(-length, 0.0, n + 1)
        slopes = rng.normal(size=(n, dim))
        slopes *= s * rng.uniform(0.0, 1.0, (n, 1)) / np.linalg.norm(slopes, axis=1, keepdims=True)
        points = np.vstack((np.zeros((1, dim)), np.cumsum(slopes * np.diff(times)[:, None], axis=0)))
        points += rng.uniform(-1.0, 1.0, dim) - points[-1]
        traj = Trajectory(times, points, s)
        res = solve_delay(z, traj, 0.0, 1.0)
        assert res.residual <= 1e-10, k
        assert res.lo <= res.tau <= res.hi, k
