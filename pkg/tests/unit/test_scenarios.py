"""Tests for initial data builders, certification and datum files."""

import numpy as np
import pytest

from src.core.exceptions import ConfigValidationError, ContractViolationError
from src.simulation.analysis import symmetric_pair_checks, trace_gap
from src.simulation.dynamics import SystemState
from src.simulation.integrator import integrate
from src.simulation.scenarios import (
    ScenarioParams,
    certified_random_datum,
    certify_datum,
    constant_history,
    linear_history,
    load_datum,
    random_lipschitz_history,
    read_header,
    save_datum,
    symmetric_pair_datum,
    symmetric_pair_history,
    symmetric_pair_scalar,
)


PARAMS = ScenarioParams(c=1.0, s=0.5)


class TestParams:
    @pytest.mark.parametrize("s", [-0.1, 1.0, 2.0])
    def test_rejects_bad_speed(self, s):
        with pytest.raises(ContractViolationError):
            ScenarioParams(c=1.0, s=s)

    def test_window(self):
        assert PARAMS.window(3.0) == pytest.approx(6.0)


class TestBuilders:
    def test_constant_history(self):
        datum = constant_history([0.0, 1.0], PARAMS)
        assert datum.S0 == pytest.approx(2.0)
        assert datum.n_agents == 2
        assert datum.dim == 1
        assert datum.max_speed() == 0.0
        assert datum.trajectories[1].eval_at(-1.5) == pytest.approx([1.0])

    def test_constant_consensus_datum(self):
        datum = constant_history([[0.2, 0.2]] * 3, PARAMS)
        assert datum.S0 == 0.0
        assert datum.d0 == 0.0

    def test_linear_history(self):
        datum = linear_history([[0.0], [2.0]], [[0.5], [-0.25]], PARAMS)
        assert datum.S0 == pytest.approx(4.0)
        assert datum.trajectories[0].eval_at(-4.0) == pytest.approx([-2.0])
        assert datum.max_speed() == pytest.approx(0.5)
        assert datum.R0 == pytest.approx(3.0)

    def test_linear_history_too_fast(self):
        with pytest.raises(ContractViolationError) as exc:
            linear_history([0.0, 1.0], [0.0, 0.6], PARAMS)
        assert exc.value.details["agent"] == 1

    def test_random_history_is_seeded(self):
        a = random_lipschitz_history(3, 6, 2, 1.0, PARAMS)
        b = random_lipschitz_history(3, 6, 2, 1.0, PARAMS)
        c = random_lipschitz_history(4, 6, 2, 1.0, PARAMS)
        assert np.array_equal(a.positions, b.positions)
        assert not np.array_equal(a.positions, c.positions)
        assert a.seed == 3

    def test_random_history_bounds(self):
        datum = random_lipschitz_history(11, 10, 3, 2.0, PARAMS)
        assert np.linalg.norm(datum.positions, axis=1).max() <= 2.0
        assert datum.max_speed() <= 0.9 * PARAMS.s + 1e-12
        assert datum.S0 == pytest.approx(datum.d0 / 0.5)
        assert all(traj.window_start == pytest.approx(-datum.S0) for traj in datum.trajectories)
        assert datum.R0 <= 2.0 + 0.9 * PARAMS.s * datum.S0 + 1e-12

    def test_copy_is_independent(self):
        datum = constant_history([0.0, 1.0], PARAMS)
        twin = datum.copy()
        twin.trajectories[0].append_segment(0.5, [0.1])
        assert len(datum.trajectories[0]) == 2

    def test_with_bound_rebuilds_window(self):
        datum = constant_history([0.0, 1.0], PARAMS)
        wider = datum.with_bound(ScenarioParams(c=1.0, s=0.75))
        assert wider.S0 == pytest.approx(4.0)
        assert wider.trajectories[0].lipschitz_bound == 0.75

    def test_symmetric_pair(self):
        path = symmetric_pair_history(1.0, 0.1, PARAMS)
        datum = symmetric_pair_datum(path, PARAMS)
        assert datum.S0 == pytest.approx(4.0)
        assert datum.positions[:, 0] == pytest.approx([1.0, -1.0])
        assert datum.trajectories[1].eval_at(-2.0) == pytest.approx([-0.8])

    def test_symmetric_pair_slope_too_steep(self):
        with pytest.raises(ContractViolationError):
            symmetric_pair_history(1.0, 0.6, PARAMS)


class TestCertification:
    def test_fixed_range(self, rational_psi):
        datum, cert = certify_datum(
            lambda params: constant_history([0.0, 1.0], params), rational_psi, 1.0, r_max=4.0
        )
        assert cert.r_max == 4.0
        assert datum.params.s == cert.s

    def test_fixed_range_too_small(self, rational_psi):
        with pytest.raises(ConfigValidationError) as exc:
            certify_datum(lambda params: constant_history([0.0, 3.0], params), rational_psi, 1.0, r_max=1.0)
        assert exc.value.details["field"] == "influence.r_max"

    def test_loop_covers_datum(self, rational_psi):
        datum, cert = certified_random_datum(rational_psi, 1.0, 5, 6, 2, 1.5)
        assert cert.r_max >= 2.0 * (datum.R0 + datum.d0) - 1e-12
        assert datum.max_speed() <= cert.s

    def test_loop_with_initial_positions(self, rational_psi):
        x0 = np.array([[0.0], [1.0]])
        datum, cert = certify_datum(
            lambda params: linear_history(x0, [[0.4 * params.s], [0.0]], params),
            rational_psi, 1.0, initial_positions=x0
        )
        assert cert.r_max >= 2.0 * (datum.R0 + datum.d0) - 1e-12


class TestSymmetricScalar:
    def test_checks_hold(self, certified):
        path = symmetric_pair_history(1.0, 0.1, ScenarioParams.from_certification(certified))
        trace = symmetric_pair_scalar(path, certified, 3.0, 0.01)
        assert symmetric_pair_checks(trace) == {"abs_nonincreasing": True, "sign_consistent": True}
        assert len(trace.diagnostics["x_delayed"]) == len(trace)
        assert trace.mean_drift() < 1e-12

    def test_matches_two_agent_run(self, certified):
        params = ScenarioParams.from_certification(certified)
        path = symmetric_pair_history(0.8, -0.2, params)
        scalar = symmetric_pair_scalar(path, certified, 1.0, 0.01)
        datum = symmetric_pair_datum(path, params)
        full = integrate(SystemState(datum.trajectories, 0.0, certified.c, certified), 1.0, dt=0.01)
        assert trace_gap(scalar, full) < 1e-9

    def test_rejects_picard(self, certified):
        path = symmetric_pair_history(1.0, 0.1, ScenarioParams.from_certification(certified))
        with pytest.raises(ContractViolationError):
            symmetric_pair_scalar(path, certified, 1.0, 0.01, scheme="picard")


class TestDatumFiles:
    def test_save_and_load(self, tmp_path, rational_psi):
        datum = random_lipschitz_history(2, 4, 2, 1.0, PARAMS)
        target = save_datum(datum, tmp_path / "nested" / "datum.csv", psi=rational_psi, header={"config_hash": "abc"})
        loaded, meta = load_datum(target)
        assert meta["config_hash"] == "abc"
        assert meta["seed"] == "2"
        assert loaded.S0 == datum.S0
        for a, b in zip(datum.trajectories, loaded.trajectories):
            assert np.array_equal(a.times, b.times)
            assert np.array_equal(a.points, b.points)

    @pytest.mark.parametrize("seed", [0, 5, 17, 123])
    def test_reload_is_exact(self, tmp_path, seed):
        datum = random_lipschitz_history(seed, 4, 3, 1.0, PARAMS)
        loaded, _ = load_datum(save_datum(datum, tmp_path / f"datum_{seed}.csv"))
        for a, b in zip(datum.trajectories, loaded.trajectories):
            assert np.array_equal(a.points, b.points)
            b.lipschitz_check()

    def test_read_header(self, tmp_path):
        target = save_datum(constant_history([0.0, 1.0], PARAMS), tmp_path / "datum.csv")
        meta = read_header(target)
        assert meta["N"] == "2"
        assert float(meta["c"]) == 1.0
        assert "psi" not in meta

    def test_missing_header(self, tmp_path):
        target = tmp_path / "bare.csv"
        target.write_text("agent_id,t,x_0\n0,0.0,1.0\n")
        with pytest.raises(ConfigValidationError):
            load_datum(target)
