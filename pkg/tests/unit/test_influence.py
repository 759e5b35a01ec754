"""Tests for influence kernels and their speed-bound certification."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from src.core.exceptions import DomainError, InfluenceRejectedError
from src.simulation.influence import (
    InfluenceFunction,
    effective_speed_bound,
    eval_psi,
    psi_range,
    validate_influence,
)


class TestEvaluation:
    def test_rational_at_zero(self, rational_psi):
        assert eval_psi(rational_psi, 0.0) == 1.0

    def test_rational_at_one(self, rational_psi):
        assert eval_psi(rational_psi, 1.0) == pytest.approx(0.5)

    def test_tabulated_interpolates(self):
        psi = InfluenceFunction.tabulated([(0.0, 1.0), (2.0, 0.2)])
        assert psi(1.0) == pytest.approx(0.6)

    def test_tabulated_constant_past_last_node(self):
        psi = InfluenceFunction.tabulated([(0.0, 1.0), (2.0, 0.2)])
        assert psi(50.0) == pytest.approx(0.2)

    def test_gaussian_and_affine(self):
        assert InfluenceFunction.gaussian(2.0, 1.0)(1.0) == pytest.approx(2.0 * math.exp(-1.0))
        assert InfluenceFunction.affine_cutoff(1.0, 0.5)(3.0) == 0.0

    @pytest.mark.parametrize("r", [-1.0, float("nan"), float("inf")])
    def test_domain_error(self, rational_psi, r):
        with pytest.raises(DomainError):
            eval_psi(rational_psi, r)

    def test_vectorized_values_match_scalar(self, rational_psi):
        r = np.linspace(0.0, 5.0, 11)
        assert np.allclose(rational_psi.values(r), [rational_psi(v) for v in r])


class TestConstruction:
    def test_rational_defaults_beta(self):
        psi = InfluenceFunction.from_spec("rational", [2.0])
        assert psi.params == (2.0, 1.0)

    def test_wrong_parameter_count(self):
        with pytest.raises(InfluenceRejectedError):
            InfluenceFunction.from_spec("gaussian", [1.0])

    def test_declared_lipschitz_below_closed_form(self):
        with pytest.raises(InfluenceRejectedError):
            InfluenceFunction.from_spec("gaussian", [1.0, 1.0], lipschitz=0.1)

    def test_tabulated_jump_rejected(self):
        with pytest.raises(InfluenceRejectedError) as exc:
            InfluenceFunction.tabulated([(0.0, 1.0), (1.0, 0.5), (1.0, 0.2)])
        assert exc.value.details["r"] == 1.0

    def test_tabulated_steeper_than_declared(self):
        with pytest.raises(InfluenceRejectedError):
            InfluenceFunction.tabulated([(0.0, 1.0), (0.1, 0.0)], lipschitz=1.0)

    def test_rational_lipschitz_constant(self, rational_psi):
        # |psi'| = 2r / (1 + r^2)^2 peaks at r = 1/sqrt(3)
        r = 1.0 / math.sqrt(3.0)
        assert rational_psi.lipschitz_const == pytest.approx(2 * r / (1 + r * r) ** 2)


class TestPsiRange:
    def test_monotone_kind_uses_endpoints(self, rational_psi):
        assert psi_range(rational_psi, 0.0, 1.0) == pytest.approx((0.5, 1.0))

    def test_tabulated_interior_node(self):
        psi = InfluenceFunction.tabulated([(0.0, 0.2), (1.0, 1.0), (2.0, 0.1)])
        assert psi_range(psi, 0.0, 2.0) == pytest.approx((0.1, 1.0))

    def test_invalid_range(self, rational_psi):
        with pytest.raises(DomainError):
            psi_range(rational_psi, 2.0, 1.0)


class TestSpeedBound:
    def test_rational_sup(self, rational_psi):
        s = effective_speed_bound(rational_psi, 10.0)
        assert 0.5 <= s <= 0.5 + 1e-5

    def test_zero_kernel(self):
        assert effective_speed_bound(InfluenceFunction.rational(0.0, 1.0), 3.0) == pytest.approx(0.0, abs=1e-12)

    def test_constant_kernel_peaks_at_range_end(self):
        psi = InfluenceFunction.rational(0.5, 0.0)
        assert effective_speed_bound(psi, 1.0) >= 0.5

    def test_tabulated_bump(self):
        psi = InfluenceFunction.tabulated([(0.0, 0.0), (1.0, 1.0), (3.0, 0.0)])
        r = np.linspace(0.0, 3.0, 30001)
        assert effective_speed_bound(psi, 3.0) >= float((psi.values(r) * r).max())

    @given(
        kappa=st.floats(min_value=0.1, max_value=3.0),
        beta=st.floats(min_value=0.5, max_value=2.0),
        r_max=st.floats(min_value=0.1, max_value=8.0),
    )
    @settings(max_examples=30, deadline=None)
    def test_never_below_dense_samples(self, kappa, beta, r_max):
        psi = InfluenceFunction.rational(kappa, beta)
        r = np.linspace(0.0, r_max, 4001)
        assert effective_speed_bound(psi, r_max) >= float((psi.values(r) * r).max()) - 1e-12

    @given(
        r1=st.floats(min_value=0.05, max_value=5.0),
        extra=st.floats(min_value=0.0, max_value=5.0),
    )
    @settings(max_examples=30, deadline=None)
    def test_monotone_in_range(self, r1, extra):
        psi = InfluenceFunction.gaussian(1.0, 1.5)
        assert effective_speed_bound(psi, r1) <= effective_speed_bound(psi, r1 + extra) + 1e-15


class TestValidation:
    def test_accepts_rational(self, rational_psi):
        cert = validate_influence(rational_psi, c=1.0, r_max=10.0)
        assert cert.s == pytest.approx(0.5, abs=1e-5)
        assert cert.s < cert.c
        assert cert.argmax_r == pytest.approx(1.0, abs=0.05)

    def test_rejects_superluminal(self):
        with pytest.raises(InfluenceRejectedError) as exc:
            validate_influence(InfluenceFunction.rational(2.0, 1.0), c=1.0, r_max=10.0)
        assert exc.value.details["check"] == "speed_limit"
        assert exc.value.details["r"] == pytest.approx(1.0, abs=0.05)

    def test_rejects_zero_kernel(self):
        with pytest.raises(InfluenceRejectedError) as exc:
            validate_influence(InfluenceFunction.rational(0.0, 1.0), c=1.0, r_max=10.0)
        assert exc.value.details["check"] == "positivity"

    def test_rejects_cutoff_inside_range(self):
        with pytest.raises(InfluenceRejectedError):
            validate_influence(InfluenceFunction.affine_cutoff(1.0, 0.5), c=5.0, r_max=3.0)

    def test_declared_speed_bound_is_used(self):
        psi = InfluenceFunction.from_spec("rational", [1.0, 1.0], speed_bound=0.6)
        assert validate_influence(psi, c=1.0, r_max=10.0).s == 0.6

    def test_declared_speed_bound_too_small(self):
        psi = InfluenceFunction.from_spec("rational", [1.0, 1.0], speed_bound=0.3)
        with pytest.raises(InfluenceRejectedError):
            validate_influence(psi, c=1.0, r_max=10.0)

    def test_nonpositive_c(self, rational_psi):
        with pytest.raises(DomainError):
            validate_influence(rational_psi, c=0.0, r_max=1.0)
