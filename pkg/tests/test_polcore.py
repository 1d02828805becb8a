"""
Tests for Jones-calculus primitives
"""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from entangleometer.models.schemas import PhysicalSample
from entangleometer.services.errors import InvalidConfigException
from entangleometer.services.polcore import (
    H,
    TWO_PI,
    equal_up_to_phase,
    fold_half_turn,
    hwp,
    is_unitary,
    linear_state,
    polarizer,
    qwp,
    retardance_of,
    retarder,
    retarder_derivative,
    rotation,
    signed_wrapped_difference,
    wrap_angle,
    wrapped_distance,
)

angles = st.floats(min_value=-10.0, max_value=10.0, allow_nan=False)


class TestRotation:
    """Test rotation matrices"""

    def test_zero_is_identity(self):
        """Test rotation(0) is the identity"""
        assert np.allclose(rotation(0.0), np.eye(2))

    def test_quarter_turn(self):
        """Test the printed sign convention at pi/2"""
        assert np.allclose(rotation(np.pi / 2), [[0, 1], [-1, 0]], atol=1e-15)

    def test_inverse_pairs(self):
        """Test rotation(a) rotation(-a) = I over random angles"""
        rng = np.random.default_rng(0)
        for alpha in rng.uniform(-TWO_PI, TWO_PI, 100):
            assert np.allclose(rotation(alpha) @ rotation(-alpha), np.eye(2), atol=1e-14)

    @given(angles)
    def test_unit_determinant(self, alpha):
        """Test det R = 1"""
        assert np.linalg.det(rotation(alpha)) == pytest.approx(1.0, abs=1e-12)


class TestRetarder:
    """Test linear retarders and waveplates"""

    def test_zero_retardance_is_identity(self):
        """Test delta = 0 leaves any axis untouched"""
        for theta in np.linspace(0, np.pi, 7):
            assert np.allclose(retarder(theta, 0.0), np.eye(2), atol=1e-14)

    def test_quarter_wave_at_zero(self):
        """Test retarder(0, pi/2) = diag(1, i)"""
        assert np.allclose(retarder(0.0, np.pi / 2), np.diag([1, 1j]))
        assert np.allclose(qwp(0.0), np.diag([1, 1j]))

    def test_half_wave_at_zero(self):
        """Test hwp(0) = diag(1, -1)"""
        assert np.allclose(hwp(0.0), np.diag([1, -1]))

    def test_half_wave_at_45_swaps(self):
        """Test retarder(pi/4, pi) swaps H and V up to a global phase"""
        assert equal_up_to_phase(retarder(np.pi / 4, np.pi), np.array([[0, 1], [1, 0]]), atol=1e-14)

    def test_hwp_rotates_linear_polarization(self):
        """Test hwp(pi/8) turns H into D"""
        out = hwp(np.pi / 8) @ H
        assert abs(out[0]) == pytest.approx(abs(out[1]), abs=1e-14)
        assert equal_up_to_phase(out, linear_state(np.pi / 4), atol=1e-14)

    @given(angles, angles)
    @settings(max_examples=200)
    def test_unitary(self, theta, delta):
        """Test every retarder is unitary"""
        assert is_unitary(retarder(theta, delta))

    @given(angles, angles, angles)
    @settings(max_examples=200)
    def test_composition(self, theta, delta_1, delta_2):
        """Test retardances add for a shared axis"""
        combined = retarder(theta, delta_1) @ retarder(theta, delta_2)
        assert np.allclose(retarder(theta, delta_1 + delta_2), combined, rtol=0, atol=1e-12)

    @given(angles, angles)
    @settings(max_examples=200)
    def test_axis_period_is_pi(self, theta, delta):
        """Test turning the axis by pi leaves the retarder unchanged"""
        assert np.allclose(retarder(theta + np.pi, delta), retarder(theta, delta), rtol=0, atol=1e-12)

    def test_derivative_matches_finite_difference(self):
        """Test d retarder / d delta against central differences"""
        step = 1e-6
        for theta, delta in [(0.3, 1.1), (1.2, 2.9), (-0.7, 4.4)]:
            numeric = (retarder(theta, delta + step) - retarder(theta, delta - step)) / (2 * step)
            assert np.allclose(retarder_derivative(theta, delta), numeric, atol=1e-8)

    def test_polarizer_is_projector(self):
        """Test P^2 = P with unit trace"""
        projector = polarizer(0.4)
        assert np.allclose(projector @ projector, projector)
        assert np.trace(projector).real == pytest.approx(1.0)


class TestRetardanceOf:
    """Test physical parameter conversion"""

    def test_half_wave_condition(self):
        """Test 404 nm path difference at 808 nm gives pi"""
        sample = PhysicalSample(wavelength_nm=808.0, birefringence=1.0, thickness_nm=404.0)
        assert retardance_of(sample) == pytest.approx(np.pi)

    def test_quarter_wave_condition(self):
        """Test 202 nm path difference at 808 nm gives pi/2"""
        sample = PhysicalSample(wavelength_nm=808.0, birefringence=0.01, thickness_nm=20200.0)
        assert retardance_of(sample) == pytest.approx(np.pi / 2)

    def test_zero_thickness(self):
        """Test zero thickness gives zero retardance"""
        sample = PhysicalSample(wavelength_nm=810.0, birefringence=0.009, thickness_nm=0.0)
        assert retardance_of(sample) == 0.0

    def test_rejects_non_positive_wavelength(self):
        """Test wavelength <= 0 is rejected at both layers"""
        with pytest.raises(ValueError):
            PhysicalSample(wavelength_nm=0.0, birefringence=0.01, thickness_nm=1.0)
        unchecked = PhysicalSample.model_construct(wavelength_nm=-1.0, birefringence=0.01, thickness_nm=1.0, axis=0.0)
        with pytest.raises(InvalidConfigException):
            retardance_of(unchecked)


class TestAngles:
    """Test wrapping helpers"""

    def test_wrap_range(self):
        """Test values land in [0, 2 pi)"""
        values = np.array([-TWO_PI, -1e-18, 0.0, 7.0, 4 * np.pi])
        wrapped = wrap_angle(values)
        assert np.all(wrapped >= 0) and np.all(wrapped < TWO_PI)

    def test_wrapped_distance_across_zero(self):
        """Test distance between 0.01 and 2 pi - 0.01"""
        assert wrapped_distance(0.01, TWO_PI - 0.01) == pytest.approx(0.02)

    def test_signed_difference(self):
        """Test the sign follows the shorter arc"""
        assert signed_wrapped_difference(0.1, TWO_PI - 0.1) == pytest.approx(0.2)
        assert signed_wrapped_difference(TWO_PI - 0.1, 0.1) == pytest.approx(-0.2)

    def test_fold_half_turn(self):
        """Test delta and 2 pi - delta fold together"""
        assert fold_half_turn(TWO_PI - 1.0) == pytest.approx(1.0)
        assert fold_half_turn(1.0) == pytest.approx(1.0)
