import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from conftest import make_state, unit_observable
from decotime.constants import CODATA, HBAR, HBAR_SI, KB, KB_SI, time_from_energy
from decotime.errors import ConvergenceError, DomainError, ValidationError
from decotime.vanhove import (
    ExpectationSeries,
    RegularKernel,
    VanHoveObservable,
    VanHoveState,
    constant_kernel,
    expectation_constant,
    gaussian_packet,
    grid_kernel,
    hermitize,
    hermiticity_defect,
    lorentzian_nu,
    to_lambda_nu,
    weak_limit_state,
    zero_kernel,
)


def kernel(func, omega_max=50.0, bound=1e9):
    return RegularKernel(func=func, omega_max=omega_max, bound=bound)


class TestConstants:
    def test_codata_values(self):
        assert HBAR == 6.582119569e-16
        assert KB == 8.617333262e-5

    def test_si_values_follow_from_elementary_charge(self):
        assert HBAR_SI == pytest.approx(1.054571817e-34, rel=1e-9)
        assert KB_SI == pytest.approx(1.380649e-23, rel=1e-9)

    def test_constants_are_frozen(self):
        with pytest.raises(AttributeError):
            CODATA.hbar = 1.0

    def test_zero_width_is_infinite_time(self):
        assert time_from_energy(0.0) == math.inf


class TestExpectationConstant:
    def test_normalization(self):
        s = make_state(zero_kernel())
        assert expectation_constant(s, unit_observable()) == pytest.approx(1.0, abs=1e-8)

    def test_mean_energy(self):
        # int_0^inf w e^-w dw = 1; the tail beyond 50 is below 1e-20
        s = make_state(zero_kernel())
        obs = VanHoveObservable(lambda w: w, zero_kernel())
        assert expectation_constant(s, obs) == pytest.approx(1.0, abs=1e-6)

    def test_zero_observable(self):
        s = make_state(lorentzian_nu(0.1, 10.0, 1.0))
        obs = VanHoveObservable(lambda w: 0.0, zero_kernel())
        assert expectation_constant(s, obs) == 0.0

    def test_mismatched_cutoff(self):
        s = make_state(zero_kernel())
        obs = VanHoveObservable(lambda w: 1.0, zero_kernel(20.0))
        with pytest.raises(DomainError):
            expectation_constant(s, obs)

    def test_nonconvergent_quadrature_reports_error(self):
        s = make_state(zero_kernel())
        obs = VanHoveObservable(lambda w: math.sin(1e6 * w), zero_kernel())
        with pytest.raises(ConvergenceError) as info:
            expectation_constant(s, obs)
        assert info.value.error is not None


class TestStateValidation:
    def test_negative_density_rejected(self):
        with pytest.raises(ValidationError):
            VanHoveState(lambda w: 0.04 - 0.001 * w, zero_kernel())

    def test_unnormalized_density_rejected(self):
        with pytest.raises(ValidationError):
            VanHoveState(lambda w: 1.0, zero_kernel())

    def test_non_hermitian_kernel_rejected(self):
        with pytest.raises(ValidationError):
            make_state(kernel(lambda w, wp: (w + 1j * wp).astype(complex)))

    def test_bound_enforced(self):
        k = RegularKernel(func=lambda w, wp: np.full(np.broadcast(w, wp).shape, 2.0, dtype=complex), bound=1.0)
        with pytest.raises(ValidationError):
            make_state(k)

    def test_complex_observable_rejected(self):
        with pytest.raises(ValidationError):
            VanHoveObservable(lambda w: 1j * w, zero_kernel())


class TestWeakLimit:
    def test_zero_regular_is_same_object(self):
        s = make_state(zero_kernel())
        assert weak_limit_state(s) is s

    def test_lorentzian_regular_removed(self):
        s = make_state(lorentzian_nu(0.1, 10.0, 1.0))
        w = weak_limit_state(s)
        assert w.singular is s.singular
        assert w.regular.is_zero
        grid = np.linspace(0, 50, 11)
        assert np.all(w.regular(grid[:, None], grid[None, :]) == 0)

    def test_idempotent_and_preserves_constant(self):
        s = make_state(lorentzian_nu(0.1, 10.0, 1.0))
        once = weak_limit_state(s)
        assert weak_limit_state(once) is once
        obs = VanHoveObservable(lambda w: w, zero_kernel())
        assert expectation_constant(once, obs) == expectation_constant(s, obs)


class TestLambdaNu:
    def test_difference_kernel(self):
        k = to_lambda_nu(kernel(lambda w, wp: (w - wp).astype(complex)))
        assert k(3.0, 1.5) == pytest.approx(1.5)

    def test_sum_kernel(self):
        k = to_lambda_nu(kernel(lambda w, wp: (w + wp).astype(complex)))
        assert k(3.0, 1.5) == pytest.approx(6.0)

    def test_product_kernel(self):
        k = to_lambda_nu(kernel(lambda w, wp: (w * wp).astype(complex)))
        lam, nu = 3.0, 1.5
        assert k(lam, nu) == pytest.approx(lam ** 2 - nu ** 2 / 4, rel=1e-15)

    @pytest.mark.parametrize("lam, nu", [(1.0, 2.5), (49.0, 4.0), (-0.1, 0.0)])
    def test_outside_domain(self, lam, nu):
        k = to_lambda_nu(kernel(lambda w, wp: (w * wp).astype(complex)))
        with pytest.raises(DomainError):
            k(lam, nu)

    def test_kernel_domain(self):
        with pytest.raises(DomainError):
            kernel(lambda w, wp: (w * wp).astype(complex))(51.0, 1.0)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(0, 50), st.floats(0, 50))
    def test_round_trip(self, w, wp):
        K = kernel(lambda a, b: (np.sin(a) * b + 1j * (a - b) * np.cos(a * b)).astype(complex))
        lam, nu = 0.5 * (w + wp), w - wp
        # the coordinates come back to a few ulps; the kernel itself may amplify those
        w_back, wp_back = lam + nu / 2, lam - nu / 2
        assert abs(w_back - w) <= 4 * np.spacing(max(w, wp, 1.0))
        assert abs(wp_back - wp) <= 4 * np.spacing(max(w, wp, 1.0))
        direct = K(w_back, wp_back)
        back = to_lambda_nu(K)(lam, nu)
        assert abs(back - direct) <= 1e-14 * max(1.0, abs(direct))

    @pytest.mark.parametrize("func, exact", [
        (lambda w, wp: w * wp, 4.0),
        (lambda w, wp: np.exp(-(w - wp) ** 2) * np.cos(w + wp), None),
    ])
    def test_unit_jacobian(self, func, exact):
        A = 2.0
        direct = integrate.dblquad(lambda wp, w: func(w, wp), 0, A, 0, A, epsabs=1e-12, epsrel=1e-12)[0]
        # region [0, A]^2 in (lam, nu): |nu| <= 2 lam and |nu| <= 2 (A - lam)
        mapped = integrate.dblquad(
            lambda nu, lam: func(lam + nu / 2, lam - nu / 2),
            0, A,
            lambda lam: -2 * min(lam, A - lam),
            lambda lam: 2 * min(lam, A - lam),
            epsabs=1e-12, epsrel=1e-12,
        )[0]
        assert mapped == pytest.approx(direct, rel=1e-9, abs=1e-12)
        if exact is not None:
            assert direct == pytest.approx(exact, rel=1e-10)


class TestHermitize:
    def test_hermitian_fixed_point(self):
        K = lorentzian_nu(0.1, 10.0, 1.0)
        H = hermitize(K)
        w = np.linspace(0, 50, 23)
        W1, W2 = np.meshgrid(w, w, indexing="ij")
        assert np.allclose(H(W1, W2), K(W1, W2), rtol=0, atol=1e-15)

    def test_constant_i_annihilated(self):
        H = hermitize(kernel(lambda w, wp: np.full(np.broadcast(w, wp).shape, 1j)))
        w = np.linspace(0, 50, 9)
        assert np.all(H(w[:, None], w[None, :]) == 0)

    def test_hand_computed_grid(self):
        H = hermitize(kernel(lambda w, wp: (w + 1j) * np.ones_like(wp)))
        w = np.linspace(0, 4, 5)
        W1, W2 = np.meshgrid(w, w, indexing="ij")
        assert np.allclose(H(W1, W2), (W1 + W2) / 2, rtol=0, atol=1e-15)

    @settings(max_examples=30, deadline=None)
    @given(st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False),
           st.floats(0.1, 5))
    def test_output_hermitian(self, c, a):
        K = kernel(lambda w, wp: c * np.exp(-a * w) * (1 + wp) ** 2)
        assert hermiticity_defect(hermitize(K)) <= 1e-12 * max(1.0, abs(c) * 2601)

    def test_continuation_of_hermitized_kernel(self):
        K = lorentzian_nu(0.1, 10.0, 1.0)
        H = hermitize(K)
        z = np.array([0.3 + 0.05j, -0.2 + 0.4j])
        assert np.allclose(H.continue_nu(10.0, z), K.continue_nu(10.0, z), rtol=1e-14)


class TestFamilies:
    def test_gaussian_packet_matches_lambda_nu_form(self):
        K = gaussian_packet(10.0, 0.5)
        lam, nu = 10.3, 0.4
        expected = math.exp(-(lam - 10) ** 2 / (2 * 0.25)) * math.exp(-nu ** 2 / (8 * 0.25))
        assert K.lambda_nu(lam, nu).real == pytest.approx(expected, rel=1e-13)
        assert K.nu_scale == 1.0

    def test_grid_kernel_bilinear(self):
        w = np.linspace(0, 4, 5)
        vals = np.add.outer(w, w)  # bilinear exact for w + w'
        K = grid_kernel(w, vals)
        assert K(1.3, 2.7).real == pytest.approx(4.0, rel=1e-14)
        assert K.family == "grid" and K.omega_max == 4.0

    def test_grid_kernel_validation(self):
        with pytest.raises(ValidationError):
            grid_kernel([1.0, 2.0], np.zeros((2, 2)))
        with pytest.raises(ValidationError):
            grid_kernel([0.0, 1.0], np.zeros((3, 3)))

    def test_missing_continuation(self):
        K = grid_kernel(np.linspace(0, 4, 5), np.ones((5, 5)))
        with pytest.raises(DomainError):
            K.continue_nu(1.0, 0.1j)


class TestExpectationSeries:
    def test_times_must_increase(self):
        with pytest.raises(ValidationError):
            ExpectationSeries(np.array([0.0, 0.0]), np.zeros(2, dtype=complex), 0.0)

    def test_values_must_be_finite(self):
        with pytest.raises(ValidationError):
            ExpectationSeries(np.array([0.0, 1.0]), np.array([1.0, np.inf]), 0.0)

    def test_defaults(self):
        s = ExpectationSeries([0.0, 1.0], [1.0, 0.5], 1.0)
        assert not s.failed.any() and len(s) == 2
