import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_rational
from decotime.constants import KB
from decotime.cpoles import (
    PoleLocation,
    SearchRectangle,
    continue_from_samples,
    count_poles_zeros,
    locate_poles,
    residue,
)
from decotime.errors import ApproximationError, BoundaryError, ConvergenceError, PoleSearchError, ValidationError

UNIT2 = SearchRectangle(0.0, 2.0, 0.0, 2.0)
WIDE = SearchRectangle(-0.25, 1.25, -0.25, 1.25)

BETA = 1.0 / (KB * 100.0)


def bose(z):
    return 1.0 / np.expm1(BETA * (1.0 + z / 2))


class TestTypes:
    def test_rectangle_invariants(self):
        with pytest.raises(ValidationError):
            SearchRectangle(1.0, 0.0, 0.0, 1.0)
        with pytest.raises(ValidationError):
            SearchRectangle(0.0, 1.0, 0.0, math.inf)

    def test_rectangle_geometry(self):
        r = SearchRectangle(0.0, 2.0, -1.0, 1.0)
        assert r.center == 1.0
        assert r.contains(1.5 + 0.5j) and not r.contains(3.0)
        assert r.distance_to_boundary(1.0) == pytest.approx(1.0)
        kids = r.split(0.5, 0.5)
        assert len(kids) == 4
        assert sum((k.re_max - k.re_min) * (k.im_max - k.im_min) for k in kids) == pytest.approx(4.0)

    def test_pole_location(self):
        p = PoleLocation(0.3 + 0.2j, 1.0)
        assert p.gamma == 0.2 and p.multiplicity == 1 and p.source == "resolvent"
        with pytest.raises(ValidationError):
            PoleLocation(0.3j, 1.0, multiplicity=0)
        with pytest.raises(ValidationError):
            PoleLocation(0.3j, 1.0, source="guess")


class TestCount:
    def test_single_zero(self):
        assert count_poles_zeros(lambda z: z - (1 + 1j), UNIT2) == 1

    def test_single_pole(self):
        assert count_poles_zeros(lambda z: 1 / (z - (1 + 1j)), UNIT2) == -1

    def test_two_zeros_one_pole(self):
        f = lambda z: (z - 1 - 1j) ** 2 / (z - 0.5 - 0.5j)
        assert count_poles_zeros(f, UNIT2) == 1

    def test_nothing_inside(self):
        assert count_poles_zeros(lambda z: np.exp(z) / (z - 5), UNIT2) == 0

    def test_pole_on_boundary(self):
        with pytest.raises(BoundaryError):
            count_poles_zeros(lambda z: 1 / (z - 1.0), UNIT2)

    def test_close_double_pole_not_aliased(self):
        # a double pole 7e-4 from the edge turns the phase by 2 pi between coarse samples
        f = lambda z: 1 / (z - (0.3 + 0.0007j)) ** 2
        assert count_poles_zeros(f, SearchRectangle(0.0, 1.0, 0.0, 1.0)) == -2


class TestLocate:
    def test_simple_pole(self):
        poles = locate_poles(lambda z: 1 / (z - (0.5 + 0.2j)), SearchRectangle(0, 1, 0, 1))
        assert len(poles) == 1
        assert abs(poles[0].position - (0.5 + 0.2j)) < 1e-10
        assert poles[0].multiplicity == 1
        assert abs(poles[0].residue - 1) < 1e-10

    def test_bose_pole(self):
        rect = SearchRectangle(-2.05, -1.95, 0.06, 0.16)
        poles = locate_poles(bose, rect, tol=1e-13)
        assert len(poles) == 1
        exact = 4 * math.pi * KB * 100.0
        assert exact == pytest.approx(0.10828, rel=1e-4)
        assert abs(poles[0].position.imag - exact) <= 1e-8 * exact
        assert abs(poles[0].position.real + 2) <= 1e-8 * 2
        assert poles[0].residue == pytest.approx(2 / BETA, rel=1e-8)

    def test_double_and_simple(self):
        p1, p2 = 0.3 + 0.1j, 0.7 + 0.05j
        f = lambda z: 1 / ((z - p1) ** 2 * (z - p2))
        poles = locate_poles(f, SearchRectangle(0, 1, 0, 0.5))
        assert [p.multiplicity for p in poles] == [2, 1]
        assert abs(poles[0].position - p1) < 1e-10
        assert abs(poles[1].position - p2) < 1e-10
        # residues: d/dz 1/(z-p2) at p1 and 1/(p2-p1)^2
        assert abs(poles[0].residue - (-1 / (p1 - p2) ** 2)) < 1e-8
        assert abs(poles[1].residue - 1 / (p2 - p1) ** 2) < 1e-8

    def test_empty_rectangle(self):
        assert locate_poles(lambda z: 1 / (z - 5j), UNIT2) == []

    def test_source_tag_and_order(self):
        f = lambda z: 1 / ((z - 0.8 - 0.1j) * (z - 0.2 - 0.9j))
        poles = locate_poles(f, SearchRectangle(0, 1, 0, 1), source="continuation-approximant")
        assert [p.source for p in poles] == ["continuation-approximant"] * 2
        assert poles[0].position.real < poles[1].position.real

    def test_zeros_inside_rejected(self):
        with pytest.raises(PoleSearchError):
            locate_poles(lambda z: (z - 0.5 - 0.5j) ** 2 / (z - 0.2 - 0.2j), SearchRectangle(0, 1, 0, 1))

    def test_depth_exhaustion_reports_partial(self):
        # two poles closer than the split fractions can separate at depth 0
        f = lambda z: 1 / ((z - 0.1 - 0.1j) * (z - 0.9 - 0.9j) * (z - 0.5 - 0.5j) * (z - 0.51 - 0.5j)
                           * (z - 0.3 - 0.7j))
        with pytest.raises(PoleSearchError) as info:
            locate_poles(f, SearchRectangle(0, 1, 0, 1), max_depth=0)
        assert info.value.unresolved

    @pytest.mark.parametrize("seed", range(25))
    def test_random_rationals(self, seed):
        rng = np.random.default_rng(seed)
        f, poles, mults, closed = random_rational(rng)
        found = locate_poles(f, WIDE)
        assert sum(p.multiplicity for p in found) == -count_poles_zeros(f, WIDE) == sum(mults)
        for j, (p, m) in enumerate(zip(poles, mults)):
            match = min(found, key=lambda q: abs(q.position - p))
            assert abs(match.position - p) < 1e-10
            assert match.multiplicity == m
            ref = closed(j)
            assert abs(match.residue - ref) <= 1e-8 * max(1.0, abs(ref))
            assert WIDE.contains(match.position)


class TestResidue:
    z0 = 0.4 + 0.3j

    def test_unit(self):
        assert residue(lambda z: 1 / (z - self.z0), self.z0, 0.1) == pytest.approx(1.0, rel=1e-12)

    def test_scaled(self):
        r = residue(lambda z: (3 + 2j) / (z - self.z0), self.z0, 0.1)
        assert abs(r - (3 + 2j)) < 1e-10

    def test_bose_n1(self):
        z1 = -2 + 4j * math.pi * KB * 100.0
        r = residue(bose, z1, 0.01)
        assert abs(r - 2 / BETA) <= 1e-10 * (2 / BETA)

    def test_pure_double_pole_has_zero_residue(self):
        assert abs(residue(lambda z: 1 / (z - self.z0) ** 2, self.z0, 0.1)) < 1e-12

    def test_invalid_radius(self):
        with pytest.raises(ValidationError):
            residue(lambda z: 1 / z, 0.0, 0.0)
        with pytest.raises(ConvergenceError):
            residue(lambda z: 1 / (z - 0.1), 0.0, 0.1)

    @settings(max_examples=50, deadline=None)
    @given(
        st.complex_numbers(min_magnitude=0.1, max_magnitude=10, allow_nan=False, allow_infinity=False),
        st.floats(-2, 2), st.floats(-2, 2),
    )
    def test_linearity(self, a, c1, c2):
        f = lambda z: (1 + 0.5j) / (z - self.z0) + 0.3 / (z - self.z0 - 1.0)
        g = lambda z: np.exp(c1 * z) + c2 * z ** 3
        lhs = residue(lambda z: a * f(z) + g(z), self.z0, 0.2)
        rhs = a * residue(f, self.z0, 0.2)
        assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(rhs))


class TestContinuation:
    def test_lorentzian_pole_pair(self):
        g = 0.1
        x = np.linspace(-5, 5, 64)
        approx = continue_from_samples(list(zip(x, g ** 2 / (x ** 2 + g ** 2))))
        poles = sorted(approx.poles, key=lambda p: p.imag)
        assert len(poles) == 2
        assert abs(poles[0] + 0.1j) < 1e-6 and abs(poles[1] - 0.1j) < 1e-6
        assert len(approx.upper_poles()) == 1

    def test_polynomial_has_no_poles(self):
        x = np.linspace(-2, 3, 40)
        approx = continue_from_samples(list(zip(x, 1 - 2 * x + 0.5 * x ** 3)))
        assert approx.poles.size == 0

    def test_sum_of_lorentzians(self):
        x = np.linspace(-5, 5, 200)
        y = 1 / ((x - 0.2) ** 2 + 0.01) + 1 / ((x + 0.4) ** 2 + 0.04)
        approx = continue_from_samples(list(zip(x, y)))
        expected = [0.2 + 0.1j, 0.2 - 0.1j, -0.4 + 0.2j, -0.4 - 0.2j]
        assert len(approx.poles) == 4
        for e in expected:
            assert np.min(np.abs(approx.poles - e)) < 1e-5

    @pytest.mark.parametrize("func", [
        lambda x: 0.01 / (x ** 2 + 0.01),
        lambda x: np.exp(-x ** 2) * np.cos(3 * x),
        lambda x: 1 / (x - 0.3 - 0.2j) + 1j / (x + 1 - 0.5j),
    ])
    def test_round_trip(self, func):
        x = np.linspace(-4, 4, 120)
        y = func(x).astype(complex)
        approx = continue_from_samples(list(zip(x, y)))
        assert np.max(np.abs(approx(x) - y)) <= 100 * 1e-10 * np.max(np.abs(y))
        assert approx.residual <= 100 * 1e-10
        # the support points are reproduced to 1e-12
        sp = approx.support_points
        assert np.max(np.abs(approx(sp) - func(sp))) <= 1e-12 * np.max(np.abs(y))

    def test_continuation_off_axis(self):
        x = np.linspace(-5, 5, 64)
        approx = continue_from_samples(list(zip(x, 1 / (x - 1j))))
        z = 0.3 + 0.5j
        assert abs(approx(z) - 1 / (z - 1j)) < 1e-8

    def test_validation(self):
        with pytest.raises(ValidationError):
            continue_from_samples([(0.0, 1.0)] * 4)
        with pytest.raises(ValidationError):
            continue_from_samples([(0.0, 1.0)] * 10)

    def test_stagnation(self):
        rng = np.random.default_rng(0)
        # noise on more points than the greedy fit's term budget
        x = np.linspace(-1, 1, 400)
        with pytest.raises(ApproximationError) as info:
            continue_from_samples(list(zip(x, rng.normal(size=400))))
        assert info.value.residual > 1e-12

    def test_no_real_poles_inside_interval(self):
        x = np.linspace(-3, 3, 80)
        approx = continue_from_samples(list(zip(x, np.exp(-x ** 2 / 2))))
        inside = approx.poles[(np.abs(approx.poles.imag) < 1e-6)
                              & (approx.poles.real > -3) & (approx.poles.real < 3)]
        assert inside.size == 0
