import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st

from henonmix.errors import EscapedToInfinity, RegularityError
from henonmix.map_core import (HenonFactor, HenonMap, Polynomial, build_product, check_regularity,
                               degree, eval_backward, eval_forward, exact_number, from_factors,
                               indeterminacy, jacobian_det, regularity_from_parts, top_homogeneous)

from conftest import FIXED_PLUS


def factor(coeffs, a):
    return HenonFactor(Polynomial(coeffs), a)


class TestPolynomialAndFactor:
    def test_float_coefficients_are_exact_binary_rationals(self):
        assert exact_number(0.1) == sp.Rational(3602879701896397, 36028797018963968)
        assert exact_number("1/3") == sp.Rational(1, 3)

    def test_zero_a_rejected(self):
        with pytest.raises(ValueError):
            factor((-10, 0, 1), 0)

    def test_degree_below_two_rejected(self):
        with pytest.raises(ValueError):
            factor((1, 2), 1)

    def test_zero_leading_coefficient_rejected(self):
        with pytest.raises(ValueError):
            Polynomial((1, 0, 1, 0))


class TestEvaluation:
    def test_forward_at_origin(self, std):
        np.testing.assert_array_equal(eval_forward(std, (0, 0)), [0, -10])

    def test_fixed_point(self, std):
        np.testing.assert_allclose(eval_forward(std, FIXED_PLUS), FIXED_PLUS, rtol=1e-14)

    def test_composition_is_sequential(self):
        f1, f2 = factor((-10, 0, 1), 1), factor((-2, "1/3", 1), "1/2")
        comp = HenonMap((f1, f2))
        step = eval_forward(HenonMap((f2,)), eval_forward(HenonMap((f1,)), (0, 0)))
        np.testing.assert_allclose(eval_forward(comp, (0, 0)), step, rtol=0, atol=0)

    def test_backward_of_example(self, std):
        np.testing.assert_array_equal(eval_backward(std, (0, -10)), [0, 0])

    def test_round_trip_example(self, std):
        z = eval_backward(std, eval_forward(std, (0.3, -1.7)))
        np.testing.assert_allclose(z, (0.3, -1.7), atol=1e-12)

    def test_backward_with_a_two(self):
        hm = HenonMap((factor((-10, 0, 1), 2),))
        p1 = 1 - 10
        np.testing.assert_allclose(eval_backward(hm, (1, 1)), ((p1 - 1) / 2, 1))

    def test_overflow_reports_factor(self):
        hm = HenonMap((factor((0, 0, 1), 1), factor((0, 0, 1), 1)))
        with pytest.raises(EscapedToInfinity) as info:
            eval_forward(hm, (0, 1e160))
        assert info.value.factor_index == 0

    def test_bad_point_shape(self, std):
        with pytest.raises(ValueError):
            eval_forward(std, (1, 2, 3))


class TestDegreeAndJacobian:
    def test_degree_single(self, std):
        assert degree(std) == 2

    def test_degree_multiplicative(self):
        hm = HenonMap((factor((0, 0, 1), 1), factor((0, 0, 0, 1), 1)))
        assert degree(hm) == 6

    def test_forward_and_backward_degree_agree(self, two_factor):
        assert two_factor.degree == two_factor.inverse_degree == 4

    def test_jacobian_trivial(self, std):
        assert jacobian_det(std) == 1

    def test_jacobian_product(self):
        hm = HenonMap((factor((0, 0, 1), 2), factor((0, 0, 1), 3j)))
        assert jacobian_det(hm) == pytest.approx(6j)
        assert hm.jacobian_det_exact == 6 * sp.I

    def test_jacobian_finite_difference_oracle(self, two_factor, rng):
        h = 1e-6
        for _ in range(20):
            x, y = rng.normal(size=2) + 1j * rng.normal(size=2)
            cols = []
            for dx, dy in ((h, 0), (0, h)):
                fp = np.array(two_factor.forward(x + dx, y + dy))
                fm = np.array(two_factor.forward(x - dx, y - dy))
                cols.append((fp - fm) / (2 * h))
            J = np.array(cols).T
            assert np.linalg.det(J) == pytest.approx(0.5, abs=1e-6)
            np.testing.assert_allclose(two_factor.jacobian(x, y), J, atol=1e-5)


def _top_part_oracle(exprs, variables, d):
    out = []
    for e in exprs:
        poly = sp.Poly(sp.expand(e), *variables)
        out.append(sp.Add(*[c * sp.Mul(*[v ** k for v, k in zip(variables, m)])
                            for m, c in poly.terms() if sum(m) == d]))
    return out


class TestHomogeneousParts:
    def test_forward(self, std):
        h = top_homogeneous(std, "forward")
        x, y = h.variables
        assert sp.expand(h.coords[0]) == 0
        assert sp.expand(h.coords[1] - y ** 2) == 0

    def test_backward(self, std):
        h = top_homogeneous(std, "backward")
        x, y = h.variables
        assert sp.expand(h.coords[0] - x ** 2) == 0
        assert sp.expand(h.coords[1]) == 0

    def test_composition_against_symbolic_oracle(self, two_factor):
        x, y = sp.symbols("x y")
        X, Y = y, y ** 2 - 10 - x
        X, Y = Y, Y ** 2 + Y / 3 - 2 - sp.Rational(1, 2) * X
        want = _top_part_oracle([X, Y], (x, y), 4)
        h = top_homogeneous(two_factor, "forward")
        sub = dict(zip(h.variables, (x, y)))
        got = [sp.expand(c.subs(sub)) for c in h.coords]
        assert got[0] == 0 and want[0] == 0
        assert sp.expand(got[1] - want[1]) == 0
        assert sp.expand(got[1] - y ** 4) == 0

    def test_top_part_dominates_along_rays(self, two_factor, rng):
        fn = top_homogeneous(two_factor, "forward").lambdify()
        for _ in range(5):
            v = rng.normal(size=2) + 1j * rng.normal(size=2)
            v /= np.max(np.abs(v))
            ratios = []
            for r in (1e3, 1e4, 1e5):
                z = r * v
                diff = np.array(two_factor.forward(*z)) - np.array(fn(*z))
                ratios.append(np.max(np.abs(diff)) / r ** 4)
            assert ratios[2] < ratios[0] and ratios[2] < 1e-4


class TestIndeterminacyAndRegularity:
    def test_plus(self, std):
        assert str(indeterminacy(std, "+")) == "[1:0:0]"

    def test_minus(self, std):
        assert str(indeterminacy(std, "-")) == "[0:1:0]"

    def test_product_plus_is_line(self, std):
        I = indeterminacy(build_product(std), "+")
        assert I.dimension == 1
        # every point of the line has z2 = w1 = t = 0
        for p in I.components[0].basis:
            assert p[1] == 0 and p[2] == 0 and p[4] == 0

    def test_product_evaluation(self, std):
        F = build_product(std)
        np.testing.assert_array_equal(eval_forward(F, (0, 0, 0, -10)), [0, -10, 0, 0])

    def test_product_round_trip(self, std, rng):
        F = build_product(std)
        q = rng.uniform(-2, 2, 4) + 1j * rng.uniform(-2, 2, 4)
        np.testing.assert_allclose(eval_backward(F, eval_forward(F, q)), q, atol=1e-12)

    def test_product_degree(self, std):
        assert degree(build_product(std)) == 2

    def test_standard_regular(self, std):
        rep = check_regularity(build_product(std))
        assert rep.indeterminacy_disjoint and rep.plus_avoids_diagonal and rep.minus_avoids_diagonal
        assert rep.base_only_origin and rep.regular

    def test_diagonal_system_only_origin(self):
        x, y = sp.symbols("x y")
        assert sp.solve([y ** 2, x ** 2], [x, y], dict=True) == [{x: 0, y: 0}]

    def test_two_factor_regular(self, two_factor):
        assert check_regularity(build_product(two_factor)).regular

    def test_degenerate_parts_raise_with_common_zero(self, std):
        h = top_homogeneous(std, "forward")
        with pytest.raises(RegularityError) as info:
            regularity_from_parts(h, h)
        assert info.value.common_zero is not None


coeff = st.integers(-20, 20)
nonzero = st.integers(1, 5) | st.integers(-5, -1)


@given(c0=coeff, c1=coeff, lead=nonzero, a=nonzero, deg=st.integers(2, 4))
def test_regularity_of_constructible_maps(c0, c1, lead, a, deg):
    coeffs = [c0, c1] + [0] * (deg - 2) + [lead]
    hm = from_factors([(coeffs, a)])
    rep = check_regularity(build_product(hm))
    assert rep.regular
    assert indeterminacy(hm, "+").intersect(indeterminacy(hm, "-")).is_empty


@given(st.lists(st.floats(-2, 2), min_size=4, max_size=4))
def test_round_trip_property(v):
    hm = from_factors([((-10, 0, 1), 1), ((-2, "1/3", 1), "1/2")])
    z = np.array([v[0] + 1j * v[1], v[2] + 1j * v[3]])
    back = eval_backward(hm, eval_forward(hm, z))
    assert np.max(np.abs(back - z)) <= 1e-10 * max(1.0, np.max(np.abs(z)))


def test_round_trip_thousand_points(rng):
    hm = from_factors([((-10, 0, 1), 1), ((-2, "1/3", 1), "1/2")])
    v = rng.uniform(-2, 2, size=(1000, 4))
    x, y = v[:, 0] + 1j * v[:, 1], v[:, 2] + 1j * v[:, 3]
    bx, by = hm.backward(*hm.forward(x, y))
    scale = np.maximum(1.0, np.maximum(np.abs(x), np.abs(y)))
    assert np.max(np.maximum(np.abs(bx - x), np.abs(by - y)) / scale) <= 1e-10
