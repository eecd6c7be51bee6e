import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from henonmix.observables import (BATTERY, Observable, ObservableSyntaxError, battery, constant,
                                  parse_expression, product_observable)

x, y = sp.symbols("x y", real=True)


@pytest.mark.parametrize("text,want", [
    ("x", x),
    ("(+ x y 1)", x + y + 1),
    ("(- x)", -x),
    ("(- x y 2)", x - y - 2),
    ("(^ x 3)", x ** 3),
    ("(* 1/2 (sin x))", sp.sin(x) / 2),
    ("(exp (cos y))", sp.exp(sp.cos(y))),
    ("2.5", sp.Rational(5, 2)),
])
def test_parse(text, want):
    assert sp.simplify(parse_expression(text) - want) == 0


@pytest.mark.parametrize("text", ["", "(", "(+ x", "(foo x)", "(^ x y)", "x y", ")", "(+ z 1)"])
def test_syntax_errors(text):
    with pytest.raises(ObservableSyntaxError):
        Observable.parse(text)


def test_prefix_round_trip():
    for text in BATTERY.values():
        phi = Observable.parse(text)
        assert sp.simplify(Observable.parse(phi.prefix).expr - phi.expr) == 0


def test_real_parts():
    phi = Observable.parse("(* x y)")
    pts = np.array([[1 + 5j, 2 - 3j]])
    assert phi.evaluate(pts)[0] == 2.0


def test_constant_broadcasts():
    assert constant(3).evaluate(np.zeros((4, 2))).tolist() == [3.0] * 4


def test_product_observable():
    F = product_observable(Observable.parse("x"), Observable.parse("(sin y)"))
    assert F.dim == 4
    pts = np.array([[2.0, 7.0, 1.0, 0.5]])
    assert F.evaluate(pts)[0] == pytest.approx(2 * np.sin(0.5))


@pytest.mark.parametrize("name", list(BATTERY))
def test_derivatives_against_central_differences(name, rng):
    phi = battery()[name]
    pts = rng.uniform(-3, 3, size=(100, 2))
    h = 1e-5
    g = phi.gradient(pts[:, 0], pts[:, 1])
    H = phi.hessian(pts[:, 0], pts[:, 1])
    for k, e in enumerate(np.eye(2)):
        fp = phi(pts[:, 0] + h * e[0], pts[:, 1] + h * e[1])
        fm = phi(pts[:, 0] - h * e[0], pts[:, 1] - h * e[1])
        fd = (fp - fm) / (2 * h)
        np.testing.assert_allclose(g[k], fd, rtol=1e-6, atol=1e-8)
        gp = phi.gradient(pts[:, 0] + h * e[0], pts[:, 1] + h * e[1])
        gm = phi.gradient(pts[:, 0] - h * e[0], pts[:, 1] - h * e[1])
        np.testing.assert_allclose(H[:, k], (gp - gm) / (2 * h), rtol=1e-6, atol=1e-8)


@settings(max_examples=25)
@given(st.floats(-10, 10), st.floats(-10, 10))
def test_arithmetic(a, b):
    phi = Observable.parse("(sin x)")
    psi = Observable.parse("y")
    combo = phi.scaled(a) + psi * b
    pts = np.array([[0.7, 1.3], [-2.0, 0.1]])
    want = a * np.sin(pts[:, 0]) + b * pts[:, 1]
    np.testing.assert_allclose(combo.evaluate(pts), want, rtol=1e-12, atol=1e-12)
