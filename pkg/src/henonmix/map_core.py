"""Generalized Hénon automorphisms of C^2 and the product map on C^2 x C^2.

A map is a composition of elementary factors ``(x, y) -> (y, p(y) - a*x)``
applied left to right.  Coefficients are kept twice: as exact sympy numbers
(for the symbolic checks at infinity) and as complex doubles (for dynamics).
Floats are converted to the exact rational of their binary value, so the
symbolic side never rounds.
"""
from __future__ import annotations

import numbers
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Sequence

import numpy as np
import sympy as sp

from .errors import EscapedToInfinity, RegularityError

X, Y = sp.symbols("x y")
X1, Y1, X2, Y2 = sp.symbols("x1 y1 x2 y2")


def exact_number(value):
    """Convert ``value`` to an exact sympy number.

    Accepts ints, Fractions, floats (taken at their exact binary value),
    complex numbers, ``"p/q"`` strings and sympy numbers.
    """
    if isinstance(value, bool):
        raise TypeError("booleans are not coefficients")
    if isinstance(value, sp.Basic):
        return value.xreplace({f: sp.Rational(f) for f in value.atoms(sp.Float)})
    if isinstance(value, numbers.Integral):
        return sp.Integer(int(value))
    if isinstance(value, Fraction):
        return sp.Rational(value.numerator, value.denominator)
    if isinstance(value, str):
        return exact_number(Fraction(value.strip()))
    if isinstance(value, float):
        if not np.isfinite(value):
            raise ValueError(f"non-finite coefficient {value!r}")
        return sp.Rational(value)
    if isinstance(value, numbers.Complex):
        value = complex(value)
        return exact_number(value.real) + sp.I * exact_number(value.imag)
    raise TypeError(f"cannot interpret {value!r} as a coefficient")


def _to_complex(value) -> complex:
    return complex(sp.N(value, 30))


@dataclass(frozen=True)
class Polynomial:
    """One-variable polynomial, constant term first."""

    coefficients: tuple

    def __post_init__(self):
        coeffs = tuple(exact_number(c) for c in self.coefficients)
        if not coeffs:
            raise ValueError("polynomial needs at least one coefficient")
        if coeffs[-1] == 0:
            raise ValueError("leading coefficient must be nonzero")
        object.__setattr__(self, "coefficients", coeffs)

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    @property
    def leading(self):
        return self.coefficients[-1]

    @cached_property
    def values(self) -> np.ndarray:
        return np.array([_to_complex(c) for c in self.coefficients], dtype=np.complex128)

    @cached_property
    def derivative_values(self) -> np.ndarray:
        v = self.values
        return np.array([k * v[k] for k in range(1, len(v))], dtype=np.complex128)

    def __call__(self, t):
        return _horner(self.values, t)

    def derivative(self, t):
        return _horner(self.derivative_values, t)

    def expr(self, var):
        return sum(c * var**k for k, c in enumerate(self.coefficients))

    def scaled(self, factor) -> "Polynomial":
        factor = exact_number(factor)
        return Polynomial(tuple(sp.expand(c * factor) for c in self.coefficients))

    def is_real(self) -> bool:
        return all(sp.im(c) == 0 for c in self.coefficients)


def _horner(values, t):
    out = np.full(np.shape(t), values[-1], dtype=np.complex128) if np.ndim(t) else complex(values[-1])
    for c in values[-2::-1]:
        out = out * t + c
    return out


@dataclass(frozen=True)
class HenonFactor:
    """Elementary factor ``(x, y) -> (y, p(y) - a*x)``; Jacobian determinant ``a``."""

    p: Polynomial
    a: object = 1

    def __post_init__(self):
        if not isinstance(self.p, Polynomial):
            object.__setattr__(self, "p", Polynomial(self.p))
        a = exact_number(self.a)
        if a == 0:
            raise ValueError("Hénon factor needs a nonzero Jacobian a")
        if self.p.degree < 2:
            raise ValueError("Hénon factor needs deg p >= 2")
        object.__setattr__(self, "a", a)

    @property
    def degree(self) -> int:
        return self.p.degree

    @cached_property
    def a_value(self) -> complex:
        return _to_complex(self.a)

    def forward(self, x, y):
        return y, self.p(y) - self.a_value * x

    def backward(self, x, y):
        return (self.p(x) - y) / self.a_value, x

    def jacobian(self, x, y):
        """Jacobian matrices ``[[0, 1], [-a, p'(y)]]`` stacked over the leading axes of ``y``."""
        y = np.asarray(y)
        J = np.zeros(y.shape + (2, 2), dtype=np.result_type(y, np.complex128))
        J[..., 0, 1] = 1
        J[..., 1, 0] = -self.a_value
        J[..., 1, 1] = self.p.derivative(y)
        return J


@dataclass(frozen=True)
class HenonMap:
    """Composition of Hénon factors, first factor applied first."""

    factors: tuple

    def __post_init__(self):
        factors = tuple(self.factors)
        if not factors:
            raise ValueError("a Hénon map needs at least one factor")
        if not all(isinstance(f, HenonFactor) for f in factors):
            raise TypeError("factors must be HenonFactor instances")
        object.__setattr__(self, "factors", factors)

    @property
    def degree(self) -> int:
        return int(np.prod([f.degree for f in self.factors]))

    @property
    def inverse_degree(self) -> int:
        # iterating inverse factors multiplies the same degrees
        return self.degree

    @cached_property
    def jacobian_det_exact(self):
        return sp.expand(sp.Mul(*[f.a for f in self.factors]))

    @property
    def jacobian_det(self) -> complex:
        return _to_complex(self.jacobian_det_exact)

    def is_real(self) -> bool:
        return all(f.p.is_real() and sp.im(f.a) == 0 for f in self.factors)

    def forward(self, x, y):
        """Vectorized forward evaluation without overflow checks."""
        with np.errstate(over="ignore", invalid="ignore"):
            for f in self.factors:
                x, y = f.forward(x, y)
        return x, y

    def backward(self, x, y):
        with np.errstate(over="ignore", invalid="ignore"):
            for f in reversed(self.factors):
                x, y = f.backward(x, y)
        return x, y

    def jacobian(self, x, y):
        """Jacobian of the full composition at points ``(x, y)`` (chain rule)."""
        x = np.asarray(x, dtype=np.complex128)
        y = np.asarray(y, dtype=np.complex128)
        J = np.broadcast_to(np.eye(2, dtype=np.complex128), y.shape + (2, 2)).copy()
        for f in self.factors:
            J = f.jacobian(x, y) @ J
            x, y = f.forward(x, y)
        return J

    def swapped_inverse(self) -> "HenonMap":
        """The map ``s o f^{-1} o s`` with ``s(x, y) = (y, x)``.

        Each inverse factor conjugates to the factor ``(p/a, 1/a)``, so the
        backward dynamics of ``f`` is forward Hénon dynamics of this map.
        For ``a = 1`` the floating arithmetic is identical to that of
        ``backward`` with swapped coordinates.
        """
        inv = []
        for f in reversed(self.factors):
            if f.a == 1:
                inv.append(f)
            else:
                inv.append(HenonFactor(f.p.scaled(1 / f.a), 1 / f.a))
        return HenonMap(tuple(inv))


def standard_map() -> HenonMap:
    """The certified horseshoe map ``(x, y) -> (y, y^2 - 10 - x)``."""
    return HenonMap((HenonFactor(Polynomial((-10, 0, 1)), 1),))


def _check_point(point, n=2):
    arr = np.asarray(point, dtype=np.complex128)
    if arr.shape != (n,):
        raise ValueError(f"expected a point with {n} coordinates, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("point has non-finite coordinates")
    return arr


def eval_forward(hmap, point):
    """Evaluate ``hmap`` (HenonMap or ProductMap) at one point.

    Raises ``EscapedToInfinity`` with the index of the factor whose output
    overflowed.
    """
    if isinstance(hmap, ProductMap):
        q = _check_point(point, 4)
        z = eval_forward(hmap.base, q[:2])
        w = eval_backward(hmap.base, q[2:])
        return np.concatenate([z, w])
    x, y = _check_point(point)
    with np.errstate(over="ignore", invalid="ignore"):
        for j, f in enumerate(hmap.factors):
            x, y = f.forward(x, y)
            if not (np.isfinite(x) and np.isfinite(y)):
                raise EscapedToInfinity(j, "forward")
    return np.array([x, y])


def eval_backward(hmap, point):
    if isinstance(hmap, ProductMap):
        q = _check_point(point, 4)
        z = eval_backward(hmap.base, q[:2])
        w = eval_forward(hmap.base, q[2:])
        return np.concatenate([z, w])
    x, y = _check_point(point)
    n = len(hmap.factors)
    with np.errstate(over="ignore", invalid="ignore"):
        for j, f in enumerate(reversed(hmap.factors)):
            x, y = f.backward(x, y)
            if not (np.isfinite(x) and np.isfinite(y)):
                raise EscapedToInfinity(n - 1 - j, "backward")
    return np.array([x, y])


def degree(hmap) -> int:
    if isinstance(hmap, ProductMap):
        return hmap.degree
    return hmap.degree


def jacobian_det(hmap) -> complex:
    return hmap.jacobian_det


# --- the product map -------------------------------------------------------

@dataclass(frozen=True)
class ProductMap:
    """``F(z, w) = (f(z), f^{-1}(w))`` on C^2 x C^2."""

    base: HenonMap

    @property
    def degree(self) -> int:
        return self.base.degree

    def forward(self, z, w):
        return self.base.forward(*z), self.base.backward(*w)

    def backward(self, z, w):
        return self.base.backward(*z), self.base.forward(*w)


def build_product(hmap: HenonMap) -> ProductMap:
    return ProductMap(hmap)


# --- homogeneous parts and indeterminacy ----------------------------------

@dataclass(frozen=True)
class HomogeneousPart:
    """Top-degree homogeneous part of a polynomial map, one expression per coordinate."""

    coords: tuple
    degree: int
    variables: tuple

    def is_zero(self, i) -> bool:
        return sp.expand(self.coords[i]) == 0

    def lambdify(self):
        fn = sp.lambdify(self.variables, list(self.coords), "numpy")

        def call(*args):
            out = fn(*args)
            shape = np.broadcast(*args).shape
            return [np.broadcast_to(np.asarray(o, dtype=np.complex128), shape) for o in out]

        return call


def _symbolic_composition(hmap: HenonMap, direction: str):
    x, y = X, Y
    if direction == "forward":
        for f in hmap.factors:
            x, y = y, sp.expand(f.p.expr(y) - f.a * x)
    elif direction == "backward":
        for f in reversed(hmap.factors):
            x, y = sp.expand((f.p.expr(x) - y) / f.a), x
    else:
        raise ValueError("direction must be 'forward' or 'backward'")
    return x, y


def _top_part(exprs, variables, deg):
    out = []
    for e in exprs:
        poly = sp.Poly(e, *variables)
        out.append(sp.Add(*[c * sp.Mul(*[v**k for v, k in zip(variables, mon)])
                            for mon, c in poly.terms() if sum(mon) == deg]))
    return tuple(out)


def top_homogeneous(hmap, direction="forward") -> HomogeneousPart:
    """Homogeneous part of maximal degree of ``f`` (or ``f^{-1}``).

    For a ProductMap the result is ``(f^{±}_h(z), f^{∓}_h(w))`` in the
    variables ``x1, y1, x2, y2``.
    """
    if isinstance(hmap, ProductMap):
        other = "backward" if direction == "forward" else "forward"
        zp = top_homogeneous(hmap.base, direction)
        wp = top_homogeneous(hmap.base, other)
        sub_z = {X: X1, Y: Y1}
        sub_w = {X: X2, Y: Y2}
        coords = tuple(c.subs(sub_z, simultaneous=True) for c in zp.coords) + \
            tuple(c.subs(sub_w, simultaneous=True) for c in wp.coords)
        return HomogeneousPart(coords, hmap.degree, (X1, Y1, X2, Y2))
    exprs = _symbolic_composition(hmap, direction)
    deg = hmap.degree
    return HomogeneousPart(_top_part(exprs, (X, Y), deg), deg, (X, Y))


@dataclass(frozen=True)
class LinearSubspace:
    """Projective linear subspace of the hyperplane at infinity ``{t = 0}``.

    ``equations`` holds linear forms in the affine variables; ``basis`` holds
    spanning projective points ``[v : 0]`` scaled to max-norm 1.
    """

    variables: tuple
    equations: tuple

    @cached_property
    def matrix(self) -> sp.Matrix:
        n = len(self.variables)
        if not self.equations:
            return sp.zeros(0, n)
        rows = [[sp.expand(e).coeff(v) for v in self.variables] for e in self.equations]
        return sp.Matrix(rows)

    @cached_property
    def basis(self) -> tuple:
        n = len(self.variables)
        M = self.matrix
        null = M.nullspace() if M.rows else [sp.Matrix.eye(n)[:, i] for i in range(n)]
        return tuple(_scale_projective(list(vec) + [sp.Integer(0)]) for vec in null)

    @property
    def dimension(self) -> int:
        """Projective dimension; -1 for the empty set."""
        return len(self.basis) - 1

    @property
    def is_empty(self) -> bool:
        return self.dimension < 0

    def intersect(self, other: "LinearSubspace") -> "LinearSubspace":
        if self.variables != other.variables:
            raise ValueError("subspaces live in different spaces")
        return LinearSubspace(self.variables, self.equations + other.equations)

    def __str__(self):
        if self.is_empty:
            return "{}"
        pts = ", ".join("[" + ":".join(str(c) for c in p) + "]" for p in self.basis)
        return pts if self.dimension == 0 else "span{" + pts + "}"


def _scale_projective(coords):
    m = max(sp.Abs(c) for c in coords)
    return tuple(sp.simplify(c / m) for c in coords)


@dataclass(frozen=True)
class IndeterminacySet:
    """Union of linear subspaces on the hyperplane at infinity."""

    variables: tuple
    components: tuple

    @property
    def is_empty(self) -> bool:
        return all(c.is_empty for c in self.components)

    @property
    def dimension(self) -> int:
        return max((c.dimension for c in self.components), default=-1)

    def intersect(self, other: "IndeterminacySet") -> "IndeterminacySet":
        comps = tuple(a.intersect(b) for a in self.components for b in other.components)
        return IndeterminacySet(self.variables, tuple(c for c in comps if not c.is_empty))

    def witness(self):
        """A point of the set, or None."""
        for c in self.components:
            if not c.is_empty:
                return c.basis[0]
        return None

    def __str__(self):
        if self.is_empty:
            return "{}"
        return " ∪ ".join(str(c) for c in self.components if not c.is_empty)


def _linear_factors(expr, variables):
    """Distinct linear factors of a homogeneous polynomial (over Q(i))."""
    _, factors = sp.factor_list(sp.expand(expr), *variables, gaussian=True)
    out = []
    for fac, _mult in factors:
        poly = sp.Poly(fac, *variables)
        if poly.total_degree() == 0:
            continue
        if poly.total_degree() != 1:
            raise NotImplementedError(f"non-linear component {fac} in the zero locus")
        out.append(sp.expand(fac))
    return out


def zero_locus(part: HomogeneousPart) -> IndeterminacySet:
    """Common zeros of the nonzero coordinates of ``part`` on ``{t = 0}``."""
    comps = [LinearSubspace(part.variables, ())]
    for i, expr in enumerate(part.coords):
        if part.is_zero(i):
            continue
        lin = _linear_factors(expr, part.variables)
        comps = [LinearSubspace(part.variables, c.equations + (l,)) for c in comps for l in lin]
    return IndeterminacySet(part.variables, tuple(c for c in comps if not c.is_empty))


def indeterminacy(hmap, sign="+") -> IndeterminacySet:
    """``I_+`` (sign ``+``) or ``I_-`` for a HenonMap or ProductMap."""
    if sign not in ("+", "-"):
        raise ValueError("sign must be '+' or '-'")
    return zero_locus(top_homogeneous(hmap, "forward" if sign == "+" else "backward"))


@dataclass(frozen=True)
class RegularityReport:
    indeterminacy_disjoint: bool
    plus_avoids_diagonal: bool
    minus_avoids_diagonal: bool
    base_only_origin: bool
    i_plus: IndeterminacySet = field(repr=False, default=None)
    i_minus: IndeterminacySet = field(repr=False, default=None)

    @property
    def regular(self) -> bool:
        return self.indeterminacy_disjoint and self.plus_avoids_diagonal and self.minus_avoids_diagonal


def _diagonal(variables):
    n = len(variables) // 2
    return IndeterminacySet(variables, (LinearSubspace(
        variables, tuple(variables[i] - variables[n + i] for i in range(n))),))


def regularity_from_parts(f_h: HomogeneousPart, finv_h: HomogeneousPart) -> RegularityReport:
    """Regularity of ``F`` from the homogeneous parts of ``f`` and ``f^{-1}``.

    Raises ``RegularityError`` naming a common zero when one of the three
    checks fails.
    """
    sub_z = dict(zip(f_h.variables, (X1, Y1)))
    sub_w = dict(zip(f_h.variables, (X2, Y2)))
    prod_vars = (X1, Y1, X2, Y2)

    def lift(part_z, part_w):
        coords = tuple(c.subs(sub_z, simultaneous=True) for c in part_z.coords) + \
            tuple(c.subs(sub_w, simultaneous=True) for c in part_w.coords)
        return HomogeneousPart(coords, part_z.degree, prod_vars)

    i_plus = zero_locus(lift(f_h, finv_h))
    i_minus = zero_locus(lift(finv_h, f_h))
    diag = _diagonal(prod_vars)
    meet = i_plus.intersect(i_minus)
    plus_diag = i_plus.intersect(diag)
    minus_diag = i_minus.intersect(diag)
    base = zero_locus(HomogeneousPart(f_h.coords + finv_h.coords, f_h.degree, f_h.variables))
    report = RegularityReport(meet.is_empty, plus_diag.is_empty, minus_diag.is_empty,
                              base.is_empty, i_plus, i_minus)
    if not report.regular or not report.base_only_origin:
        for name, s in (("I+ meets I-", meet), ("I+ meets the diagonal", plus_diag),
                        ("I- meets the diagonal", minus_diag), ("f_h and f^-1_h share a zero", base)):
            if not s.is_empty:
                raise RegularityError(f"product map is not regular: {name}", s.witness(), report)
    return report


def check_regularity(F: ProductMap) -> RegularityReport:
    return regularity_from_parts(top_homogeneous(F.base, "forward"),
                                 top_homogeneous(F.base, "backward"))


def as_points(points) -> tuple[np.ndarray, np.ndarray]:
    """Split an ``(N, 2)`` array-like of complex points into coordinate arrays."""
    arr = np.asarray(points, dtype=np.complex128)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"expected an (N, 2) array of points, got shape {arr.shape}")
    return arr[:, 0].copy(), arr[:, 1].copy()


def from_factors(factors: Sequence[tuple]) -> HenonMap:
    """Build a map from ``[(coefficients, a), ...]``."""
    return HenonMap(tuple(HenonFactor(Polynomial(tuple(c)), a) for c, a in factors))
