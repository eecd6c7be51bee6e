"""Observables: expression trees with exact first and second derivatives.

Expressions are written in prefix notation::

    expr  := number | var | "(" op expr+ ")"
    op    := "+" | "-" | "*" | "^" | "sin" | "cos" | "exp"
    var   := x | y | x1 | y1 | x2 | y2

``(^ e k)`` needs an integer literal ``k``; ``(- e)`` negates and
``(- a b ...)`` subtracts.  Numbers may be decimals or ``p/q``.
Observables act on the real parts of the coordinates, so a point ``(x, y)``
of C^2 is seen through ``(Re x, Re y)``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property

import numpy as np
import sympy as sp

PLANE_VARS = sp.symbols("x y", real=True)
PRODUCT_VARS = sp.symbols("x1 y1 x2 y2", real=True)
_BY_NAME = {str(s): s for s in PLANE_VARS + PRODUCT_VARS}
_UNARY = {"sin": sp.sin, "cos": sp.cos, "exp": sp.exp}
_ALLOWED = (sp.Add, sp.Mul, sp.Pow, sp.sin, sp.cos, sp.exp, sp.Symbol, sp.Number)


class ObservableSyntaxError(ValueError):
    pass


def _tokens(text):
    toks = re.findall(r"\(|\)|[^\s()]+", text)
    if not toks:
        raise ObservableSyntaxError("empty expression")
    return toks


def parse_expression(text: str) -> sp.Expr:
    toks = _tokens(text)
    pos = 0

    def atom(tok):
        if tok in _BY_NAME:
            return _BY_NAME[tok]
        try:
            return sp.Rational(Fraction(tok))
        except (ValueError, ZeroDivisionError):
            raise ObservableSyntaxError(f"unknown token {tok!r}") from None

    def parse():
        nonlocal pos
        if pos >= len(toks):
            raise ObservableSyntaxError("unexpected end of expression")
        tok = toks[pos]
        pos += 1
        if tok == ")":
            raise ObservableSyntaxError("unexpected ')'")
        if tok != "(":
            return atom(tok)
        if pos >= len(toks):
            raise ObservableSyntaxError("unexpected end after '('")
        op = toks[pos]
        pos += 1
        args = []
        while pos < len(toks) and toks[pos] != ")":
            args.append(parse())
        if pos >= len(toks):
            raise ObservableSyntaxError("missing ')'")
        pos += 1
        if op == "+":
            return sp.Add(*args) if args else sp.Integer(0)
        if op == "*":
            return sp.Mul(*args) if args else sp.Integer(1)
        if op == "-":
            if not args:
                raise ObservableSyntaxError("'-' needs an argument")
            return -args[0] if len(args) == 1 else args[0] - sp.Add(*args[1:])
        if op == "^":
            if len(args) != 2 or not (args[1].is_Integer and args[1] >= 0):
                raise ObservableSyntaxError("'^' takes a base and a nonnegative integer literal")
            return args[0] ** args[1]
        if op in _UNARY:
            if len(args) != 1:
                raise ObservableSyntaxError(f"'{op}' takes one argument")
            return _UNARY[op](args[0])
        raise ObservableSyntaxError(f"unknown operator {op!r}")

    expr = parse()
    if pos != len(toks):
        raise ObservableSyntaxError("trailing tokens after expression")
    return expr


def _check_tree(expr):
    for node in sp.preorder_traversal(expr):
        if not isinstance(node, _ALLOWED):
            raise ObservableSyntaxError(f"unsupported node {type(node).__name__}")
        if isinstance(node, sp.Pow) and not (node.exp.is_Integer and node.exp >= 0):
            raise ObservableSyntaxError("only nonnegative integer powers are supported")


def _to_prefix(expr) -> str:
    if expr.is_Symbol:
        return str(expr)
    if expr.is_Number:
        return str(expr)
    if isinstance(expr, sp.Add):
        return "(+ " + " ".join(_to_prefix(a) for a in expr.args) + ")"
    if isinstance(expr, sp.Mul):
        return "(* " + " ".join(_to_prefix(a) for a in expr.args) + ")"
    if isinstance(expr, sp.Pow):
        return f"(^ {_to_prefix(expr.base)} {expr.exp})"
    for name, fn in _UNARY.items():
        if isinstance(expr, fn):
            return f"({name} {_to_prefix(expr.args[0])})"
    raise ObservableSyntaxError(f"cannot print {expr}")


@dataclass(frozen=True)
class Observable:
    expr: sp.Expr
    variables: tuple = PLANE_VARS
    name: str | None = None

    def __post_init__(self):
        expr = sp.sympify(self.expr)
        _check_tree(expr)
        extra = expr.free_symbols - set(self.variables)
        if extra:
            raise ObservableSyntaxError(f"variables {sorted(map(str, extra))} not in {self.variables}")
        object.__setattr__(self, "expr", expr)

    @classmethod
    def parse(cls, text: str, name=None) -> "Observable":
        expr = parse_expression(text)
        product = bool(expr.free_symbols & set(PRODUCT_VARS))
        return cls(expr, PRODUCT_VARS if product else PLANE_VARS, name or text.strip())

    @property
    def label(self) -> str:
        return self.name or _to_prefix(self.expr)

    @property
    def prefix(self) -> str:
        return _to_prefix(self.expr)

    @property
    def dim(self) -> int:
        return len(self.variables)

    @property
    def is_constant(self) -> bool:
        return not self.expr.free_symbols

    @cached_property
    def gradient_exprs(self):
        return [sp.diff(self.expr, v) for v in self.variables]

    @cached_property
    def hessian_exprs(self):
        return [[sp.diff(g, v) for v in self.variables] for g in self.gradient_exprs]

    @cached_property
    def _fn(self):
        return _lambdify(self.variables, self.expr)

    @cached_property
    def _grad_fn(self):
        return [_lambdify(self.variables, g) for g in self.gradient_exprs]

    @cached_property
    def _hess_fn(self):
        return [[_lambdify(self.variables, h) for h in row] for row in self.hessian_exprs]

    def __call__(self, *coords):
        return self._fn(*coords)

    def gradient(self, *coords) -> np.ndarray:
        return np.stack([g(*coords) for g in self._grad_fn])

    def hessian(self, *coords) -> np.ndarray:
        return np.stack([np.stack([h(*coords) for h in row]) for row in self._hess_fn])

    def evaluate(self, points) -> np.ndarray:
        """Values at complex points of shape (N, dim), through their real parts."""
        pts = np.asarray(points)
        if pts.ndim != 2 or pts.shape[1] != self.dim:
            raise ValueError(f"expected points of shape (N, {self.dim}), got {pts.shape}")
        re = np.real(pts).astype(np.float64)
        return self._fn(*(re[:, k] for k in range(self.dim)))

    def scaled(self, c, name=None) -> "Observable":
        return Observable(sp.sympify(c) * self.expr, self.variables, name)

    def __add__(self, other):
        other = other if isinstance(other, Observable) else constant(other, self.variables)
        return Observable(self.expr + other.expr, self.variables)

    def __mul__(self, other):
        other = other if isinstance(other, Observable) else constant(other, self.variables)
        return Observable(self.expr * other.expr, self.variables)

    __radd__ = __add__
    __rmul__ = __mul__


def _lambdify(variables, expr):
    fn = sp.lambdify(variables, expr, "numpy")

    def call(*coords):
        # constants and partial dependencies broadcast to the input shape
        shape = np.broadcast(*coords).shape if coords else ()
        return np.broadcast_to(np.asarray(fn(*coords), dtype=np.float64), shape).copy()

    return call


def constant(c, variables=PLANE_VARS) -> Observable:
    value = sp.Rational(c) if isinstance(c, (int, float)) else sp.sympify(c)
    return Observable(value, variables)


def product_observable(phi: Observable, psi: Observable) -> Observable:
    """``(z, w) -> phi(z) psi(w)`` on C^2 x C^2."""
    a = phi.expr.subs(dict(zip(PLANE_VARS, PRODUCT_VARS[:2])), simultaneous=True)
    b = psi.expr.subs(dict(zip(PLANE_VARS, PRODUCT_VARS[2:])), simultaneous=True)
    return Observable(a * b, PRODUCT_VARS, f"{phi.label} ⊗ {psi.label}")


BATTERY = {
    "x": "x",
    "y": "y",
    "x^2": "(^ x 2)",
    "sin x": "(sin x)",
    "x*y": "(* x y)",
    "sin(x+y)": "(sin (+ x y))",
}

BATTERY_PAIRS = [
    ("x", "y"),
    ("x^2", "y"),
    ("sin x", "x"),
    ("x*y", "x^2"),
    ("sin(x+y)", "sin x"),
    ("y", "sin(x+y)"),
]


def battery() -> dict:
    return {k: Observable.parse(v, k) for k, v in BATTERY.items()}
