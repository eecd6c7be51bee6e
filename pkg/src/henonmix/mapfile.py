"""Map description files.

Grammar (JSON)::

    {
      "name": "optional label",
      "factors": [
        {"p": [c0, c1, ..., cd], "a": A},
        ...
      ]
    }

Each coefficient ``ci`` and ``A`` is a number: an integer, a float, a
string ``"p/q"`` for an exact rational, or a pair ``[re, im]`` whose parts
are themselves integers, floats or ``"p/q"`` strings.  ``p`` lists the
coefficients constant term first; its last entry must be nonzero and the
degree must be at least 2.  ``a`` must be nonzero.  Factors are applied in
the listed order.
"""
from __future__ import annotations

import json
from pathlib import Path

import sympy as sp

from .errors import MapFileError
from .map_core import HenonFactor, HenonMap, Polynomial, exact_number


def _number(value, where):
    if isinstance(value, bool) or value is None:
        raise MapFileError(f"expected a number, got {json.dumps(value)}", where)
    if isinstance(value, list):
        if len(value) != 2:
            raise MapFileError("complex numbers are written [re, im]", where)
        return _number(value[0], f"{where}[0]") + sp.I * _number(value[1], f"{where}[1]")
    if isinstance(value, (int, float, str)):
        try:
            return exact_number(value)
        except (ValueError, TypeError, ZeroDivisionError) as exc:
            raise MapFileError(f"invalid number {value!r} ({exc})", where) from None
    raise MapFileError(f"expected a number, got {type(value).__name__}", where)


def parse_map(text: str, source: str = "<map>") -> HenonMap:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MapFileError(exc.msg, f"{source}:{exc.lineno}:{exc.colno}") from None
    if not isinstance(doc, dict) or "factors" not in doc:
        raise MapFileError('top level must be an object with a "factors" list', source)
    raw = doc["factors"]
    if not isinstance(raw, list) or not raw:
        raise MapFileError("at least one factor is required", f"{source}:factors")
    factors = []
    for j, item in enumerate(raw):
        where = f"{source}:factors[{j}]"
        if not isinstance(item, dict):
            raise MapFileError("each factor is an object with keys p and a", where)
        unknown = set(item) - {"p", "a"}
        if unknown:
            raise MapFileError(f"unknown keys {sorted(unknown)}", where)
        if "p" not in item:
            raise MapFileError("missing key p", where)
        coeffs = item["p"]
        if not isinstance(coeffs, list):
            raise MapFileError("p must be a list of coefficients", f"{where}.p")
        coeffs = [_number(c, f"{where}.p[{i}]") for i, c in enumerate(coeffs)]
        if len(coeffs) < 3:
            raise MapFileError("degree of p must be at least 2", f"{where}.p")
        if coeffs[-1] == 0:
            raise MapFileError("leading coefficient of p must be nonzero", f"{where}.p")
        a = _number(item.get("a", 1), f"{where}.a")
        if a == 0:
            raise MapFileError("a must be nonzero", f"{where}.a")
        factors.append(HenonFactor(Polynomial(tuple(coeffs)), a))
    return HenonMap(tuple(factors))


def load_map(path) -> HenonMap:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise MapFileError(f"cannot read map file ({exc.strerror})", str(path)) from None
    return parse_map(text, str(path))


def _encode(value):
    value = exact_number(value)
    re, im = sp.re(value), sp.im(value)

    def part(v):
        if v.is_Integer:
            return int(v)
        if v.is_Rational:
            return f"{v.p}/{v.q}"
        return float(v)

    return part(re) if im == 0 else [part(re), part(im)]


def dump_map(hmap: HenonMap) -> str:
    doc = {"factors": [{"p": [_encode(c) for c in f.p.coefficients], "a": _encode(f.a)}
                       for f in hmap.factors]}
    return json.dumps(doc, indent=2) + "\n"
