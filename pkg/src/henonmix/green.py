"""Green functions G+ and G- with truncation error bounds.

Forward orbits are iterated plainly until they enter the filtration set
``V+ = {|y| >= max(|x|, R)}``.  From there on the state is kept in
log-coordinates ``(L, w, u) = (log|y|, 1/y, x/y)``, so arbitrarily large
iterates never overflow.  For one factor with leading coefficient ``c``::

    rho = c + sum_{i<d} c_i w^(d-i) - a u w^(d-1)
    L' = d L + log|rho|,   w' = w^d / rho,   u' = w^(d-1) / rho

and ``rho -> c`` super-exponentially, which yields a closed-form tail.
Backward orbits are forward orbits of the swapped inverse map, so G- shares
all of this machinery.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GreenInputError
from .map_core import HenonMap, ProductMap
from .parallel import chunked_apply

EPS = np.finfo(float).eps
LOG2 = math.log(2.0)
_MAX_LINEAR = 1e100
_BOUND_TERMS = 64


@dataclass(frozen=True)
class GreenConfig:
    n_max: int = 60
    escape_radius: float | None = None
    tail_refinements: int = 3

    def __post_init__(self):
        if int(self.n_max) < 1:
            raise ValueError("n_max must be >= 1")
        if int(self.tail_refinements) < 0:
            raise ValueError("tail_refinements must be >= 0")
        if self.escape_radius is not None and not self.escape_radius > 0:
            raise ValueError("escape_radius must be positive")

    def radius_for(self, hmap: HenonMap) -> float:
        r = escape_radius(hmap)
        if self.escape_radius is None:
            return r
        if self.escape_radius < r:
            raise ValueError(f"escape_radius override {self.escape_radius} is below the "
                             f"filtration radius {r} of this map")
        return float(self.escape_radius)


@dataclass(frozen=True)
class GreenResult:
    value: float
    error_bound: float
    escape_iter: int | None
    side: str

    @property
    def escaped(self) -> bool:
        return self.escape_iter is not None


@dataclass
class GreenBatch:
    """Vectorized results; ``escape_iter == -1`` marks points that never escaped."""

    values: np.ndarray
    errors: np.ndarray
    escape_iter: np.ndarray
    side: str

    def __len__(self):
        return len(self.values)

    def __getitem__(self, i) -> GreenResult:
        m = int(self.escape_iter[i])
        return GreenResult(float(self.values[i]), float(self.errors[i]), None if m < 0 else m, self.side)


# --- radius and constants ---------------------------------------------------

def _positive_root(coeffs_high_first) -> float:
    """Largest positive real root of a polynomial with one sign change."""
    roots = np.roots(coeffs_high_first)
    real = [r.real for r in roots if abs(r.imag) <= 1e-9 * max(1.0, abs(r)) and r.real > 0]
    r = max(real) if real else 0.0

    def g(t):
        return np.polyval(coeffs_high_first, t)

    # nudge upward until the polynomial is nonnegative in floating arithmetic
    step = max(r, 1.0) * 4 * EPS
    while g(r) < 0:
        r += step
        step *= 2
    return float(r)


def factor_radius(factor, direction="forward") -> float:
    """Smallest r with |c_d| r^d >= sum_{i<d} |c_i| r^i + k r for all larger r.

    ``k = 2 + |a|`` forward and ``1 + 2|a|`` for the inverse factor written
    in swapped coordinates.  Beyond this radius each factor at least doubles
    ``|y|`` on V+.
    """
    mods = [abs(c) for c in f_values(factor)]
    a = abs(factor.a_value)
    k = 2 + a if direction == "forward" else 1 + 2 * a
    poly = [-m for m in mods]
    poly[-1] = mods[-1]
    poly[1] -= k
    return _positive_root(poly[::-1])


def f_values(factor):
    return factor.p.values


def escape_radius(hmap: HenonMap) -> float:
    """Radius making ``V+`` forward invariant and ``V-`` backward invariant for every factor."""
    return max(max(factor_radius(f, "forward"), factor_radius(f, "backward")) for f in hmap.factors)


def tail_constant(hmap: HenonMap) -> float:
    """kappa = log 2 + max_j |log|c_lead,j||."""
    return LOG2 + max(abs(math.log(abs(complex(f.p.values[-1])))) for f in hmap.factors)


def _factor_tables(hmap: HenonMap):
    degs = [f.degree for f in hmap.factors]
    later = [int(np.prod(degs[j + 1:])) for j in range(len(degs))]
    tables = []
    for f, D in zip(hmap.factors, later):
        vals = f.p.values
        tables.append(dict(d=f.degree, rev=vals[::-1].copy(), a=f.a_value, D=D,
                           mods=np.abs(vals), amod=abs(f.a_value)))
    log_c = math.fsum(t["D"] * math.log(float(t["mods"][-1])) for t in tables)
    return tables, log_c


def _log_step(t, L, w, u):
    d = t["d"]
    rev = t["rev"]
    q = np.full(w.shape, rev[-1], dtype=np.complex128)
    for c in rev[-2::-1]:
        q = q * w + c
    # q = sum_k c_{d-k} w^k, Horner from the highest power so c_d is added last
    wd1 = w ** (d - 1)
    rho = q - t["a"] * u * wd1
    lr = np.log(np.abs(rho))
    return d * L + lr, wd1 * w / rho, wd1 / rho, lr


def _eta(t, lY):
    """Upper bound for |rho/c - 1| once |y| >= exp(lY)."""
    d = t["d"]
    mods = t["mods"]
    s = np.zeros_like(lY)
    for i in range(d):
        if mods[i]:
            s = s + mods[i] * np.exp((i - d) * lY)
    s = s + t["amod"] * np.exp((1 - d) * lY)
    return s / mods[-1]


def _step_bound(tables, lY):
    """Bound for |S - log|C|| over one full iterate starting at |y| >= exp(lY)."""
    total = np.zeros_like(lY)
    for t in tables:
        eta = _eta(t, lY)
        small = eta < 1
        b = np.empty_like(lY)
        b[small] = -np.log1p(-eta[small])
        big = ~small
        if big.any():
            b[big] = np.maximum(np.log1p(eta[big]),
                                math.log(float(t["mods"][-1]) / 2) + (t["d"] - 1) * lY[big])
        total = total + t["D"] * b
    return total


# --- core evaluator -----------------------------------------------------------

def _escape_core(hmap: HenonMap, x, y, n_max, R, K, depth=None):
    """Escape-time evaluation for points given as complex arrays.

    Returns ``(values, errors, escape_iter)``; ``depth`` optionally forces
    escaped points to be refined up to that many iterates in total.
    """
    tables, log_c = _factor_tables(hmap)
    d = hmap.degree
    N = x.shape[0]
    esc_iter = np.full(N, -1, dtype=np.int64)
    L = np.zeros(N)
    w = np.zeros(N, dtype=np.complex128)
    u = np.zeros(N, dtype=np.complex128)
    norm0 = np.maximum(np.abs(x), np.abs(y))
    in_v = (np.abs(y) >= np.maximum(np.abs(x), R))
    if np.any(~in_v & (norm0 > _MAX_LINEAR)):
        raise GreenInputError("point too large for the linear phase (|x| > 1e100 outside V+)")

    def enter(idx, xs, ys):
        L[idx] = np.log(np.abs(ys))
        w[idx] = 1.0 / ys
        u[idx] = xs / ys

    act = np.flatnonzero(in_v)
    enter(act, x[act], y[act])
    esc_iter[act] = 0
    lin = np.flatnonzero(~in_v)
    xl = x[lin].copy()
    yl = y[lin].copy()
    for m in range(n_max):
        if lin.size == 0:
            break
        # one full iterate on points still in the linear phase; switch to
        # log-coordinates at the first factor whose output lies in V+
        logmode = np.zeros(lin.size, dtype=bool)
        Ll = np.zeros(lin.size)
        wl = np.zeros(lin.size, dtype=np.complex128)
        ul = np.zeros(lin.size, dtype=np.complex128)
        for t, f in zip(tables, hmap.factors):
            if logmode.any():
                k = np.flatnonzero(logmode)
                Ll[k], wl[k], ul[k], _ = _log_step(t, Ll[k], wl[k], ul[k])
            k = np.flatnonzero(~logmode)
            if k.size:
                xn, yn = f.forward(xl[k], yl[k])
                xl[k], yl[k] = xn, yn
                hit = np.abs(yn) >= np.maximum(np.abs(xn), R)
                if hit.any():
                    h = k[hit]
                    logmode[h] = True
                    Ll[h] = np.log(np.abs(yl[h]))
                    wl[h] = 1.0 / yl[h]
                    ul[h] = xl[h] / yl[h]
        if logmode.any():
            k = np.flatnonzero(logmode)
            idx = lin[k]
            L[idx], w[idx], u[idx] = Ll[k], wl[k], ul[k]
            esc_iter[idx] = m + 1
            keep = ~logmode
            lin, xl, yl = lin[keep], xl[keep], yl[keep]

    values = np.zeros(N)
    errors = np.zeros(N)
    kappa = tail_constant(hmap)
    unesc = esc_iter < 0
    errors[unesc] = float(d) ** (-n_max) * (np.log(np.maximum(R, norm0[unesc])) + kappa)

    idx = np.flatnonzero(~unesc)
    if idx.size:
        m = esc_iter[idx]
        Lm = L[idx].copy()
        Lk, wk, uk = L[idx].copy(), w[idx].copy(), u[idx].copy()
        Kp = np.full(idx.size, K + 1)
        if depth is not None:
            Kp = np.maximum(Kp, np.asarray(depth)[idx] - m)
        acc = np.zeros(idx.size)
        mag = np.abs(Lm)
        for k in range(int(Kp.max())):
            live = k < Kp
            S = np.zeros(idx.size)
            Lnew, wnew, unew = Lk.copy(), wk.copy(), uk.copy()
            for t in tables:
                Lnew, wnew, unew, lr = _log_step(t, Lnew, wnew, unew)
                S = S + t["D"] * lr
            term = np.where(live, S * float(d) ** (-(k + 1)), 0.0)
            acc = acc + term
            mag = mag + np.abs(term)
            Lk = np.where(live, Lnew, Lk)
            wk = np.where(live, wnew, wk)
            uk = np.where(live, unew, uk)
        dK = np.power(float(d), -Kp.astype(float))
        tail = dK * log_c / (d - 1)
        scale = np.power(float(d), -m.astype(float))
        values[idx] = np.maximum(scale * (Lm + acc + tail), 0.0)
        # remainder: sum_{j>=0} d^{-(K+j+1)} E(|y_K| 2^j)
        rem = np.zeros(idx.size)
        for j in range(_BOUND_TERMS):
            rem = rem + dK * float(d) ** (-(j + 1)) * _step_bound(tables, Lk + j * LOG2)
        last = _step_bound(tables, Lk + _BOUND_TERMS * LOG2)
        rem = rem + dK * float(d) ** (-(_BOUND_TERMS + 1)) * last * d / (d - 1)
        rounding = 8 * EPS * (Kp + 2) * (mag + np.abs(tail))
        errors[idx] = scale * (rem + rounding)
    return values, errors, esc_iter


def _as_points(points):
    arr = np.asarray(points, dtype=np.complex128)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise GreenInputError(f"expected points of shape (N, 2), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise GreenInputError("NaN or infinite coordinates")
    return arr


def _batch(hmap, points, cfg, side, pool=None, depth=None):
    cfg = cfg or GreenConfig()
    arr = _as_points(points)
    if side == "-":
        gmap = hmap.swapped_inverse()
        arr = arr[:, ::-1]
    else:
        gmap = hmap
    R = cfg.radius_for(hmap)
    x = arr[:, 0].copy()
    y = arr[:, 1].copy()

    def run(sl):
        dep = None if depth is None else np.asarray(depth)[sl]
        return _escape_core(gmap, x[sl], y[sl], int(cfg.n_max), R, int(cfg.tail_refinements), dep)

    parts = chunked_apply(pool, run, len(x))
    if not parts:
        return GreenBatch(np.zeros(0), np.zeros(0), np.zeros(0, dtype=np.int64), side)
    return GreenBatch(np.concatenate([p[0] for p in parts]),
                      np.concatenate([p[1] for p in parts]),
                      np.concatenate([p[2] for p in parts]), side)


def green_plus_batch(hmap, points, cfg=None, pool=None) -> GreenBatch:
    return _batch(hmap, points, cfg, "+", pool)


def green_minus_batch(hmap, points, cfg=None, pool=None) -> GreenBatch:
    return _batch(hmap, points, cfg, "-", pool)


def green_plus(hmap, z, cfg=None) -> GreenResult:
    return green_plus_batch(hmap, [z], cfg)[0]


def green_minus(hmap, z, cfg=None) -> GreenResult:
    return green_minus_batch(hmap, [z], cfg)[0]


# --- product map ------------------------------------------------------------

def green_product_batch(F: ProductMap, points, cfg=None, pool=None) -> GreenBatch:
    """Green function of ``F(z, w) = (f(z), f^-1(w))`` for points of shape (N, 4).

    Both components are carried to a common depth, the larger of their escape
    times plus the refinements, and the max-norm is taken there; this is the
    log-coordinate form of iterating F itself.
    """
    cfg = cfg or GreenConfig()
    arr = np.asarray(points, dtype=np.complex128)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != 4:
        raise GreenInputError(f"expected points of shape (N, 4), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise GreenInputError("NaN or infinite coordinates")
    hmap = F.base
    gz = green_plus_batch(hmap, arr[:, :2], cfg, pool)
    gw = green_minus_batch(hmap, arr[:, 2:], cfg, pool)
    K = int(cfg.tail_refinements) + 1
    depth = np.maximum(gz.escape_iter, gw.escape_iter) + K
    both = (gz.escape_iter >= 0) & (gw.escape_iter >= 0)
    if both.any():
        depth = np.where(both, depth, 0)
        gz = _batch(hmap, arr[:, :2], cfg, "+", pool, depth)
        gw = _batch(hmap, arr[:, 2:], cfg, "-", pool, depth)
    values = np.maximum(gz.values, gw.values)
    errors = np.maximum(gz.errors, gw.errors)
    esc = np.where((gz.escape_iter >= 0) & (gw.escape_iter >= 0),
                   np.minimum(gz.escape_iter, gw.escape_iter),
                   np.maximum(gz.escape_iter, gw.escape_iter))
    return GreenBatch(values, errors, esc, "F")


def green_product(F: ProductMap, zw, cfg=None) -> GreenResult:
    return green_product_batch(F, [zw], cfg)[0]


# --- approximants and convergence ---------------------------------------------

def green_approximants(hmap, points, n_values, side="+", escape_radius_=None):
    """Raw approximants ``d^-n log+ ||f^n z||`` for each n in ``n_values``.

    Orbits that have not entered V+ by step n contribute 0, the same
    convention as the escape-time evaluator.  Returns an array of shape
    ``(len(n_values), N)``.
    """
    arr = _as_points(points)
    n_values = [int(n) for n in n_values]
    if not n_values or min(n_values) < 0:
        raise ValueError("n_values must be nonnegative integers")
    gmap = hmap.swapped_inverse() if side == "-" else hmap
    if side == "-":
        arr = arr[:, ::-1]
    R = escape_radius(hmap) if escape_radius_ is None else escape_radius_
    tables, _ = _factor_tables(gmap)
    d = float(gmap.degree)
    x = arr[:, 0].copy()
    y = arr[:, 1].copy()
    N = len(x)
    logmode = np.abs(y) >= np.maximum(np.abs(x), R)
    L = np.zeros(N)
    w = np.zeros(N, dtype=np.complex128)
    u = np.zeros(N, dtype=np.complex128)
    k = np.flatnonzero(logmode)
    L[k], w[k], u[k] = np.log(np.abs(y[k])), 1 / y[k], x[k] / y[k]
    wanted = set(n_values)
    out = {}
    for n in range(max(n_values) + 1):
        if n in wanted:
            out[n] = np.where(logmode, np.maximum(L, 0.0) * d ** (-n), 0.0)
        for t, f in zip(tables, gmap.factors):
            k = np.flatnonzero(logmode)
            if k.size:
                L[k], w[k], u[k], _ = _log_step(t, L[k], w[k], u[k])
            k = np.flatnonzero(~logmode)
            if k.size:
                xn, yn = f.forward(x[k], y[k])
                x[k], y[k] = xn, yn
                hit = np.abs(yn) >= np.maximum(np.abs(xn), R)
                h = k[hit]
                logmode[h] = True
                L[h], w[h], u[h] = np.log(np.abs(y[h])), 1 / y[h], x[h] / y[h]
    return np.array([out[n] for n in n_values])


@dataclass
class ConvergenceTable:
    n: np.ndarray
    sup_diff: np.ndarray

    def rows(self):
        return list(zip(self.n.tolist(), self.sup_diff.tolist()))


def convergence_scan(hmap, points, n_range, side="+") -> ConvergenceTable:
    """``sup_z |G^(n+1)(z) - G^(n)(z)|`` for each n in ``n_range``."""
    pts = _as_points(points) if len(np.atleast_1d(points)) else None
    if pts is None or pts.shape[0] == 0:
        raise GreenInputError("convergence_scan needs at least one point")
    ns = np.array(sorted(set(int(n) for n in n_range)))
    if ns.size == 0:
        raise ValueError("empty n_range")
    allv = sorted(set(ns.tolist()) | set((ns + 1).tolist()))
    table = green_approximants(hmap, pts, allv, side)
    pos = {n: i for i, n in enumerate(allv)}
    sup = np.array([np.max(np.abs(table[pos[n + 1]] - table[pos[n]])) for n in ns])
    return ConvergenceTable(ns, sup)


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    n_lo: int
    n_hi: int
    zero_entries: int

    @property
    def finite(self) -> bool:
        return self.zero_entries == 0 and math.isfinite(self.slope)


def cauchy_slope(table: ConvergenceTable, n_lo=None, n_hi=None) -> SlopeFit:
    """Least-squares slope of ``log sup_diff`` against n over ``[n_lo, n_hi]``.

    Vanishing differences make the logarithm undefined; the fit then reports
    ``-inf`` rather than silently dropping entries.
    """
    n_lo = int(table.n.min()) if n_lo is None else n_lo
    n_hi = int(table.n.max()) if n_hi is None else n_hi
    sel = (table.n >= n_lo) & (table.n <= n_hi)
    n = table.n[sel].astype(float)
    v = table.sup_diff[sel]
    if n.size < 2:
        raise ValueError("need at least two entries to fit a slope")
    zeros = int(np.sum(v <= 0))
    if zeros:
        return SlopeFit(-math.inf, math.nan, n_lo, n_hi, zeros)
    slope, intercept = np.polyfit(n, np.log(v), 1)
    return SlopeFit(float(slope), float(intercept), n_lo, n_hi, 0)


def julia_membership(hmap, z, cfg=None) -> dict:
    gp = green_plus(hmap, z, cfg)
    gm = green_minus(hmap, z, cfg)
    return {"forward_bounded": gp.escape_iter is None, "backward_bounded": gm.escape_iter is None}


def julia_membership_batch(hmap, points, cfg=None, pool=None):
    gp = green_plus_batch(hmap, points, cfg, pool)
    gm = green_minus_batch(hmap, points, cfg, pool)
    return gp.escape_iter < 0, gm.escape_iter < 0
