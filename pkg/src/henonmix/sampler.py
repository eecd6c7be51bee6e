"""Saddle periodic orbits of real quadratic Hénon horseshoes.

Orbits are indexed by binary codes.  Seeds come from the anti-integrable
limit: ``y_j`` is the root of ``p`` selected by bit ``j`` (bit 1 picks the
root above the critical point) and ``x_j = y_{j-1}``.  A damped Newton
iteration on the cyclic system ``f(z_j) = z_{j+1}`` then refines all orbits
of one primitive period together.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CodeMismatch, IncompleteEnsemble, NewtonFailure, NoSeedsError, SamplerError
from .map_core import HenonMap

# --- symbolic codes -----------------------------------------------------------


def _min_rotation(bits: tuple) -> tuple:
    n = len(bits)
    return min(bits[i:] + bits[:i] for i in range(n))


@dataclass(frozen=True, order=True)
class SymbolCode:
    """Cyclic binary word stored as its lexicographically minimal rotation."""

    bits: tuple

    def __post_init__(self):
        bits = self.bits
        if isinstance(bits, str):
            bits = tuple(int(c) for c in bits.strip())
        bits = tuple(int(b) for b in bits)
        if not bits or any(b not in (0, 1) for b in bits):
            raise ValueError("a code is a nonempty word over {0, 1}")
        object.__setattr__(self, "bits", _min_rotation(bits))

    def __len__(self):
        return len(self.bits)

    def __str__(self):
        return "".join(map(str, self.bits))

    @property
    def primitive_period(self) -> int:
        n = len(self.bits)
        for d in range(1, n + 1):
            if n % d == 0 and self.bits[:d] * (n // d) == self.bits:
                return d
        return n

    def primitive(self) -> "SymbolCode":
        return SymbolCode(self.bits[: self.primitive_period])


def necklaces(n: int):
    """Minimal rotations of all binary words of length ``n``, in lexicographic order."""
    if n < 1:
        raise ValueError("period must be >= 1")
    out = []
    a = [0] * (n + 1)

    def gen(t, p):
        if t > n:
            if n % p == 0:
                out.append(tuple(a[1:]))
            return
        a[t] = a[t - p]
        gen(t + 1, p)
        for j in range(a[t - p] + 1, 2):
            a[t] = j
            gen(t + 1, t)

    gen(1, 1)
    return out


# --- horseshoe certificate ---------------------------------------------------

def _real_quadratic(hmap: HenonMap):
    if len(hmap.factors) != 1:
        raise SamplerError("the sampler needs a single Hénon factor")
    f = hmap.factors[0]
    if f.degree != 2 or not hmap.is_real():
        raise SamplerError("the sampler needs a real quadratic factor")
    c0, c1, c2 = (float(np.real(v)) for v in f.p.values)
    return c0, c1, c2, float(np.real(f.a_value))


@dataclass(frozen=True)
class HorseshoeReport:
    certified: bool
    radius: float | None
    strips: tuple
    gap: float
    expansion: float
    reason: str

    @property
    def symbol_threshold(self) -> float:
        """Critical-point distance below which a point's symbol is ambiguous."""
        return self.gap / 2 if self.certified else 0.0


def _strip_geometry(c0, c1, c2, a, r):
    yc = -c1 / (2 * c2)
    s = 1.0 if c2 > 0 else -1.0
    q2, qc = abs(c2), s * (c0 + c1 * yc + c2 * yc * yc)  # q = s*p = q2 (y-yc)^2 + qc
    level = (1 + abs(a)) * r
    if not qc < -level:
        return None, "strips touch at the critical point"
    inner = math.sqrt((-level - qc) / q2)
    outer = math.sqrt((level - qc) / q2)
    lo, hi = yc - outer, yc + outer
    if lo < -r or hi > r:
        return None, "strips do not map across the square"
    strips = ((lo, yc - inner), (yc + inner, hi))
    gap = 2 * inner
    expansion = 2 * q2 * inner
    if expansion <= 1 + abs(a):
        return None, "expansion too weak for the cone condition"
    return (strips, gap, expansion), ""


def horseshoe_check(hmap: HenonMap, box=None, samples: int = 4000) -> HorseshoeReport:
    """Search squares ``[-r, r]^2`` inside ``box`` for a two-strip horseshoe.

    A square is accepted when the set of points it shares with its image
    consists of two disjoint horizontal strips, each stretched across the
    square, with ``min |p'| > 1 + |a|`` on the strips.  This is a heuristic
    certificate evaluated in floating point.
    """
    c0, c1, c2, a = _real_quadratic(hmap)
    if a == 0:
        raise ValueError("a = 0 is not a Hénon factor")
    if box is None:
        from .green import escape_radius

        half = escape_radius(hmap)
    elif np.isscalar(box):
        half = float(box)
    else:
        half = min(min(abs(lo), abs(hi)) for lo, hi in box)
    reason = "no square passed"
    for r in np.linspace(half / samples, half, samples):
        geo, why = _strip_geometry(c0, c1, c2, a, float(r))
        if geo is not None:
            strips, gap, expansion = geo
            return HorseshoeReport(True, float(r), strips, gap, expansion, "")
        reason = why
    return HorseshoeReport(False, None, (), 0.0, 0.0, f"uncertified: {reason}")


# --- seeds and Newton ----------------------------------------------------------

def seed_orbit(code, hmap: HenonMap) -> np.ndarray:
    """Anti-integrable seed, shape (n, 2) real; ``code`` is used as given (not rotated)."""
    bits = _bits(code)
    c0, c1, c2, _ = _real_quadratic(hmap)
    disc = c1 * c1 - 4 * c2 * c0
    if disc <= 0:
        raise NoSeedsError("no anti-integrable seeds: p has no two real roots")
    yc = -c1 / (2 * c2)
    half = math.sqrt(disc) / (2 * abs(c2))
    y = np.array([yc + half if b else yc - half for b in bits])
    return np.stack([np.roll(y, 1), y], axis=1)


def _bits(code):
    if isinstance(code, SymbolCode):
        return code.bits
    if isinstance(code, str):
        return tuple(int(c) for c in code)
    return tuple(int(b) for b in code)


@dataclass(frozen=True)
class NewtonConfig:
    tol: float = 1e-12
    max_iters: int = 200
    max_halvings: int = 20
    polish: bool = True


@dataclass
class PeriodicOrbit:
    points: np.ndarray
    code: SymbolCode
    residual: float
    multipliers: tuple
    iterations: int = 0

    @property
    def period(self) -> int:
        return len(self.points)

    @property
    def is_saddle(self) -> bool:
        return self.multipliers[0] > 1 > self.multipliers[1]

    @property
    def min_separation(self) -> float:
        p = self.points
        if len(p) < 2:
            return math.inf
        diff = np.abs(p[:, None, :] - p[None, :, :]).max(axis=2)
        return float(diff[~np.eye(len(p), dtype=bool)].min())


def _residuals(hmap, Z):
    """Z: (B, n, 2) real.  Returns F (B, n, 2) with F_j = f(z_j) - z_{j+1}."""
    fx, fy = hmap.forward(Z[..., 0].astype(np.complex128), Z[..., 1].astype(np.complex128))
    img = np.stack([fx.real, fy.real], axis=-1)
    return img - np.roll(Z, -1, axis=1)


def _jacobians(hmap, Z):
    J = hmap.jacobian(Z[..., 0].astype(np.complex128), Z[..., 1].astype(np.complex128))
    return J.real


def _newton_step(hmap, Z, F):
    B, n, _ = Z.shape
    J = _jacobians(hmap, Z)
    M = np.zeros((B, 2 * n, 2 * n))
    for j in range(n):
        M[:, 2 * j:2 * j + 2, 2 * j:2 * j + 2] = J[:, j]
        k = (j + 1) % n
        M[:, 2 * j:2 * j + 2, 2 * k:2 * k + 2] -= np.eye(2)
    delta = np.linalg.solve(M, -F.reshape(B, 2 * n, 1))
    return delta.reshape(B, n, 2)


def _maxres(F):
    return np.abs(F).reshape(F.shape[0], -1).max(axis=1)


def refine_batch(hmap, seeds, cfg: NewtonConfig | None = None):
    """Damped Newton for a stack of seeds of equal length, shape (B, n, 2).

    Returns ``(Z, residual, iterations)``; orbits that fail keep their last
    iterate and a residual above tolerance.
    """
    cfg = cfg or NewtonConfig()
    Z = np.array(seeds, dtype=np.float64)
    if Z.ndim != 3 or Z.shape[2] != 2 or Z.shape[1] < 1:
        raise ValueError("seeds must have shape (B, n, 2) with n >= 1")
    F = _residuals(hmap, Z)
    res = _maxres(F)
    iters = np.zeros(len(Z), dtype=np.int64)
    active = res > cfg.tol
    for _ in range(cfg.max_iters):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        delta = _newton_step(hmap, Z[idx], F[idx])
        lam = np.ones(idx.size)
        trial = Z[idx] + delta
        Ft = _residuals(hmap, trial)
        rt = _maxres(Ft)
        for _h in range(cfg.max_halvings):
            worse = ~(rt <= res[idx])
            if not worse.any():
                break
            lam[worse] *= 0.5
            w = np.flatnonzero(worse)
            trial[w] = Z[idx[w]] + lam[w, None, None] * delta[w]
            Ft[w] = _residuals(hmap, trial[w])
            rt[w] = _maxres(Ft[w])
        Z[idx], F[idx], res[idx] = trial, Ft, rt
        iters[idx] += 1
        active[idx] = rt > cfg.tol
    if cfg.polish:
        ok = np.flatnonzero(res <= cfg.tol)
        if ok.size:
            trial = Z[ok] + _newton_step(hmap, Z[ok], F[ok])
            Ft = _residuals(hmap, trial)
            rt = _maxres(Ft)
            better = rt <= res[ok]
            b = ok[better]
            Z[b], F[b], res[b] = trial[better], Ft[better], rt[better]
    return Z, res, iters


def cycle_multipliers(hmap, points) -> tuple:
    """Eigenvalue moduli (max, min) of the Jacobian product around the cycle."""
    pts = np.asarray(points, dtype=np.float64)
    J = _jacobians(hmap, pts[None])[0]
    M = np.eye(2)
    for Jj in J:
        M = Jj @ M
    lam_max = float(np.max(np.abs(np.linalg.eigvals(M))))
    det = abs(hmap.jacobian_det) ** len(pts)
    return lam_max, float(det / lam_max) if lam_max > 0 else math.inf


def symbols_of(hmap, points) -> tuple:
    c0, c1, c2, _ = _real_quadratic(hmap)
    yc = -c1 / (2 * c2)
    return tuple(int(y > yc) for y in np.asarray(points)[:, 1])


def _symbol_margin(hmap, points) -> float:
    c0, c1, c2, _ = _real_quadratic(hmap)
    return float(np.min(np.abs(np.asarray(points)[:, 1] + c1 / (2 * c2))))


def _make_orbit(hmap, Z, res, iters, bits, cfg, threshold):
    if not res <= cfg.tol:
        raise NewtonFailure(f"Newton did not converge for code {''.join(map(str, bits))}: "
                            f"residual {res:.3e}", residual=float(res), code=bits)
    got = symbols_of(hmap, Z)
    if got != tuple(bits) or _symbol_margin(hmap, Z) < threshold:
        raise CodeMismatch(f"code-mismatch: requested {''.join(map(str, bits))}, "
                           f"orbit has {''.join(map(str, got))}", residual=float(res), code=bits)
    return PeriodicOrbit(Z.copy(), SymbolCode(bits), float(res), cycle_multipliers(hmap, Z), int(iters))


def refine_orbit(hmap, seeds, cfg: NewtonConfig | None = None, code=None) -> PeriodicOrbit:
    """Refine one seed orbit (shape (n, 2)); the code defaults to the seed's symbols."""
    cfg = cfg or NewtonConfig()
    seeds = np.asarray(seeds, dtype=np.float64)
    if seeds.ndim != 2 or seeds.shape[1] != 2 or len(seeds) < 1:
        raise ValueError("seeds must have shape (n, 2) with n >= 1")
    bits = _bits(code) if code is not None else symbols_of(hmap, seeds)
    Z, res, it = refine_batch(hmap, seeds[None], cfg)
    return _make_orbit(hmap, Z[0], res[0], it[0], bits, cfg, 0.0)


# --- ensembles -----------------------------------------------------------------

@dataclass
class PeriodicEnsemble:
    period: int
    orbits: list
    failures: list = field(default_factory=list)
    certified: bool = True

    @property
    def expected_points(self) -> int:
        return 2 ** self.period

    @property
    def expected_orbits(self) -> int:
        return len(necklaces(self.period))

    @property
    def total_points(self) -> int:
        return sum(o.period for o in self.orbits)

    @property
    def complete(self) -> bool:
        return not self.failures and self.total_points == self.expected_points

    def points(self) -> np.ndarray:
        return np.concatenate([o.points for o in self.orbits]) if self.orbits else np.zeros((0, 2))

    def rows(self):
        """(code, point index, x, y, multiplier_max, multiplier_min, residual)."""
        for o in self.orbits:
            for j, (x, y) in enumerate(o.points):
                yield str(o.code), j, float(x), float(y), o.multipliers[0], o.multipliers[1], o.residual


def enumerate_periodic(hmap, n: int, cfg: NewtonConfig | None = None, pool=None,
                       override: bool = False) -> PeriodicEnsemble:
    """All points of ``f^n = id`` organized by primitive orbit and canonical code."""
    cfg = cfg or NewtonConfig()
    report = horseshoe_check(hmap)
    if not report.certified and not override:
        raise SamplerError(f"horseshoe check failed ({report.reason}); pass override to run anyway")
    threshold = report.symbol_threshold
    codes = [SymbolCode(b).bits for b in necklaces(n)]
    by_period = {}
    for b in codes:
        d = SymbolCode(b).primitive_period
        by_period.setdefault(d, []).append(b[:d])

    groups = []
    for d in sorted(by_period):
        words = by_period[d]
        for s in range(0, len(words), 256):
            groups.append(words[s:s + 256])

    def work(words):
        seeds = np.stack([seed_orbit(w, hmap) for w in words])
        Z, res, it = refine_batch(hmap, seeds, cfg)
        out = []
        for k, w in enumerate(words):
            try:
                out.append((w, _make_orbit(hmap, Z[k], res[k], it[k], w, cfg, threshold)))
            except NewtonFailure as exc:
                out.append((w, exc))
        return out

    results = (pool.map(work, groups) if pool is not None else [work(g) for g in groups])
    found = {}
    failures = []
    for chunk in results:
        for w, item in chunk:
            if isinstance(item, Exception):
                failures.append((str(SymbolCode(w)), str(item)))
            else:
                found[item.code] = item
    orbits = [found[SymbolCode(b[:SymbolCode(b).primitive_period])] for b in codes
              if SymbolCode(b[:SymbolCode(b).primitive_period]) in found]
    for o in orbits:
        if not o.is_saddle or o.min_separation <= 1e-8:
            failures.append((str(o.code), "orbit is not a separated saddle"))
    return PeriodicEnsemble(n, orbits, failures, report.certified)


@dataclass
class DiscreteMeasure:
    """Weighted atoms; ``successor[i]`` is the atom that ``f`` maps atom ``i`` to."""

    points: np.ndarray
    weights: np.ndarray
    successor: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def atoms(self):
        return self.points, self.weights

    @property
    def total_mass(self) -> float:
        return math.fsum(self.weights)

    def pushforward(self) -> "DiscreteMeasure":
        if self.successor is None:
            raise SamplerError("pushforward needs the successor permutation")
        w = np.empty_like(self.weights)
        w[self.successor] = self.weights
        return DiscreteMeasure(self.points.copy(), w, self.successor, dict(self.meta))


def ensemble_measure(ens: PeriodicEnsemble, allow_incomplete: bool = False) -> DiscreteMeasure:
    """Uniform weights on all points of the ensemble, with the exact successor map."""
    if not ens.complete and not allow_incomplete:
        raise IncompleteEnsemble(f"ensemble of period {ens.period} is incomplete: "
                                 f"{ens.total_points}/{ens.expected_points} points, "
                                 f"{len(ens.failures)} failures")
    pts = ens.points().astype(np.complex128)
    succ = []
    base = 0
    for o in ens.orbits:
        d = o.period
        succ.extend(base + (j + 1) % d for j in range(d))
        base += d
    N = len(pts)
    if N == 0:
        raise IncompleteEnsemble("empty ensemble")
    w = np.full(N, 1.0 / N)
    return DiscreteMeasure(pts, w, np.array(succ, dtype=np.int64),
                           {"source": f"periodic:{ens.period}", "complete": ens.complete})
