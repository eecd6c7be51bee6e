"""Correlation series, decay fits and the d^(-n/2) bound check.

A measure is anything with ``atoms() -> (points, weights)``.  Measures that
carry an exact successor permutation (periodic ensembles) are iterated by
index, which keeps ``phi∘f^n`` exact along the orbits; numerically
iterating a hyperbolic orbit would lose all accuracy within a few dozen
steps.  Other measures are iterated with the map, and atoms whose orbits
leave the finite range are dropped and counted.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientSignal
from .observables import Observable, product_observable

JACKKNIFE_BLOCKS = 32
NORM_LATTICE = 64
NOISE_FACTOR = 3.0


def _lattice(box, per_dim=NORM_LATTICE):
    axes = [np.linspace(lo, hi, per_dim) for lo, hi in box]
    grids = np.meshgrid(*axes, indexing="ij")
    return [g.ravel() for g in grids]


def _box_for(phi: Observable, box):
    box = tuple((float(lo), float(hi)) for lo, hi in box)
    if len(box) == 2 and phi.dim == 4:
        box = box * 2
    if len(box) != phi.dim:
        raise ValueError(f"box has {len(box)} intervals for an observable in {phi.dim} variables")
    return box


def sup_norm(phi: Observable, box) -> float:
    coords = _lattice(_box_for(phi, box), NORM_LATTICE if phi.dim == 2 else 16)
    return float(np.max(np.abs(phi(*coords))))


def c2_norm(phi: Observable, box) -> float:
    """max of sup |phi|, sup |grad phi| and sup |Hess phi| (entrywise) on a lattice."""
    coords = _lattice(_box_for(phi, box), NORM_LATTICE if phi.dim == 2 else 16)
    return float(max(np.max(np.abs(phi(*coords))),
                     np.max(np.abs(phi.gradient(*coords))),
                     np.max(np.abs(phi.hessian(*coords)))))


def normalized(phi: Observable, box) -> Observable:
    """``phi / sup|phi|`` so that ``|phi| <= 1`` on the box lattice."""
    s = sup_norm(phi, box)
    if s == 0:
        return phi
    return phi.scaled(1.0 / s, f"{phi.label}/{s:.6g}")


def _fsum(a) -> float:
    return math.fsum(a)


def _iterated_values(measure, hmap, phi, n_max):
    """Rows ``phi(f^n(atom))`` for n = 0..n_max and a boolean mask of surviving atoms."""
    pts, w = measure.atoms()
    succ = getattr(measure, "successor", None)
    base = phi.evaluate(pts)
    rows = [base]
    alive = np.ones(len(pts), dtype=bool)
    if succ is not None:
        cur = np.arange(len(pts))
        for _ in range(n_max):
            cur = succ[cur]
            rows.append(base[cur])
        return rows, alive
    x = pts[:, 0].astype(np.complex128)
    y = pts[:, 1].astype(np.complex128)
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(n_max):
            x, y = hmap.forward(x, y)
            ok = np.isfinite(x) & np.isfinite(y) & (np.abs(x) < 1e150) & (np.abs(y) < 1e150)
            alive &= ok
            x = np.where(alive, x, 0)
            y = np.where(alive, y, 0)
            vals = np.where(alive, phi.evaluate(np.stack([x, y], axis=1)), 0.0)
            rows.append(vals)
    return rows, alive


def _jackknife_cov(w, P, Pn, Q, blocks, K):
    """Leave-one-block-out covariance estimates (fixed summation order)."""
    def sums(v):
        return np.bincount(blocks, weights=v, minlength=K)

    sw, sp_, sq, spq = sums(w), sums(w * P), sums(w * Q), sums(w * Pn * Q)
    tw, tp, tq, tpq = (np.sum(s) for s in (sw, sp_, sq, spq))
    W = tw - sw
    with np.errstate(invalid="ignore", divide="ignore"):
        est = (tpq - spq) / W - ((tp - sp_) / W) * ((tq - sq) / W)
    return est


@dataclass
class CorrelationSeries:
    entries: np.ndarray  # columns: n, C_n, standard error
    measure: str
    phi: str
    psi: str
    phi_norm: float | None = None
    psi_norm: float | None = None
    escaped_atoms: int = 0
    period: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.entries[:, 0].astype(int)

    @property
    def values(self):
        return self.entries[:, 1]

    @property
    def stderr(self):
        return self.entries[:, 2]

    def __len__(self):
        return len(self.entries)

    @property
    def usable_max_n(self) -> int:
        """Largest lag that is not an artifact of finite periodicity.

        On a period-N ensemble ``C_n(phi, psi) = C_{N-n}(psi, phi)``, so lags
        beyond N/2 only replay earlier ones.
        """
        top = int(self.n.max())
        return top if self.period is None else min(top, self.period // 2)


def correlation_series(measure, hmap, phi: Observable, psi: Observable, n_max: int,
                       blocks: int = JACKKNIFE_BLOCKS) -> CorrelationSeries:
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    pts, w = measure.atoms()
    w = np.asarray(w, dtype=np.float64)
    rows, alive = _iterated_values(measure, hmap, phi, n_max)
    Q = psi.evaluate(pts)
    P = rows[0]
    wa = np.where(alive, w, 0.0)
    bl = np.arange(len(w)) % blocks
    out = np.zeros((n_max + 1, 3))
    out[:, 0] = np.arange(n_max + 1)
    # a constant factor makes every C_n vanish identically; avoid rounding residue
    for n in ([] if phi.is_constant or psi.is_constant else range(n_max + 1)):
        Pn = rows[n]
        c = _cov_shift(wa, P, Pn, Q)
        jk = _jackknife_cov(wa, P, Pn, Q, bl, blocks)
        jk = jk[np.isfinite(jk)]
        se = math.sqrt((len(jk) - 1) / len(jk) * _fsum((jk - jk.mean()) ** 2)) if len(jk) > 1 else 0.0
        out[n] = (n, c, se)
    meta = measure.meta if hasattr(measure, "meta") else {}
    src = meta.get("source", type(measure).__name__)
    period = None
    if isinstance(src, str) and src.startswith("periodic:"):
        period = int(src.split(":")[1])
    return CorrelationSeries(out, src, phi.label, psi.label,
                             escaped_atoms=int(np.sum(~alive)), period=period)


def _cov_shift(w, P, Pn, Q):
    W = _fsum(w)
    return _fsum(w * Pn * Q) / W - (_fsum(w * P) / W) * (_fsum(w * Q) / W)


def correlation(measure, hmap, phi, psi, n):
    """``(C_n, standard error)`` with ``C_n = <(phi∘f^n) psi> - <phi><psi>``."""
    s = correlation_series(measure, hmap, phi, psi, n)
    return float(s.values[n]), float(s.stderr[n])


@dataclass(frozen=True)
class DecayFit:
    rate: float
    intercept: float
    window: tuple
    residual_norm: float

    @property
    def decaying(self) -> bool:
        return 0 < self.rate <= 1


def qualifying_window(series: CorrelationSeries, factor=NOISE_FACTOR, n_hi=None) -> int:
    """Number of leading entries with ``|C_n| > factor * stderr``."""
    k = 0
    top = len(series) if n_hi is None else min(len(series), n_hi + 1)
    while k < top and abs(series.values[k]) > factor * series.stderr[k]:
        k += 1
    return k


def fit_decay(series: CorrelationSeries, min_entries: int = 4, n_hi=None) -> DecayFit:
    """Least squares of ``log|C_n|`` against n on the window above the noise floor."""
    k = qualifying_window(series, n_hi=n_hi)
    if k < min_entries:
        raise InsufficientSignal(f"insufficient-signal: {k} entries above the noise floor, "
                                 f"need {min_entries}")
    n = series.n[:k].astype(float)
    logs = np.log(np.abs(series.values[:k]))
    coef, res, *_ = np.polyfit(n, logs, 1, full=True)
    slope, intercept = coef
    rnorm = float(math.sqrt(res[0])) if len(res) else 0.0
    return DecayFit(float(math.exp(slope)), float(intercept), (int(series.n[0]), int(series.n[k - 1])), rnorm)


@dataclass(frozen=True)
class BoundReport:
    r: np.ndarray
    sup_r: float
    early_max: float
    window: tuple
    passed: bool


def theorem_bound_check(series: CorrelationSeries, d: float, phi_norm: float, psi_norm: float,
                        n_max=None, early: int = 4) -> BoundReport:
    """``r_n = |C_n| d^(n/2) / (|phi| |psi|)``; pass when ``sup r_n <= 2 max(r_0..r_{early-1})``."""
    if not (phi_norm > 0 and psi_norm > 0):
        raise ValueError("norms must be positive")
    top = series.usable_max_n if n_max is None else min(int(n_max), series.usable_max_n)
    sel = series.n <= top
    n = series.n[sel]
    r = np.abs(series.values[sel]) * np.power(float(d), n / 2.0) / (phi_norm * psi_norm)
    early_max = float(np.max(r[:early])) if len(r) else 0.0
    sup_r = float(np.max(r)) if len(r) else 0.0
    return BoundReport(r, sup_r, early_max, (int(n.min()), int(n.max())), sup_r <= 2 * early_max)


@dataclass(frozen=True)
class ProductCheck:
    pairing: float
    reference: float
    gap: float
    scale: float

    @property
    def relative_gap(self) -> float:
        return self.gap / self.scale if self.scale > 0 else self.gap


def product_pairing(first, second, phi: Observable, psi: Observable, pool=None,
                    chunk: int = 256) -> float:
    """``<first ⊗ second, phi(z) psi(w)>`` summed over all pairs of atoms.

    The product observable is evaluated on every pair; chunk partial sums
    are combined with a correctly rounded sum, so the result does not depend
    on the pool size.
    """
    F = product_observable(phi, psi)
    zp, zw = first.atoms()
    wp, ww = second.atoms()

    def part(s):
        zs = zp[s:s + chunk]
        k = len(zs)
        pts = np.concatenate([np.repeat(zs, len(wp), axis=0), np.tile(wp, (k, 1))], axis=1)
        wts = np.repeat(zw[s:s + chunk], len(wp)) * np.tile(ww, k)
        return float(np.sum(wts * F.evaluate(pts)))

    starts = range(0, len(zp), chunk)
    partial = pool.map(part, starts) if pool is not None else [part(s) for s in starts]
    return math.fsum(partial)


def product_measure_check(hmap, phi: Observable, psi: Observable, first, second=None,
                          reference=None, box=None, pool=None) -> ProductCheck:
    """Compare the product-space pairing with ``<mu, phi> <mu, psi>``.

    ``first ⊗ second`` is the product approximation; the reference product
    uses the measures in ``reference`` (default: the same two).
    """
    from .currents import integrate

    second = first if second is None else second
    ref1, ref2 = reference if reference is not None else (first, second)
    pairing = product_pairing(first, second, phi, psi, pool)
    ref = integrate(ref1, phi) * integrate(ref2, psi)
    scale = 1.0
    if box is not None:
        scale = sup_norm(phi, box) * sup_norm(psi, box)
    return ProductCheck(pairing, ref, abs(pairing - ref), scale)
