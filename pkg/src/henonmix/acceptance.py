"""End-to-end acceptance suite on the standard map ``y^2 - 10``, ``a = 1``.

Each criterion returns a ``CriterionResult``; measured values are kept
separate from wall-clock times so that result tables are reproducible.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import green as G
from .currents import default_grid, green_measure, integrate, invariance_defect
from .map_core import build_product, check_regularity, from_factors, standard_map
from .mixing import (c2_norm, correlation_series, fit_decay, normalized, product_measure_check,
                     theorem_bound_check)
from .observables import BATTERY_PAIRS, battery
from .errors import HenonError, InsufficientSignal, SamplerError
from .sampler import NewtonConfig, enumerate_periodic, ensemble_measure


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    measured: dict
    threshold: str
    seconds: float = 0.0
    budget: float | None = None
    note: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        vals = ", ".join(f"{k}={_short(v)}" for k, v in self.measured.items())
        return f"[{status}] criterion {self.number:2d} {self.name}: {vals} (need {self.threshold})"


def _short(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def two_factor_map():
    """Degree-4 composition ``(y^2 - 10, a = 1)`` then ``(y^2 + y/3 - 2, a = 1/2)``."""
    return from_factors([((-10, 0, 1), 1), ((-2, "1/3", 1), "1/2")])


@dataclass
class Context:
    hmap: object = None
    seed: int = 20240611
    pool: object = None
    n_max: int = 60
    tail_refinements: int = 3
    resolution: int = 48
    coarse_resolution: int = 24
    grid_n: int = 10
    grid_n_early: int = 6
    sampler_period: int = 12
    mixing_period: int = 14
    mixing_n_max: int = 20
    cache: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.hmap is None:
            self.hmap = standard_map()

    @property
    def cfg(self):
        return G.GreenConfig(n_max=self.n_max, tail_refinements=self.tail_refinements)

    def rng(self, stream: int):
        return np.random.default_rng([self.seed, stream])

    def cached(self, key, fn):
        if key not in self.cache:
            self.cache[key] = fn()
        return self.cache[key]

    def grid_measure(self, resolution, n):
        return self.cached(("grid", resolution, n), lambda: green_measure(
            self.hmap, default_grid(self.hmap, resolution), n, self.pool))

    def ensemble(self, period):
        return self.cached(("ens", period), lambda: enumerate_periodic(
            self.hmap, period, NewtonConfig(), self.pool))

    def ensemble_measure(self, period):
        return self.cached(("ensm", period), lambda: ensemble_measure(self.ensemble(period)))

    @property
    def box2(self):
        h = 1.2 * G.escape_radius(self.hmap)
        return ((-h, h), (-h, h))


def _random_points(rng, n, half, dim=2):
    P = rng.uniform(-half, half, (n, 2 * dim))
    return P[:, 0::2] + 1j * P[:, 1::2]


def crit_functional_equations(ctx: Context) -> CriterionResult:
    f = ctx.hmap
    d = f.degree
    half = ctx.box2[0][1]
    pts = _random_points(ctx.rng(1), 1000, half)
    gp = G.green_plus_batch(f, pts, ctx.cfg, ctx.pool)
    fz = np.stack(f.forward(pts[:, 0], pts[:, 1]), axis=1)
    gp2 = G.green_plus_batch(f, fz, ctx.cfg, ctx.pool)
    gm = G.green_minus_batch(f, pts, ctx.cfg, ctx.pool)
    bz = np.stack(f.backward(pts[:, 0], pts[:, 1]), axis=1)
    gm2 = G.green_minus_batch(f, bz, ctx.cfg, ctx.pool)
    ep = float(np.max(np.abs(gp2.values - d * gp.values)))
    em = float(np.max(np.abs(gm2.values - d * gm.values)))
    return CriterionResult(1, "functional equations", max(ep, em) <= 1e-8,
                           {"sup_plus": ep, "sup_minus": em}, "both <= 1e-08")


def cauchy_points(ctx: Context, count=200):
    """Escaping points close to K: periodic points moved by log-uniform offsets.

    Such orbits shadow K for a while before escaping, which spreads their
    escape times as far as double precision allows.
    """
    f = ctx.hmap
    rng = ctx.rng(2)
    base = ctx.ensemble(6).points()
    deep = G.GreenConfig(n_max=200)
    out = []
    for _ in range(100 * count):
        if len(out) == count:
            break
        k = rng.integers(len(base))
        delta = 10.0 ** (-rng.uniform(1, 15)) * np.exp(2j * np.pi * rng.uniform())
        z = np.array([base[k, 0] + delta, base[k, 1]], dtype=np.complex128)
        if G.green_plus(f, z, deep).escaped:
            out.append(z)
    if len(out) < count:
        raise SamplerError(f"found only {len(out)} escaping points near K")
    return np.array(out)


def crit_cauchy_rate(ctx: Context) -> CriterionResult:
    f = ctx.hmap
    target = -math.log(f.degree)
    if ctx.n_max < 26:
        return CriterionResult(2, "Green Cauchy rate", False, {"n_max": ctx.n_max},
                               f"slope in {target:.4f} +- 10% over n in [5, 25]",
                               note="horizon shorter than the scan range")
    pts = cauchy_points(ctx)
    table = G.convergence_scan(f, pts, range(5, 26))
    fit = G.cauchy_slope(table, 5, 25)
    ok = fit.finite and abs(fit.slope - target) <= 0.1 * abs(target)
    nz = table.sup_diff > 0
    last = int(table.n[nz].max()) if nz.any() else None
    measured = {"slope": fit.slope, "zero_entries": fit.zero_entries, "last_nonzero_n": last}
    if nz.sum() >= 2:
        prefix = G.cauchy_slope(table, 5, min(last, 25))
        measured["slope_nonzero_prefix"] = prefix.slope
    return CriterionResult(2, "Green Cauchy rate", ok, measured,
                           f"slope in {target:.4f} +- 10% over n in [5, 25]")


def crit_product_identity(ctx: Context) -> CriterionResult:
    f = ctx.hmap
    F = build_product(f)
    half = ctx.box2[0][1]
    q = _random_points(ctx.rng(3), 1000, half, dim=4)
    gF = G.green_product_batch(F, q, ctx.cfg, ctx.pool)
    gp = G.green_plus_batch(f, q[:, :2], ctx.cfg, ctx.pool)
    gm = G.green_minus_batch(f, q[:, 2:], ctx.cfg, ctx.pool)
    e1 = float(np.max(np.abs(gF.values - np.maximum(gp.values, gm.values))))
    zf = np.stack(f.forward(q[:, 0], q[:, 1]), axis=1)
    wb = np.stack(f.backward(q[:, 2], q[:, 3]), axis=1)
    gF2 = G.green_product_batch(F, np.concatenate([zf, wb], axis=1), ctx.cfg, ctx.pool)
    e2 = float(np.max(np.abs(gF2.values - F.degree * gF.values)))
    return CriterionResult(3, "product potential identity", max(e1, e2) <= 1e-8,
                           {"max_identity": e1, "functional": e2}, "both <= 1e-08")


def crit_regularity(ctx: Context) -> CriterionResult:
    reports = {"standard": check_regularity(build_product(ctx.hmap)),
               "two_factor": check_regularity(build_product(two_factor_map()))}
    flags = {f"{k}_{n}": getattr(r, n) for k, r in reports.items()
             for n in ("indeterminacy_disjoint", "plus_avoids_diagonal", "minus_avoids_diagonal")}
    return CriterionResult(4, "regularity of F", all(flags.values()),
                           {"all_checks": all(flags.values()), "d_two_factor": two_factor_map().degree},
                           "checks (i)-(iii) true for both maps")


def crit_measure(ctx: Context) -> CriterionResult:
    m = ctx.grid_measure(ctx.resolution, ctx.grid_n)
    mc = ctx.grid_measure(ctx.coarse_resolution, ctx.grid_n)
    m6 = ctx.grid_measure(ctx.resolution, ctx.grid_n_early)
    phi = battery()["x"]
    d10 = invariance_defect(m, ctx.hmap, phi)
    d6 = invariance_defect(m6, ctx.hmap, phi)
    a = 0.8 <= m.raw_total_mass <= 1.2
    b = m.clamped_mass_fraction < mc.clamped_mass_fraction
    c = d10 <= d6
    measured = {"raw_mass": m.raw_total_mass, "clamped_fine": m.clamped_mass_fraction,
                "clamped_coarse": mc.clamped_mass_fraction, "defect_n6": d6, "defect_n10": d10,
                "mass_ok": a, "clamped_decreases": b, "defect_decreases": c}
    return CriterionResult(5, "measure construction", a and b and c, measured,
                           f"raw mass in [0.8, 1.2]; clamped({ctx.resolution}) < "
                           f"clamped({ctx.coarse_resolution}); "
                           f"defect({ctx.grid_n}) <= defect({ctx.grid_n_early})")


def crit_sampler(ctx: Context) -> CriterionResult:
    ens = ctx.ensemble(ctx.sampler_period)
    saddle = all(o.is_saddle for o in ens.orbits)
    res = max(o.residual for o in ens.orbits)
    mu = ctx.ensemble_measure(ctx.sampler_period)
    defect = max(invariance_defect(mu, ctx.hmap, phi) for phi in battery().values())
    ok = ens.total_points == 2 ** ctx.sampler_period and saddle and res <= 1e-12 and defect <= 1e-12
    return CriterionResult(6, "sampler completeness and invariance", ok,
                           {"points": ens.total_points, "all_saddle": saddle, "max_residual": res,
                            "max_defect": defect},
                           f"{2 ** ctx.sampler_period} points, saddles, residual <= 1e-12, defect <= 1e-12")


def crit_cross_validation(ctx: Context) -> CriterionResult:
    m = ctx.grid_measure(ctx.resolution, ctx.grid_n)
    mu = ctx.ensemble_measure(ctx.sampler_period)
    from .currents import normalize

    mg = normalize(m)
    gaps = {}
    for name, phi in battery().items():
        p = normalized(phi, ctx.box2)
        gaps[name] = abs(integrate(mg, p) - integrate(mu, p))
    worst = max(gaps.values())
    return CriterionResult(7, "grid vs periodic cross-validation", worst <= 0.05,
                           {"max_gap": worst, "worst": max(gaps, key=gaps.get)}, "every gap <= 0.05")


def crit_mixing(ctx: Context) -> CriterionResult:
    mu = ctx.ensemble_measure(ctx.mixing_period)
    B = battery()
    box = ctx.box2
    d = ctx.hmap.degree
    bound_ok = True
    worst_ratio = 0.0
    rates = {}
    window = None
    for a, b in BATTERY_PAIRS:
        s = correlation_series(mu, ctx.hmap, B[a], B[b], ctx.mixing_n_max)
        rep = theorem_bound_check(s, d, c2_norm(B[a], box), c2_norm(B[b], box), n_max=ctx.mixing_n_max)
        window = rep.window
        bound_ok &= rep.passed
        if rep.early_max > 0:
            worst_ratio = max(worst_ratio, rep.sup_r / rep.early_max)
        try:
            rates[f"{a}|{b}"] = fit_decay(s).rate
        except InsufficientSignal:
            pass
    limit = d ** -0.5 * 1.15
    best = min(rates.values()) if rates else None
    fit_ok = best is not None and best <= limit
    return CriterionResult(8, "exponential mixing", bound_ok and fit_ok,
                           {"bound_shape": bound_ok, "max_sup_over_early": worst_ratio,
                            "window": f"{window[0]}..{window[1]}", "fitted_pairs": len(rates),
                            "best_rate": best},
                           f"sup r_n <= 2 max(r_0..r_3) for all pairs; some rate <= {limit:.4f}")


def crit_product_measure(ctx: Context) -> CriterionResult:
    mu = ctx.ensemble_measure(ctx.sampler_period)
    grid = ctx.grid_measure(ctx.resolution, ctx.grid_n)
    from .currents import normalize

    marg = _marginal_measure(normalize(grid))
    B = battery()
    box = ctx.box2
    exact_gap = 0.0
    mixed_gap = 0.0
    for a, b in BATTERY_PAIRS:
        pa, pb = normalized(B[a], box), normalized(B[b], box)
        r1 = product_measure_check(ctx.hmap, pa, pb, mu, pool=ctx.pool)
        r2 = product_measure_check(ctx.hmap, pa, pb, marg, mu, reference=(mu, mu), box=box,
                                   pool=ctx.pool)
        exact_gap = max(exact_gap, r1.gap)
        mixed_gap = max(mixed_gap, r2.relative_gap)
    return CriterionResult(9, "product measure", exact_gap <= 1e-12 and mixed_gap <= 0.05,
                           {"ensemble_gap": exact_gap, "mixed_gap": mixed_gap},
                           "ensemble gap <= 1e-12; grid/ensemble gap <= 0.05")


def _marginal_measure(m):
    from .sampler import DiscreteMeasure

    xs, ys, marg = m.real_marginal()
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([X.ravel() + 0j, Y.ravel() + 0j], axis=1)
    return DiscreteMeasure(pts, marg.ravel(), None, {"source": "grid-marginal"})


CRITERIA = [
    (1, crit_functional_equations, 5.0),
    (2, crit_cauchy_rate, 5.0),
    (3, crit_product_identity, 5.0),
    (4, crit_regularity, 1.0),
    (5, crit_measure, 600.0),
    (6, crit_sampler, 30.0),
    (7, crit_cross_validation, None),
    (8, crit_mixing, 120.0),
    (9, crit_product_measure, 30.0),
]


def run_criterion(ctx: Context, number: int) -> CriterionResult:
    for num, fn, budget in CRITERIA:
        if num == number:
            t = time.perf_counter()
            try:
                res = fn(ctx)
            except (HenonError, ValueError, ArithmeticError) as exc:
                res = CriterionResult(num, fn.__name__.removeprefix("crit_").replace("_", " "),
                                      False, {}, "criterion ran to completion",
                                      note=f"raised {type(exc).__name__}: {exc}")
            res.seconds = time.perf_counter() - t
            res.budget = budget
            if budget is not None and res.seconds > budget:
                res.passed = False
                res.note = f"runtime {res.seconds:.1f}s over budget {budget:.0f}s"
            return res
    raise KeyError(number)


def run_all(ctx: Context, numbers=None):
    """Yield results one criterion at a time."""
    numbers = numbers or [n for n, _, _ in CRITERIA]
    for n in numbers:
        yield run_criterion(ctx, n)
