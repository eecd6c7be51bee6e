"""Grid realization of dd^c G± and of the wedge measure dd^c G+ ∧ dd^c G-.

The grid is cell-centered on a box in real coordinates
``(Re x, Im x, Re y, Im y)``.  Hessians use central differences with the
cell size as step, so potentials are needed one layer beyond the output
region; the output grid is the input grid with one cell stripped off each
side.  ``dd^c = (i/pi) ∂∂̄``, so for real (1,1) forms the wedge density with
respect to Lebesgue measure is ``(4/pi^2) D`` with

    D = u_11 v_22 + u_22 v_11 - 2 Re(u_12 conj(v_12)).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import BoundaryLayerError, GridMismatchError, ZeroMassError
from .green import GreenConfig, escape_radius, green_minus_batch, green_plus_batch
from .parallel import chunked_apply, exact_sum

WEDGE_CONST = 4.0 / math.pi**2


@dataclass(frozen=True)
class GridSpec:
    box: tuple  # four (lo, hi) pairs for Re x, Im x, Re y, Im y
    resolution: tuple

    def __post_init__(self):
        box = tuple((float(lo), float(hi)) for lo, hi in self.box)
        res = tuple(int(r) for r in self.resolution)
        if len(box) != 4 or len(res) != 4:
            raise ValueError("a grid needs four intervals and four resolutions")
        if any(hi <= lo for lo, hi in box):
            raise ValueError("box intervals must have positive length")
        if any(r < 1 for r in res):
            raise ValueError("resolutions must be positive")
        object.__setattr__(self, "box", box)
        object.__setattr__(self, "resolution", res)

    @property
    def spacing(self) -> tuple:
        return tuple((hi - lo) / r for (lo, hi), r in zip(self.box, self.resolution))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def shape(self) -> tuple:
        return self.resolution

    @property
    def size(self) -> int:
        return int(np.prod(self.resolution))

    def centers(self, axis) -> np.ndarray:
        (lo, _), h, r = self.box[axis], self.spacing[axis], self.resolution[axis]
        return lo + h * (np.arange(r) + 0.5)

    def center_points(self, flat=slice(None)) -> np.ndarray:
        """Complex points ``(x, y)`` at cell centers, row-major order, shape (N, 2)."""
        idx = np.arange(self.size)[flat]
        i0, i1, i2, i3 = np.unravel_index(idx, self.resolution)
        c = [self.centers(k) for k in range(4)]
        return np.stack([c[0][i0] + 1j * c[1][i1], c[2][i2] + 1j * c[3][i3]], axis=1)

    def cell_center(self, cell) -> np.ndarray:
        c = [self.centers(k)[i] for k, i in enumerate(cell)]
        return np.array([c[0] + 1j * c[1], c[2] + 1j * c[3]])

    def interior(self) -> "GridSpec":
        """Grid with one cell layer removed on every side."""
        if min(self.resolution) < 3:
            raise BoundaryLayerError("grid too small to have an interior")
        h = self.spacing
        box = tuple((lo + hk, hi - hk) for (lo, hi), hk in zip(self.box, h))
        return GridSpec(box, tuple(r - 2 for r in self.resolution))

    def refine(self, k: int) -> "GridSpec":
        return GridSpec(self.box, tuple(r * k for r in self.resolution))


def default_grid(hmap, resolution=48, scale=1.2) -> GridSpec:
    """Cube ``[-scale R, scale R]^4`` with R the escape radius; [-6, 6]^4 for the standard map."""
    half = scale * escape_radius(hmap)
    return GridSpec(((-half, half),) * 4, (resolution,) * 4)


def cube_grid(half_width, resolution) -> GridSpec:
    return GridSpec(((-half_width, half_width),) * 4, (resolution,) * 4)


@dataclass
class ScalarField:
    grid: GridSpec
    values: np.ndarray
    kind: str = "test"
    n: int | None = None
    error_bound: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != self.grid.shape:
            raise GridMismatchError(f"values of shape {self.values.shape} on grid {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")
        if self.kind in ("G+", "G-") and np.any(self.values < 0):
            raise ValueError("Green fields are nonnegative")


def field_from_function(grid: GridSpec, fn) -> ScalarField:
    """Tabulate ``fn(x, y)`` (complex arrays) at the cell centers."""
    c = [grid.centers(k) for k in range(4)]
    A, B, C, D = np.meshgrid(*c, indexing="ij", sparse=True)
    vals = np.broadcast_to(np.real(fn(A + 1j * B, C + 1j * D)), grid.shape)
    return ScalarField(grid, np.array(vals, dtype=np.float64))


def sample_field(hmap, grid: GridSpec, side: str, n: int, pool=None, cfg=None) -> ScalarField:
    """Tabulate G+^(n) or G-^(n) with horizon ``n`` at the cell centers."""
    if side not in ("+", "-"):
        raise ValueError("side must be '+' or '-'")
    base = cfg or GreenConfig()
    cfg = GreenConfig(n_max=n, escape_radius=base.escape_radius, tail_refinements=base.tail_refinements)
    fn = green_plus_batch if side == "+" else green_minus_batch

    chunk = 1 << 16

    def run(sl):
        res = fn(hmap, grid.center_points(sl), cfg)
        return res.values, float(res.errors.max(initial=0.0))

    parts = chunked_apply(pool, run, grid.size, chunk)
    vals = np.concatenate([p[0] for p in parts]).reshape(grid.shape)
    err = max(p[1] for p in parts)
    return ScalarField(grid, vals, "G" + side, n, err)


# --- discrete complex Hessian ------------------------------------------------

def _shift(f, offsets):
    """Interior view of ``f`` displaced by ``offsets`` (each -1, 0 or 1)."""
    sl = tuple(slice(1 + o, f.shape[k] - 1 + o) for k, o in enumerate(offsets))
    return f[sl]


def _unit(axis, s=1):
    o = [0, 0, 0, 0]
    o[axis] = s
    return o


def _second(f, h, axis):
    c = _shift(f, (0, 0, 0, 0))
    return ((_shift(f, _unit(axis, 1)) + _shift(f, _unit(axis, -1))) - 2 * c) / (h[axis] * h[axis])


def _mixed(f, h, a, b):
    def sh(sa, sb):
        o = [0, 0, 0, 0]
        o[a], o[b] = sa, sb
        return _shift(f, o)

    return ((sh(1, 1) + sh(-1, -1)) - (sh(1, -1) + sh(-1, 1))) / (4 * h[a] * h[b])


def hessian_components(values: np.ndarray, h) -> tuple:
    """``(u_11, u_22, Re u_12, Im u_12)`` on the interior of ``values``.

    Axes are (Re z1, Im z1, Re z2, Im z2) = (a, b, c, e); with
    ``∂z = (∂_re - i ∂_im)/2`` one gets
    ``u_11 = (u_aa + u_bb)/4`` and ``u_12 = (u_ac + u_be + i (u_ae - u_bc))/4``.
    """
    u11 = 0.25 * (_second(values, h, 0) + _second(values, h, 1))
    u22 = 0.25 * (_second(values, h, 2) + _second(values, h, 3))
    r12 = 0.25 * (_mixed(values, h, 0, 2) + _mixed(values, h, 1, 3))
    i12 = 0.25 * (_mixed(values, h, 0, 3) - _mixed(values, h, 1, 2))
    return u11, u22, r12, i12


def complex_hessian(fld: ScalarField, cell) -> np.ndarray:
    """2x2 Hermitian matrix ``∂²u/∂z_j∂z̄_k`` at one cell."""
    cell = tuple(int(c) for c in cell)
    if len(cell) != 4:
        raise ValueError("cell index needs four entries")
    res = fld.grid.resolution
    if any(c < 1 or c > r - 2 for c, r in zip(cell, res)):
        raise BoundaryLayerError(f"boundary-layer: cell {cell} has no full stencil on grid {res}")
    sl = tuple(slice(c - 1, c + 2) for c in cell)
    u11, u22, r12, i12 = (np.asarray(c).reshape(()) for c in
                          hessian_components(fld.values[sl], fld.grid.spacing))
    u12 = complex(r12, i12)
    return np.array([[float(u11), u12], [u12.conjugate(), float(u22)]])


# --- measures ----------------------------------------------------------------

@dataclass
class CellMeasure:
    grid: GridSpec
    masses: np.ndarray
    clamped_mass_fraction: float = 0.0
    raw_total_mass: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.masses = np.asarray(self.masses, dtype=np.float64)
        if self.masses.shape != self.grid.shape:
            raise GridMismatchError("mass array does not match the grid")
        if np.any(self.masses < 0):
            raise ValueError("cell masses must be nonnegative")
        if self.raw_total_mass is None:
            self.raw_total_mass = self.total_mass

    @property
    def total_mass(self) -> float:
        return exact_sum(self.masses)

    def atoms(self):
        return self.grid.center_points(), self.masses.ravel()

    def real_marginal(self):
        """Masses summed over the imaginary axes: ``(re_x centers, re_y centers, 2-D masses)``."""
        res = self.grid.resolution
        marg = np.empty((res[0], res[2]))
        for i in range(res[0]):
            for j in range(res[2]):
                marg[i, j] = math.fsum(self.masses[i, :, j, :].ravel())
        return self.grid.centers(0), self.grid.centers(2), marg


def wedge_density(u: ScalarField, v: ScalarField) -> CellMeasure:
    """Cell masses of ``dd^c u ∧ dd^c v`` on the interior grid; negatives clamped."""
    if u.grid != v.grid:
        raise GridMismatchError("wedge_density needs both fields on the same grid")
    grid = u.grid
    out_grid = grid.interior()
    h = grid.spacing
    u11, u22, ur, ui = hessian_components(u.values, h)
    v11, v22, vr, vi = hessian_components(v.values, h)
    D = (u11 * v22 + u22 * v11) - 2 * (ur * vr + ui * vi)
    raw = (WEDGE_CONST * out_grid.cell_volume) * D
    pos = np.where(raw > 0, raw, 0.0)
    neg_mass = exact_sum(np.where(raw < 0, -raw, 0.0))
    pos_mass = exact_sum(pos)
    denom = pos_mass + neg_mass
    meta = {"kinds": (u.kind, v.kind), "n": (u.n, v.n)}
    return CellMeasure(out_grid, pos, neg_mass / denom if denom > 0 else 0.0,
                       exact_sum(raw), meta)


def green_measure(hmap, grid: GridSpec, n: int, pool=None) -> CellMeasure:
    """``mu_n = dd^c G+^(n) ∧ dd^c G-^(n)`` on the interior of ``grid``."""
    u = sample_field(hmap, grid, "+", n, pool)
    v = sample_field(hmap, grid, "-", n, pool)
    m = wedge_density(u, v)
    m.meta.update(n=n, source="grid", field_error=max(u.error_bound, v.error_bound))
    return m


def normalize(m: CellMeasure) -> CellMeasure:
    total = m.total_mass
    if not total > 0:
        raise ZeroMassError("cannot normalize a measure of zero mass")
    if abs(total - 1.0) <= 4 * np.finfo(float).eps:
        return replace(m, masses=m.masses.copy(), meta=dict(m.meta))
    return replace(m, masses=m.masses / total, meta=dict(m.meta, normalized_from=total))


def _evaluate(phi, points):
    if hasattr(phi, "evaluate"):
        return np.asarray(phi.evaluate(points), dtype=np.float64)
    return np.real(np.asarray(phi(points[:, 0], points[:, 1]))).astype(np.float64) * np.ones(len(points))


def integrate(m, phi) -> float:
    """``sum_cells mass * phi(center)``; also accepts any measure with ``atoms()``."""
    pts, w = m.atoms()
    return exact_sum(w * _evaluate(phi, pts))


def invariance_defect(m, hmap, phi) -> float:
    """``|∫ phi∘f dm - ∫ phi dm|`` with ``f`` evaluated on the atoms."""
    pts, w = m.atoms()
    fx, fy = hmap.forward(pts[:, 0], pts[:, 1])
    img = np.stack([fx, fy], axis=1)
    return abs(exact_sum(w * _evaluate(phi, img)) - exact_sum(w * _evaluate(phi, pts)))
