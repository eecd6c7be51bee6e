"""Command-line entry point: ``henonmix <subcommand>``.

Exit codes: 0 success, 2 usage or input error, 3 numeric failure,
4 acceptance failure.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import green as G
from .config import ConfigError, RunConfig, config_reference, from_dict, load_config
from .currents import cube_grid, green_measure, invariance_defect, normalize
from .errors import HenonError, MapFileError
from .map_core import build_product, check_regularity, indeterminacy, standard_map
from .mapfile import load_map
from .observables import Observable, ObservableSyntaxError, battery
from .output import read_cells, write_cells, write_csv, write_pgm
from .parallel import WorkerPool
from .sampler import NewtonConfig, enumerate_periodic, ensemble_measure

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_ACCEPTANCE = 0, 2, 3, 4


class UsageError(Exception):
    pass


class NumericFailure(Exception):
    pass


class AcceptanceFailed(Exception):
    pass


# --- shared helpers ------------------------------------------------------------

def _map(cfg: RunConfig):
    if cfg.map is None:
        return standard_map()
    if not Path(cfg.map).exists():
        raise UsageError(f"map file not found: {cfg.map}")
    return load_map(cfg.map)


def _green_cfg(cfg: RunConfig, n_max=None):
    return G.GreenConfig(n_max=n_max or cfg.green.n_max, escape_radius=cfg.green.escape_radius,
                         tail_refinements=cfg.green.tail_refinements)


def _out(cfg: RunConfig) -> Path:
    p = Path(cfg.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _half(hmap, value):
    return value if value is not None else 1.2 * G.escape_radius(hmap)


def _slice_points(hmap, res, half, plane="real"):
    """Cell-centered ``res x res`` slice; rows run over the second coordinate."""
    c = -half + (2 * half / res) * (np.arange(res) + 0.5)
    U, V = np.meshgrid(c, c, indexing="xy")
    if plane == "real":
        x, y = U + 0j, V + 0j
    elif plane == "x":
        x, y = U + 1j * V, np.zeros_like(U) + 0j
    else:
        x, y = np.zeros_like(U) + 0j, U + 1j * V
    return np.stack([x.ravel(), y.ravel()], axis=1)


def _read_points(path):
    pts = []
    for k, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#") or line[0].isalpha():
            continue
        try:
            vals = [float(v) for v in line.split(",")]
        except ValueError:
            raise UsageError(f"{path}:{k}: expected four numbers x_re,x_im,y_re,y_im") from None
        if len(vals) != 4:
            raise UsageError(f"{path}:{k}: expected four numbers x_re,x_im,y_re,y_im")
        pts.append((vals[0] + 1j * vals[1], vals[2] + 1j * vals[3]))
    if not pts:
        raise UsageError(f"{path}: no points")
    return np.array(pts)


def _parse_obs(text):
    try:
        return Observable.parse(text)
    except ObservableSyntaxError as exc:
        raise UsageError(f"observable {text!r}: {exc}") from None


# --- subcommands ------------------------------------------------------------------

def cmd_info(cfg: RunConfig, pool=None, stream=None) -> dict:
    stream = stream or sys.stdout
    hmap = _map(cfg)
    F = build_product(hmap)
    rep = check_regularity(F)
    info = {
        "degree": hmap.degree,
        "inverse_degree": hmap.inverse_degree,
        "jacobian": _cplx(hmap.jacobian_det),
        "I_plus": str(indeterminacy(hmap, "+")),
        "I_minus": str(indeterminacy(hmap, "-")),
        "I_plus_F": str(indeterminacy(F, "+")),
        "I_minus_F": str(indeterminacy(F, "-")),
        "indeterminacy_disjoint": rep.indeterminacy_disjoint,
        "plus_avoids_diagonal": rep.plus_avoids_diagonal,
        "minus_avoids_diagonal": rep.minus_avoids_diagonal,
        "regular": rep.regular,
        "escape_radius": G.escape_radius(hmap),
    }
    for k, v in info.items():
        print(f"{k:24s} {v}", file=stream)
    return info


def _cplx(z):
    z = complex(z)
    return f"{z.real:g}" if z.imag == 0 else f"{z.real:g}{z.imag:+g}i"


GREEN_COLUMNS = ["x_re", "x_im", "y_re", "y_im", "G_plus", "err_plus", "G_minus", "err_minus"]


def cmd_green(cfg: RunConfig, pool=None, points_file=None, command="green") -> Path:
    hmap = _map(cfg)
    if points_file:
        pts = _read_points(points_file)
    else:
        pts = _slice_points(hmap, cfg.green.slice_resolution, _half(hmap, cfg.green.slice_half_width))
    gc = _green_cfg(cfg)
    gp = G.green_plus_batch(hmap, pts, gc, pool)
    gm = G.green_minus_batch(hmap, pts, gc, pool)
    rows = [(z.real, z.imag, w.real, w.imag, a, ea, b, eb)
            for (z, w), a, ea, b, eb in zip(pts, gp.values, gp.errors, gm.values, gm.errors)]
    return write_csv(_out(cfg) / "green.csv", GREEN_COLUMNS, rows, cfg.to_dict(), command)


def _measure_summary(hmap, m):
    rows = [("raw_total_mass", m.raw_total_mass), ("total_mass", m.total_mass),
            ("clamped_mass_fraction", m.clamped_mass_fraction)]
    mn = normalize(m)
    for name, phi in battery().items():
        rows.append((f"invariance_defect[{name}]", invariance_defect(mn, hmap, phi)))
    return rows


def cmd_measure(cfg: RunConfig, pool=None, command="measure"):
    hmap = _map(cfg)
    half = _half(hmap, cfg.grid.half_width)
    grid = cube_grid(half, cfg.grid.resolution)
    m = green_measure(hmap, grid, cfg.grid.n, pool)
    out = _out(cfg)
    cells = write_cells(out / "measure.cells", m, cfg.to_dict(), command, {"n": cfg.grid.n})
    summary = write_csv(out / "measure_summary.csv", ["quantity", "value"],
                        _measure_summary(hmap, m), cfg.to_dict(), command)
    return cells, summary


PERIODIC_COLUMNS = ["code", "point", "x", "y", "multiplier_max", "multiplier_min", "residual"]


def _newton(cfg):
    return NewtonConfig(tol=cfg.sampler.tol, max_iters=cfg.sampler.max_iters,
                        max_halvings=cfg.sampler.max_halvings)


def cmd_periodic(cfg: RunConfig, pool=None, command="periodic"):
    hmap = _map(cfg)
    n = cfg.sampler.period
    ens = enumerate_periodic(hmap, n, _newton(cfg), pool, override=cfg.sampler.override)
    extra = [f"period: {n}", f"points: {ens.total_points} of {ens.expected_points}",
             f"complete: {str(ens.complete).lower()}"]
    extra += [f"failure: {code}: {msg}" for code, msg in ens.failures]
    path = write_csv(_out(cfg) / f"periodic_{n}.csv", PERIODIC_COLUMNS, ens.rows(),
                     cfg.to_dict(), command, extra)
    if not ens.complete:
        raise NumericFailure(f"period-{n} ensemble incomplete ({ens.total_points}/"
                             f"{ens.expected_points} points, {len(ens.failures)} failures)")
    return path, ens


def _mix_measure(cfg, hmap, pool):
    src = cfg.mixing.measure or f"periodic:{cfg.mixing.period}"
    if src.startswith("periodic:"):
        try:
            n = int(src.split(":", 1)[1])
        except ValueError:
            raise UsageError(f"bad measure source {src!r}") from None
        ens = enumerate_periodic(hmap, n, _newton(cfg), pool, override=cfg.sampler.override)
        return ensemble_measure(ens), src
    if not Path(src).exists():
        raise UsageError(f"measure file not found: {src}")
    m, _ = read_cells(src)
    return normalize(m), src


MIX_COLUMNS = ["pair", "n", "C_n", "stderr", "r_n"]


def cmd_mix(cfg: RunConfig, pool=None, command="mix"):
    from .errors import InsufficientSignal
    from .mixing import c2_norm, correlation_series, fit_decay, theorem_bound_check

    hmap = _map(cfg)
    mu, src = _mix_measure(cfg, hmap, pool)
    half = _half(hmap, cfg.grid.half_width)
    box = ((-half, half), (-half, half))
    d = hmap.degree
    rows, report = [], {"measure": src, "degree": d, "pairs": []}
    for k, (a, b) in enumerate(cfg.mixing.pairs):
        phi, psi = _parse_obs(a), _parse_obs(b)
        s = correlation_series(mu, hmap, phi, psi, cfg.mixing.n_max)
        na, nb = c2_norm(phi, box), c2_norm(psi, box)
        rep = theorem_bound_check(s, d, na, nb) if na > 0 and nb > 0 else None
        r_all = np.abs(s.values) * np.power(float(d), s.n / 2.0) / (na * nb) if na * nb > 0 else s.values * 0
        label = f"{phi.label} | {psi.label}"
        for (n, c, se), r in zip(s.entries, r_all):
            rows.append((label, int(n), c, se, r))
        try:
            fit = fit_decay(s)
            fit_d = {"rate": fit.rate, "intercept": fit.intercept, "window": list(fit.window)}
        except InsufficientSignal as exc:
            fit_d = {"error": str(exc)}
        report["pairs"].append({
            "phi": phi.label, "psi": psi.label, "phi_c2": na, "psi_c2": nb,
            "sup_r": rep.sup_r if rep else 0.0, "early_max_r": rep.early_max if rep else 0.0,
            "usable_window": list(rep.window) if rep else None,
            "bound_shape": bool(rep.passed) if rep else True, "fit": fit_d,
            "escaped_atoms": s.escaped_atoms,
        })
    report["bound_shape_all"] = all(p["bound_shape"] for p in report["pairs"])
    out = _out(cfg)
    path = write_csv(out / "mix.csv", MIX_COLUMNS, rows, cfg.to_dict(), command)
    (out / "mix_report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return path, report


def cmd_render(cfg: RunConfig, pool=None, command="render"):
    hmap = _map(cfg)
    r = cfg.render
    pts = _slice_points(hmap, r.resolution, _half(hmap, r.half_width), r.plane)
    gc = _green_cfg(cfg, r.n_max)
    fn = G.green_plus_batch if r.side == "+" else G.green_minus_batch
    vals = fn(hmap, pts, gc, pool).values.reshape(r.resolution, r.resolution)
    img = vals[::-1]  # first row = largest second coordinate
    name = "G_plus" if r.side == "+" else "G_minus"
    return write_pgm(_out(cfg) / f"render_{name}_{r.plane}.pgm", img, cfg.to_dict(), command,
                     (0.0, float(img.max()) if img.max() > 0 else 1.0))


# --- verify -----------------------------------------------------------------------

VERIFY_COLUMNS = ["criterion", "name", "passed", "measured", "threshold"]


def _determinism_probe(cfg: RunConfig, threads: int) -> dict:
    """Small green/measure/periodic/mix runs; returns file bytes keyed by name."""
    import tempfile

    probe = from_dict(cfg.to_dict())
    probe.grid.resolution = 12
    probe.sampler.period = 8
    probe.mixing.period = 8
    probe.mixing.n_max = 6
    out = {}
    with tempfile.TemporaryDirectory() as tmp, WorkerPool(threads) as pool:
        probe.out = tmp
        probe.threads = threads
        files = [cmd_green(probe, pool), cmd_periodic(probe, pool)[0], cmd_mix(probe, pool)[0]]
        files += list(cmd_measure(probe, pool))
        for f in files:
            out[Path(f).name] = Path(f).read_bytes()
    return out


def cmd_verify(cfg: RunConfig, pool=None, stream=None, command="verify"):
    stream = stream or sys.stdout
    from .acceptance import Context, run_all

    hmap = _map(cfg)
    ctx = Context(hmap=hmap, seed=cfg.seed, pool=pool, n_max=cfg.green.n_max,
                  tail_refinements=cfg.green.tail_refinements, resolution=cfg.grid.resolution,
                  coarse_resolution=max(4, cfg.grid.resolution // 2),
                  grid_n=cfg.grid.n, sampler_period=cfg.sampler.period,
                  mixing_period=cfg.mixing.period, mixing_n_max=cfg.mixing.n_max)
    results = []
    for res in run_all(ctx):
        results.append(res)
        print(res.line() + f"  [{res.seconds:.1f}s]" + (f" {res.note}" if res.note else ""),
              file=stream, flush=True)
    t = time.perf_counter()
    other = max(2, cfg.threads if cfg.threads != 1 else 4)
    a, b = _determinism_probe(cfg, 1), _determinism_probe(cfg, other)
    same = a == b
    from .acceptance import CriterionResult

    r10 = CriterionResult(10, "determinism across thread counts", same,
                          {"files": len(a), "identical": same},
                          "byte-identical CSV and cell files", time.perf_counter() - t)
    results.append(r10)
    print(r10.line() + f"  [{r10.seconds:.1f}s]", file=stream, flush=True)
    out = _out(cfg)
    rows = [(r.number, r.name, r.passed, "; ".join(f"{k}={v}" for k, v in r.measured.items()),
             r.threshold) for r in results]
    write_csv(out / "verify.csv", VERIFY_COLUMNS, rows, cfg.to_dict(), command)
    failed = [r.number for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed"
          + (f"; failing: {', '.join(map(str, failed))}" if failed else ""), file=stream)
    return results, failed


# --- argument handling ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="henonmix", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"henonmix {__version__}")
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--threads", type=int, help="worker threads (outputs do not depend on it)")
    p.add_argument("--seed", type=int, help="seed of randomized routines")
    p.add_argument("--out", help="output directory")
    p.add_argument("--dump-config", action="store_true",
                   help="print the default configuration as JSON and exit")
    p.add_argument("--config-reference", action="store_true",
                   help="print the configuration reference (Markdown) and exit")
    sub = p.add_subparsers(dest="command")

    def with_map(sp):
        sp.add_argument("--map", help="map description file (default: built-in standard map)")
        return sp

    with_map(sub.add_parser("info", help="degrees, indeterminacy sets, regularity"))
    g = with_map(sub.add_parser("green", help="G+ and G- on a slice or point list"))
    g.add_argument("--points", help="CSV of x_re,x_im,y_re,y_im")
    g.add_argument("--resolution", type=int, help="slice resolution")
    g.add_argument("--half-width", type=float)
    g.add_argument("--n-max", type=int)
    m = with_map(sub.add_parser("measure", help="grid measure dd^c G+ ∧ dd^c G-"))
    m.add_argument("--resolution", type=int)
    m.add_argument("--n", type=int)
    m.add_argument("--half-width", type=float)
    pe = with_map(sub.add_parser("periodic", help="periodic orbit ensemble"))
    pe.add_argument("--period", type=int)
    pe.add_argument("--override", action="store_true", help="run even without a horseshoe certificate")
    mx = with_map(sub.add_parser("mix", help="correlation series and bound check"))
    mx.add_argument("--measure", help="periodic:n or a cell-mass file")
    mx.add_argument("--phi", action="append", help="observable in prefix notation (repeatable)")
    mx.add_argument("--psi", action="append", help="observable paired with the matching --phi")
    mx.add_argument("--n-max", type=int)
    r = with_map(sub.add_parser("render", help="PGM image of G+ or G- on a slice"))
    r.add_argument("--side", choices=["+", "-"])
    r.add_argument("--resolution", type=int)
    r.add_argument("--half-width", type=float)
    r.add_argument("--n-max", type=int)
    r.add_argument("--plane", choices=["real", "x", "y"])
    v = with_map(sub.add_parser("verify", help="run the acceptance suite"))
    v.add_argument("--n-max", type=int, help="Green iteration horizon used by the suite")
    return p


def _apply_args(cfg: RunConfig, args) -> RunConfig:
    d = cfg.to_dict()
    for key in ("threads", "seed", "out"):
        if getattr(args, key, None) is not None:
            d[key] = getattr(args, key)
    if getattr(args, "map", None):
        d["map"] = args.map
    cmd = args.command

    def put(section, key, attr):
        val = getattr(args, attr, None)
        if val is not None:
            d[section][key] = val

    if cmd == "green":
        put("green", "slice_resolution", "resolution")
        put("green", "slice_half_width", "half_width")
        put("green", "n_max", "n_max")
    elif cmd == "measure":
        put("grid", "resolution", "resolution")
        put("grid", "n", "n")
        put("grid", "half_width", "half_width")
    elif cmd == "periodic":
        put("sampler", "period", "period")
        if args.override:
            d["sampler"]["override"] = True
    elif cmd == "mix":
        put("mixing", "measure", "measure")
        put("mixing", "n_max", "n_max")
        if args.phi or args.psi:
            phis, psis = args.phi or [], args.psi or []
            if len(phis) != len(psis):
                raise UsageError("each --phi needs a matching --psi")
            d["mixing"]["pairs"] = [[a, b] for a, b in zip(phis, psis)]
    elif cmd == "render":
        for key in ("side", "resolution", "half_width", "n_max", "plane"):
            put("render", key, key)
    elif cmd == "verify":
        put("green", "n_max", "n_max")
    return from_dict(d)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        if args.dump_config:
            print(json.dumps(RunConfig().to_dict(), indent=2))
            return EXIT_OK
        if args.config_reference:
            print(config_reference(), end="")
            return EXIT_OK
        if not args.command:
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        cfg = load_config(args.config) if args.config else RunConfig()
        cfg = _apply_args(cfg, args)
        with WorkerPool(cfg.threads) as pool:
            if args.command == "info":
                cmd_info(cfg, pool)
            elif args.command == "green":
                print(cmd_green(cfg, pool, args.points))
            elif args.command == "measure":
                for pth in cmd_measure(cfg, pool):
                    print(pth)
            elif args.command == "periodic":
                path, ens = cmd_periodic(cfg, pool)
                print(path)
            elif args.command == "mix":
                path, report = cmd_mix(cfg, pool)
                print(path)
                print(f"bound shape holds for all pairs: {report['bound_shape_all']}")
            elif args.command == "render":
                print(cmd_render(cfg, pool))
            elif args.command == "verify":
                _, failed = cmd_verify(cfg, pool)
                if failed:
                    raise AcceptanceFailed(f"failing criteria: {failed}")
        return EXIT_OK
    except (UsageError, ConfigError, MapFileError, ObservableSyntaxError) as exc:
        print(f"henonmix: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except AcceptanceFailed as exc:
        print(f"henonmix: {exc}", file=sys.stderr)
        return EXIT_ACCEPTANCE
    except (NumericFailure, HenonError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"henonmix: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
