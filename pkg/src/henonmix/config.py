"""Run configuration: one JSON document per run, every field optional."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path

from .observables import BATTERY, BATTERY_PAIRS


class ConfigError(ValueError):
    pass


@dataclass
class GridParams:
    resolution: int = 48
    half_width: float | None = None
    n: int = 10


@dataclass
class GreenParams:
    n_max: int = 60
    tail_refinements: int = 3
    escape_radius: float | None = None
    slice_resolution: int = 16
    slice_half_width: float | None = None


@dataclass
class SamplerParams:
    period: int = 12
    tol: float = 1e-12
    max_iters: int = 200
    max_halvings: int = 20
    override: bool = False


def _default_pairs():
    return [[BATTERY[a], BATTERY[b]] for a, b in BATTERY_PAIRS]


@dataclass
class MixingParams:
    period: int = 14
    n_max: int = 20
    pairs: list = field(default_factory=_default_pairs)
    measure: str | None = None


@dataclass
class RenderParams:
    side: str = "+"
    resolution: int = 256
    half_width: float | None = None
    n_max: int = 60
    plane: str = "real"


@dataclass
class RunConfig:
    map: str | None = None
    grid: GridParams = field(default_factory=GridParams)
    green: GreenParams = field(default_factory=GreenParams)
    sampler: SamplerParams = field(default_factory=SamplerParams)
    mixing: MixingParams = field(default_factory=MixingParams)
    render: RenderParams = field(default_factory=RenderParams)
    out: str = "henonmix-out"
    threads: int = 1
    seed: int = 20240611

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self) -> "RunConfig":
        checks = [
            (self.grid.resolution >= 4, "grid.resolution must be >= 4"),
            (self.grid.n >= 1, "grid.n must be >= 1"),
            (self.green.n_max >= 1, "green.n_max must be >= 1"),
            (self.green.tail_refinements >= 0, "green.tail_refinements must be >= 0"),
            (self.green.slice_resolution >= 1, "green.slice_resolution must be >= 1"),
            (1 <= self.sampler.period <= 20, "sampler.period must be in 1..20"),
            (self.sampler.tol > 0, "sampler.tol must be positive"),
            (self.sampler.max_iters >= 1, "sampler.max_iters must be >= 1"),
            (1 <= self.mixing.period <= 20, "mixing.period must be in 1..20"),
            (self.mixing.n_max >= 0, "mixing.n_max must be >= 0"),
            (all(isinstance(p, (list, tuple)) and len(p) == 2 for p in self.mixing.pairs),
             "mixing.pairs is a list of [phi, psi] expression pairs"),
            (self.render.side in ("+", "-"), "render.side must be '+' or '-'"),
            (self.render.plane in ("real", "x", "y"), "render.plane must be real, x or y"),
            (self.render.resolution >= 2, "render.resolution must be >= 2"),
            (self.threads >= 1, "threads must be >= 1"),
            (isinstance(self.seed, int) and self.seed >= 0, "seed must be a nonnegative integer"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        for hw in (self.grid.half_width, self.green.slice_half_width, self.render.half_width,
                   self.green.escape_radius):
            if hw is not None and not hw > 0:
                raise ConfigError("widths and radii must be positive")
        return self


def _merge(obj, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    names = {f.name: f for f in fields(obj)}
    for key, value in data.items():
        if key not in names:
            raise ConfigError(f"{where}: unknown key {key!r}")
        current = getattr(obj, key)
        if is_dataclass(current):
            _merge(current, value, f"{where}.{key}")
        else:
            setattr(obj, key, value)
    return obj


def from_dict(data: dict) -> RunConfig:
    return _merge(RunConfig(), data, "config").validate()


def load_config(path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return from_dict(data)


_DOCS = {
    "map": "map description file; the built-in standard map y^2 - 10 (a = 1) when null",
    "grid.resolution": "cells per axis of the 4-D measure grid (output grid has two fewer)",
    "grid.half_width": "half width of the cube box; 1.2 x escape radius when null",
    "grid.n": "iteration horizon of both potentials in the wedge measure",
    "green.n_max": "maximal number of iterations before a point counts as bounded",
    "green.tail_refinements": "extra log-coordinate iterations after escape",
    "green.escape_radius": "override of the filtration radius (must not be below the computed one)",
    "green.slice_resolution": "points per axis of the default (Re x, Re y) slice used by `green`",
    "green.slice_half_width": "half width of that slice; 1.2 x escape radius when null",
    "sampler.period": "period n of the enumerated ensemble (2^n points)",
    "sampler.tol": "Newton residual tolerance (max norm)",
    "sampler.max_iters": "Newton iteration cap",
    "sampler.max_halvings": "step halvings per Newton iteration",
    "sampler.override": "run the sampler even if the horseshoe check fails",
    "mixing.period": "period of the ensemble used as the mixing measure",
    "mixing.n_max": "largest lag n of the correlation series",
    "mixing.pairs": "observable pairs [phi, psi] in prefix notation",
    "mixing.measure": "`periodic:n` or a cell-mass file; periodic:<mixing.period> when null",
    "render.side": "`+` renders G+, `-` renders G-",
    "render.resolution": "pixels per side",
    "render.half_width": "half width of the slice; 1.2 x escape radius when null",
    "render.n_max": "iteration horizon of the rendered potential",
    "render.plane": "`real`: (Re x, Re y) with Im = 0; `x`: x-plane at y = 0; `y`: y-plane at x = 0",
    "out": "output directory",
    "threads": "worker threads; outputs do not depend on this value",
    "seed": "seed of every randomized routine",
}


def config_reference() -> str:
    """Markdown table of all configuration keys with their defaults."""
    d = RunConfig().to_dict()
    lines = ["# Configuration reference", "",
             "Every key is optional; values shown are the defaults.", "",
             "| key | default | meaning |", "|---|---|---|"]

    def walk(prefix, obj):
        for k, v in obj.items():
            key = f"{prefix}{k}"
            if isinstance(v, dict):
                walk(key + ".", v)
            else:
                lines.append(f"| `{key}` | `{json.dumps(v)}` | {_DOCS.get(key, '')} |")

    walk("", d)
    return "\n".join(lines) + "\n"
