"""File formats.

CSV
    Lines starting with ``#`` form a header block (tool version, config
    hash, library versions, command), followed by one column-name line and
    data rows.  Floats are written with ``%.17g`` so they round-trip exactly.

PGM
    Binary 16-bit graymap (``P5``, maxval 65535, big-endian samples,
    row-major, first row = largest imaginary/second coordinate).  Header
    comments record the same block as CSV plus ``# range: lo hi``, the value
    interval mapped linearly onto 0..65535 (values outside are clamped).

Cell-mass file
    Little-endian binary: magic ``b"HMCELLS1"``; ``uint32`` length L of a
    UTF-8 JSON header; the JSON header (config hash, versions, metadata);
    ``8 x float64`` box ``(lo, hi)`` for Re x, Im x, Re y, Im y; ``4 x uint32``
    resolution; then ``prod(resolution)`` ``float64`` masses in row-major
    order (last axis fastest).
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np
import sympy

from . import __version__

CELL_MAGIC = b"HMCELLS1"


def versions() -> dict:
    return {"henonmix": __version__, "numpy": np.__version__, "sympy": sympy.__version__}


def config_hash(config: dict) -> str:
    """Hash of the run configuration, ignoring thread count and output location."""
    cleaned = {k: v for k, v in config.items() if k not in ("threads", "out")}
    blob = json.dumps(cleaned, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def header_lines(config: dict, command: str) -> list:
    v = versions()
    return [f"henonmix {v['henonmix']}", f"command: {command}",
            f"config-hash: {config_hash(config)}", f"numpy {v['numpy']}; sympy {v['sympy']}"]


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def write_csv(path, columns, rows, config: dict, command: str, extra_header=()):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["# " + h for h in header_lines(config, command)]
    lines += ["# " + h for h in extra_header]
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def read_csv(path):
    """Return ``(header comments, column names, rows as lists of strings)``."""
    comments, cols, rows = [], None, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            comments.append(line[1:].strip())
        elif cols is None:
            cols = line.split(",")
        elif line:
            rows.append(line.split(","))
    return comments, cols, rows


def write_pgm(path, image: np.ndarray, config: dict, command: str, value_range=None):
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("PGM images are 2-D")
    lo, hi = value_range if value_range is not None else (float(img.min()), float(img.max()))
    span = hi - lo if hi > lo else 1.0
    q = np.clip(np.rint((img - lo) / span * 65535), 0, 65535).astype(">u2")
    rows, cols = img.shape
    head = ["P5"] + ["# " + h for h in header_lines(config, command)]
    head += [f"# range: {_fmt(lo)} {_fmt(hi)}", f"{cols} {rows}", "65535"]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(("\n".join(head) + "\n").encode() + q.tobytes())
    return path


def read_pgm(path):
    """Return ``(comments, uint16 image)``."""
    data = Path(path).read_bytes()
    pos = 0
    tokens, comments = [], []
    while len(tokens) < 4:
        end = data.index(b"\n", pos)
        line = data[pos:end].decode()
        pos = end + 1
        if line.startswith("#"):
            comments.append(line[1:].strip())
        else:
            tokens += line.split()
    if tokens[0] != "P5":
        raise ValueError("not a binary PGM")
    cols, rows, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 65535:
        raise ValueError("expected a 16-bit PGM")
    img = np.frombuffer(data[pos:pos + 2 * rows * cols], dtype=">u2").reshape(rows, cols)
    return comments, img


def write_cells(path, measure, config: dict, command: str, meta=None):
    grid = measure.grid
    header = {"config_hash": config_hash(config), "command": command, "versions": versions(),
              "clamped_mass_fraction": measure.clamped_mass_fraction,
              "raw_total_mass": measure.raw_total_mass, **(meta or {})}
    hb = json.dumps(header, sort_keys=True, default=str).encode()
    box = [v for pair in grid.box for v in pair]
    blob = (CELL_MAGIC + struct.pack("<I", len(hb)) + hb + struct.pack("<8d", *box)
            + struct.pack("<4I", *grid.resolution)
            + np.ascontiguousarray(measure.masses, dtype="<f8").tobytes())
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(blob)
    return path


def read_cells(path):
    """Return a CellMeasure and the JSON header of a cell-mass file."""
    from .currents import CellMeasure, GridSpec

    data = Path(path).read_bytes()
    if data[:8] != CELL_MAGIC:
        raise ValueError("not a cell-mass file")
    (L,) = struct.unpack_from("<I", data, 8)
    header = json.loads(data[12:12 + L].decode())
    off = 12 + L
    box = struct.unpack_from("<8d", data, off)
    off += 64
    res = struct.unpack_from("<4I", data, off)
    off += 16
    masses = np.frombuffer(data[off:off + 8 * int(np.prod(res))], dtype="<f8").reshape(res)
    grid = GridSpec(tuple(zip(box[0::2], box[1::2])), res)
    m = CellMeasure(grid, masses.copy(), header.get("clamped_mass_fraction", 0.0),
                    header.get("raw_total_mass"), {"source": f"grid:{path}"})
    return m, header
