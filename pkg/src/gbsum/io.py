"""Output writers: CSV tables, the GBSF binary field container and run manifests.

GBSF layout (little endian)::

    b"GBSF"  u32 version  u32 dims
    per dim: u64 count  f64 min  f64 max
    interleaved f64 (re, im) values in C order
"""

from __future__ import annotations

import csv
import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from . import __version__
from .fbi import SpatialField

GBSF_MAGIC = b"GBSF"
GBSF_VERSION = 1


def _fmt(v) -> str:
    # repr round-trips doubles exactly, which keeps outputs bitwise reproducible
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return path


def read_csv(path):
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def field_rows(f: SpatialField):
    """Rows ``(x_1, ..., x_n, re, im)`` for a field."""
    pts = f.grid.points().reshape(-1, f.grid.ndim)
    vals = np.asarray(f.values).reshape(-1)
    for p, v in zip(pts, vals):
        yield (*p, complex(v).real, complex(v).imag)


def write_field_csv(path, f: SpatialField) -> Path:
    header = [f"x{i + 1}" for i in range(f.grid.ndim)] + ["re", "im"]
    return write_csv(path, header, field_rows(f))


def write_gbsf(path, values, bounds) -> Path:
    """Write a complex array with per-axis ``(min, max)`` bounds."""
    values = np.asarray(values, complex)
    if len(bounds) != values.ndim:
        raise ValueError("one (min, max) pair per axis is required")
    buf = bytearray(GBSF_MAGIC)
    buf += struct.pack("<II", GBSF_VERSION, values.ndim)
    for count, (lo, hi) in zip(values.shape, bounds):
        buf += struct.pack("<Qdd", count, float(lo), float(hi))
    inter = np.empty(values.shape + (2,), "<f8")
    inter[..., 0] = values.real
    inter[..., 1] = values.imag
    buf += inter.tobytes(order="C")
    path = Path(path)
    path.write_bytes(bytes(buf))
    return path


def read_gbsf(path):
    """Return ``(values, bounds)`` from a GBSF file."""
    data = Path(path).read_bytes()
    if data[:4] != GBSF_MAGIC:
        raise ValueError("not a GBSF file")
    version, dims = struct.unpack_from("<II", data, 4)
    if version != GBSF_VERSION:
        raise ValueError(f"unsupported GBSF version {version}")
    off = 12
    shape, bounds = [], []
    for _ in range(dims):
        count, lo, hi = struct.unpack_from("<Qdd", data, off)
        off += 24
        shape.append(count)
        bounds.append((lo, hi))
    arr = np.frombuffer(data, "<f8", offset=off).reshape(tuple(shape) + (2,))
    return arr[..., 0] + 1j * arr[..., 1], bounds


def write_field(path_stem, f: SpatialField, fmt: str = "csv") -> Path:
    if fmt == "bin":
        bounds = [(a.start, a.start + (a.count - 1) * a.step) for a in f.grid.axes]
        return write_gbsf(str(path_stem) + ".gbsf", f.values, bounds)
    return write_field_csv(str(path_stem) + ".csv", f)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


def write_manifest(out_dir, cfg: dict, subcommand: str) -> Path:
    """``manifest.json`` with the config hash, version and per-file checksums."""
    out_dir = Path(out_dir)
    files = {}
    for p in sorted(out_dir.rglob("*")):
        if p.is_file() and p.name != "manifest.json":
            files[str(p.relative_to(out_dir))] = sha256_file(p)
    manifest = {
        "tool": "gbsum",
        "version": __version__,
        "subcommand": subcommand,
        "config_sha256": config_hash(cfg),
        "files": files,
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path
