"""LFK1 binary field snapshots.

Layout (little-endian): ``b"LFK1"``, u32 dim, u32 points_per_axis,
f64 length, f64 time, then ``points_per_axis**dim`` f64 values row-major.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .spectral_field import Field, Grid

MAGIC = b"LFK1"
_HEADER = struct.Struct("<4sIIdd")


def write_snapshot(path, field: Field, time: float) -> None:
    g = field.grid
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, g.dim, g.points_per_axis, g.length, float(time)))
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())


def read_snapshot(path) -> tuple[Field, float]:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: truncated LFK1 header")
    magic, dim, n, length, time = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    grid = Grid(dim, n, length)
    count = n**dim
    body = data[_HEADER.size :]
    if len(body) != 8 * count:
        raise ValueError(f"{path}: expected {count} values, found {len(body) // 8}")
    values = np.frombuffer(body, dtype="<f8").reshape(grid.shape)
    return Field(grid, values), time
