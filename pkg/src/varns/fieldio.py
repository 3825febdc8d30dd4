"""Snapshot format for space-time fields (see docs/field_format.md).

    line 1   STFIELD 1
    line 2   nx ny m lx ly T          (decimal text; floats written with repr)
    rest     (m + 1) * 2 * nx * ny little-endian float64 values, row-major
             over (slice, component, x index, y index)
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .grid import Grid, SpaceTimeField, TimeGrid

MAGIC = b"STFIELD 1"


class FieldFormatError(ValueError):
    pass


def write_field(path, data, grid: Grid | None = None, time: TimeGrid | None = None) -> None:
    if isinstance(data, SpaceTimeField):
        grid, time, data = data.grid, data.time, data.data
    data = np.asarray(data, dtype="<f8")
    expect = (time.m + 1, 2, grid.nx, grid.ny)
    if data.shape != expect:
        raise FieldFormatError(f"array shape {data.shape} != {expect}")
    header = f"{grid.nx} {grid.ny} {time.m} {grid.lx!r} {grid.ly!r} {time.t_final!r}\n".encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC + b"\n")
        fh.write(header)
        fh.write(np.ascontiguousarray(data).tobytes(order="C"))


def read_raw(path):
    """(data, grid, time) without admissibility checks."""
    blob = Path(path).read_bytes()
    lines = blob.split(b"\n", 2)
    if len(lines) < 3 or lines[0] != MAGIC:
        raise FieldFormatError("missing STFIELD 1 header")
    parts = lines[1].split()
    if len(parts) != 6:
        raise FieldFormatError("header needs nx ny m lx ly T")
    try:
        nx, ny, m = (int(p) for p in parts[:3])
        lx, ly, T = (float(p) for p in parts[3:])
    except ValueError as exc:
        raise FieldFormatError(f"bad header: {exc}") from None
    try:
        grid, time = Grid(nx, ny, lx, ly), TimeGrid(m, T)
    except ValueError as exc:
        raise FieldFormatError(f"bad header: {exc}") from None
    payload = lines[2]
    count = (m + 1) * 2 * nx * ny
    if len(payload) != 8 * count:
        raise FieldFormatError(f"payload holds {len(payload)} bytes, expected {8 * count}")
    data = np.frombuffer(payload, dtype="<f8").reshape(m + 1, 2, nx, ny).astype(float)
    return data, grid, time


def read_field(path, validate: bool = True) -> SpaceTimeField:
    data, grid, time = read_raw(path)
    return SpaceTimeField(data, grid, time, validate=validate)
