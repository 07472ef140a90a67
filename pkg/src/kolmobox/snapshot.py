"""Binary snapshot format for simulation states.

Layout (all integers little-endian):

    magic   4 bytes  b"KBOX"
    version u32      currently 1
    dim     u32
    n       u32      points per axis
    side    f64
    then per field: a 4-byte ASCII tag followed by n^dim little-endian f64
    values in row-major order (axes x1..xd).

Tags: "u__1".."u__3" for the velocity components, "omeg" for the frequency,
"k___" for the turbulent energy, "p___" for the diagnostic pressure.  Fields
are written in that order.  The time label is not part of the format; reloaded
snapshots start at t = 0.
"""

from __future__ import annotations

import struct
from typing import Tuple

import numpy as np

from .fields import Grid, ScalarField, VectorField
from .model import State

__all__ = ["write_snapshot", "read_snapshot", "state_from_snapshot"]

MAGIC = b"KBOX"
VERSION = 1
_U_TAGS = (b"u__1", b"u__2", b"u__3")
_OMEGA_TAG = b"omeg"
_K_TAG = b"k___"
_P_TAG = b"p___"


def write_snapshot(path, state: State) -> None:
    g = state.grid
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", VERSION, g.dim, g.n))
        fh.write(struct.pack("<d", g.side))
        for i, comp in enumerate(state.u.components):
            fh.write(_U_TAGS[i])
            fh.write(comp.values.astype("<f8").tobytes())
        for tag, field in ((_OMEGA_TAG, state.omega), (_K_TAG, state.k), (_P_TAG, state.p)):
            fh.write(tag)
            fh.write(field.values.astype("<f8").tobytes())


def read_snapshot(path) -> Tuple[Grid, dict]:
    """Read a snapshot; returns (grid, {tag: array}) with row-major arrays."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise ValueError(f"{path}: bad magic {data[:4]!r}")
    version, dim, n = struct.unpack_from("<III", data, 4)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    (side,) = struct.unpack_from("<d", data, 16)
    grid = Grid(dim, n, side)
    nbytes = 8 * grid.npoints
    fields = {}
    off = 24
    while off < len(data):
        tag = data[off : off + 4]
        off += 4
        if len(data) < off + nbytes:
            raise ValueError(f"{path}: truncated field {tag!r}")
        arr = np.frombuffer(data, dtype="<f8", count=grid.npoints, offset=off).reshape(grid.shape)
        fields[tag.decode("ascii")] = arr.copy()
        off += nbytes
    return grid, fields


def state_from_snapshot(path) -> State:
    grid, fields = read_snapshot(path)
    try:
        comps = [fields[_U_TAGS[i].decode()] for i in range(grid.dim)]
        omega = fields[_OMEGA_TAG.decode()]
        k = fields[_K_TAG.decode()]
        p = fields[_P_TAG.decode()]
    except KeyError as exc:
        raise ValueError(f"{path}: missing field {exc}") from exc
    return State(
        t=0.0,
        u=VectorField.from_arrays(grid, comps),
        omega=ScalarField(grid, omega),
        k=ScalarField(grid, k),
        p=ScalarField(grid, p),
    )
