"""Binary and CSV serialization of grid functions and sampled fields.

Binary layout (all little-endian):

    magic  b"DRLG"          4 bytes
    version                 uint32
    n0, n1 (lattice dims)   uint32 x 2
    h, radius               float64 x 2
    domain                  uint8 (0 square, 1 disc)
    channels                uint32
    n_runs, runs[n_runs]    uint32, alternating interior-mask run lengths,
                            starting with a run of False
    n_boundary              uint32
    has_boundary            uint8
    payload                 float64: channels x n_interior values, then
                            channels x n_boundary values if has_boundary
"""

from __future__ import annotations

import csv
import struct

import numpy as np

from .grid import DISC, SQUARE, Grid2D, GridFunction

MAGIC = b"DRLG"
VERSION = 1
_DOMAIN_CODES = {SQUARE: 0, DISC: 1}


def _runs(mask):
    flat = mask.ravel().astype(np.int8)
    change = np.flatnonzero(np.diff(flat)) + 1
    bounds = np.concatenate([[0], change, [len(flat)]])
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs = [0] + runs
    return runs


def _mask_from_runs(runs, shape):
    flat = np.zeros(shape[0] * shape[1], dtype=bool)
    pos, val = 0, False
    for r in runs:
        flat[pos:pos + r] = val
        pos += r
        val = not val
    return flat.reshape(shape)


def write_binary(path, grid: Grid2D, interior, boundary=None):
    """Write channels (C, n_interior) [and (C, n_boundary)] on ``grid``."""
    interior = np.atleast_2d(np.asarray(interior, dtype="<f8"))
    runs = _runs(grid.node_index >= 0)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", VERSION, *grid.shape))
        fh.write(struct.pack("<dd", grid.h, grid.radius))
        fh.write(struct.pack("<BI", _DOMAIN_CODES[grid.domain], interior.shape[0]))
        fh.write(struct.pack("<I", len(runs)))
        fh.write(np.asarray(runs, dtype="<u4").tobytes())
        fh.write(struct.pack("<IB", grid.n_boundary, boundary is not None))
        fh.write(interior.tobytes())
        if boundary is not None:
            fh.write(np.atleast_2d(np.asarray(boundary, dtype="<f8")).tobytes())


def read_binary(path):
    """Return (grid, interior (C, N), boundary (C, Nb) or None)."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise ValueError("not a grid file")
    off = 4
    version, n0, n1 = struct.unpack_from("<III", data, off)
    off += 12
    if version != VERSION:
        raise ValueError(f"unsupported version {version}")
    h, radius = struct.unpack_from("<dd", data, off)
    off += 16
    code, channels = struct.unpack_from("<BI", data, off)
    off += 5
    (n_runs,) = struct.unpack_from("<I", data, off)
    off += 4
    runs = np.frombuffer(data, dtype="<u4", count=n_runs, offset=off)
    off += 4 * n_runs
    nb, has_b = struct.unpack_from("<IB", data, off)
    off += 5
    domain = {v: k for k, v in _DOMAIN_CODES.items()}[code]
    grid = Grid2D(h, domain, radius)
    mask = _mask_from_runs(runs, (n0, n1))
    if grid.shape != (n0, n1) or not np.array_equal(mask, grid.node_index >= 0) or grid.n_boundary != nb:
        raise ValueError("stored mask does not match the reconstructed grid")
    n = grid.n_interior
    interior = np.frombuffer(data, dtype="<f8", count=channels * n, offset=off).reshape(channels, n)
    off += 8 * channels * n
    boundary = None
    if has_b:
        boundary = np.frombuffer(data, dtype="<f8", count=channels * nb, offset=off).reshape(channels, nb)
    return grid, interior.copy(), None if boundary is None else boundary.copy()


def save_grid_function(path, u: GridFunction):
    write_binary(path, u.grid, u.values, u.boundary)


def load_grid_function(path) -> GridFunction:
    grid, vals, bnd = read_binary(path)
    return GridFunction(grid, vals[0], None if bnd is None else bnd[0])


def save_field_samples(path, grid: Grid2D, field):
    """Store a11, a12, a22 of a coefficient field at the interior nodes and boundary points."""
    Ai = np.asarray(field(grid.interior_points))
    Ab = np.asarray(field(grid.boundary_points))
    write_binary(path, grid, [Ai[:, 0, 0], Ai[:, 0, 1], Ai[:, 1, 1]],
                 [Ab[:, 0, 0], Ab[:, 0, 1], Ab[:, 1, 1]])


def write_csv(path, u: GridFunction):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kind", "x", "y", "value"])
        for (x, y), v in zip(u.grid.interior_points, u.values):
            w.writerow(["interior", repr(float(x)), repr(float(y)), repr(float(v))])
        if u.boundary is not None:
            for (x, y), v in zip(u.grid.boundary_points, u.boundary):
                w.writerow(["boundary", repr(float(x)), repr(float(y)), repr(float(v))])
