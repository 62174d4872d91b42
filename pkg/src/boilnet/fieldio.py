"""Field files.

BLFD v1 (little-endian)::

    offset  type     content
    0       4 bytes  magic b"BLFD"
    4       u32      version (1)
    8       u32 x4   nx, ny, nz, nt
    24      f64 x2   dx, dt
    40      u32      name_len
    44      bytes    UTF-8 name
    44+n    f64 x N  values, x fastest, then y, z, t

Surface series are stored with nz = 1. A CSV alternative with header
``x_index,y_index,z_index,t_index,value`` is accepted for small inputs.
"""

import csv
import struct

import numpy as np

from boilnet.fieldavg import Field4D, SurfaceSeries

MAGIC = b"BLFD"
VERSION = 1
CSV_MAX_VALUES = 10**6
CSV_HEADER = ["x_index", "y_index", "z_index", "t_index", "value"]

_HEAD = struct.Struct("<4sI4I2dI")


class BlfdError(ValueError):
    """Malformed field file; ``offset`` is the byte position of the problem."""

    def __init__(self, msg, offset):
        super().__init__(f"{msg} (at byte offset {offset})")
        self.offset = offset


def write_blfd(path, field):
    if isinstance(field, SurfaceSeries):
        field = field.as_field()
    nx, ny, nz, nt = field.dims
    name = field.name.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_HEAD.pack(MAGIC, VERSION, nx, ny, nz, nt,
                            float(field.dx), float(field.dt), len(name)))
        fh.write(name)
        fh.write(np.asarray(field.values, dtype="<f8").ravel(order="F").tobytes())


def read_blfd(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEAD.size:
        raise BlfdError(f"{path}: truncated header", len(data))
    magic, version, nx, ny, nz, nt, dx, dt, name_len = _HEAD.unpack_from(data, 0)
    if magic != MAGIC:
        raise BlfdError(f"{path}: bad magic {magic!r}", 0)
    if version != VERSION:
        raise BlfdError(f"{path}: unsupported version {version}", 4)
    if min(nx, ny, nz, nt) < 1:
        raise BlfdError(f"{path}: zero dimension", 8)
    if not (dx > 0 and dt > 0):
        raise BlfdError(f"{path}: non-positive spacing", 24)
    pos = _HEAD.size
    if len(data) < pos + name_len:
        raise BlfdError(f"{path}: truncated name", len(data))
    try:
        name = data[pos:pos + name_len].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise BlfdError(f"{path}: name is not UTF-8", pos + exc.start) from None
    pos += name_len
    count = nx * ny * nz * nt
    expected = pos + 8 * count
    if len(data) != expected:
        raise BlfdError(f"{path}: expected {expected} bytes, file has {len(data)}",
                        min(len(data), expected))
    values = np.frombuffer(data, dtype="<f8", count=count, offset=pos)
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise BlfdError(f"{path}: non-finite value", pos + 8 * int(bad[0]))
    values = values.astype(np.float64).reshape((nx, ny, nz, nt), order="F")
    return Field4D(values, dx, dt, name)


def read_surface_blfd(path):
    f = read_blfd(path)
    if f.dims[2] != 1:
        raise BlfdError(f"{path}: surface series must have nz = 1, got {f.dims[2]}", 16)
    return SurfaceSeries(f.values[:, :, 0, :], f.dx, f.dt, f.name)


def write_field_csv(path, field):
    if isinstance(field, SurfaceSeries):
        field = field.as_field()
    if field.values.size > CSV_MAX_VALUES:
        raise ValueError("CSV field format is limited to 1e6 values; use BLFD")
    nx, ny, nz, nt = field.dims
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for t in range(nt):
            for k in range(nz):
                for j in range(ny):
                    for i in range(nx):
                        w.writerow([i, j, k, t, repr(float(field.values[i, j, k, t]))])


def read_field_csv(path, dx, dt, name=""):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != CSV_HEADER:
        raise ValueError(f"{path}: header must be {','.join(CSV_HEADER)}")
    body = rows[1:]
    if len(body) > CSV_MAX_VALUES:
        raise ValueError(f"{path}: CSV field format is limited to 1e6 values")
    idx = np.array([[int(r[0]), int(r[1]), int(r[2]), int(r[3])] for r in body], dtype=np.int64)
    vals = np.array([float(r[4]) for r in body])
    if idx.size == 0:
        raise ValueError(f"{path}: no values")
    if idx.min() < 0:
        raise ValueError(f"{path}: negative index")
    dims = tuple(int(d) for d in idx.max(axis=0) + 1)
    if int(np.prod(dims)) != len(body):
        raise ValueError(f"{path}: expected {int(np.prod(dims))} rows for dims {dims}, got {len(body)}")
    out = np.full(dims, np.nan)
    out[idx[:, 0], idx[:, 1], idx[:, 2], idx[:, 3]] = vals
    if np.isnan(out).any():
        raise ValueError(f"{path}: duplicate or missing grid points")
    return Field4D(out, dx, dt, name)
