"""Snapshot files written by ``obdoa simulate`` / ``obdoa quantize``.

Binary layout (little-endian)::

    8 bytes   magic b"OBDOASNP"
    uint32    format version (1)
    uint32    number of axes (2: x then y)
    uint32    sensors L
    uint32    snapshots Z
    uint32    quantized flag (0 or 1)
    payload   for each axis, the L x Z matrix in row-major order as complex64
              (float32 real, float32 imaginary pairs)

CSV layout: header ``axis,sensor,snapshot,re,im`` then one row per sample.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .signal_model import SnapshotMatrix

MAGIC = b"OBDOASNP"
VERSION = 1
_HEADER = struct.Struct("<5I")


def write_binary(snapshots: SnapshotMatrix, path) -> None:
    header = _HEADER.pack(VERSION, 2, snapshots.num_sensors, snapshots.num_snapshots, int(snapshots.quantized))
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(header)
        for m in (snapshots.x_axis, snapshots.y_axis):
            fh.write(np.ascontiguousarray(m, dtype="<c8").tobytes())


def read_binary(path) -> SnapshotMatrix:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise ValueError(f"{path}: not an obdoa snapshot file")
    version, axes, nl, nz, quantized = _HEADER.unpack_from(data, 8)
    if version != VERSION or axes != 2:
        raise ValueError(f"{path}: unsupported version {version} / axes {axes}")
    body = np.frombuffer(data, dtype="<c8", offset=8 + _HEADER.size)
    if body.size != 2 * nl * nz:
        raise ValueError(f"{path}: payload has {body.size} samples, expected {2 * nl * nz}")
    x = body[: nl * nz].reshape(nl, nz).astype(complex)
    y = body[nl * nz:].reshape(nl, nz).astype(complex)
    return SnapshotMatrix(x, y, bool(quantized))


def write_csv(snapshots: SnapshotMatrix, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["axis", "sensor", "snapshot", "re", "im"])
        for name, m in (("x", snapshots.x_axis), ("y", snapshots.y_axis)):
            for (l, z), v in np.ndenumerate(m):
                w.writerow([name, l, z, repr(float(v.real)), repr(float(v.imag))])


def write(snapshots: SnapshotMatrix, path, fmt: str = "bin") -> None:
    if fmt == "csv":
        write_csv(snapshots, path)
    else:
        write_binary(snapshots, path)
