"""ADHM map files.

Layout: magic "ADHM" + u32-LE version(1) + u32-LE header length + header
JSON (origin, cell size, dims; canonical key order) + row-major layers:
elevation Float64-LE (NaN = empty), reflectance Float64-LE (NaN = empty),
hit count u32-LE; then the semantic layer as u32-LE entry count followed by
(u32-LE cell index + one encoded label record) pairs sorted by cell index.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .. import binstream
from ..errors import ParseError
from .raster import GridMap

MAP_MAGIC = b"ADHM"
MAP_VERSION = 1
_U32 = struct.Struct("<I")


def encode_mapfile(grid: GridMap) -> bytes:
    header = {
        "origin": [grid.origin_x, grid.origin_y],
        "cell_size": grid.cell_size,
        "width": grid.width,
        "height": grid.height,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [
        MAP_MAGIC,
        _U32.pack(MAP_VERSION),
        _U32.pack(len(header_bytes)),
        header_bytes,
        np.ascontiguousarray(grid.elevation, dtype="<f8").tobytes(),
        np.ascontiguousarray(grid.reflectance, dtype="<f8").tobytes(),
        np.ascontiguousarray(grid.hits, dtype="<u4").tobytes(),
    ]
    entries = [
        (cell, record)
        for cell in sorted(grid.labels)
        for record in grid.labels[cell]
    ]
    parts.append(_U32.pack(len(entries)))
    for cell, record in entries:
        parts.append(_U32.pack(cell))
        parts.append(binstream.encode_record(record))
    return b"".join(parts)


def write_mapfile(grid: GridMap, path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_mapfile(grid))


def decode_mapfile(buf: bytes) -> GridMap:
    if buf[:4] != MAP_MAGIC:
        raise ParseError("not an ADHM map file")
    (version,) = _U32.unpack_from(buf, 4)
    if version != MAP_VERSION:
        raise ParseError(f"unsupported map version {version}")
    (header_len,) = _U32.unpack_from(buf, 8)
    pos = 12
    header = json.loads(buf[pos : pos + header_len].decode("utf-8"))
    pos += header_len
    width, height = header["width"], header["height"]
    cells = width * height

    elevation = np.frombuffer(buf, dtype="<f8", count=cells, offset=pos).reshape(height, width)
    pos += cells * 8
    reflectance = np.frombuffer(buf, dtype="<f8", count=cells, offset=pos).reshape(height, width)
    pos += cells * 8
    hits = np.frombuffer(buf, dtype="<u4", count=cells, offset=pos).reshape(height, width)
    pos += cells * 4

    (n_entries,) = _U32.unpack_from(buf, pos)
    pos += 4
    labels: dict[int, list[tuple]] = {}
    for _ in range(n_entries):
        (cell,) = _U32.unpack_from(buf, pos)
        pos += 4
        record, consumed = binstream.decode_record(buf, pos)
        pos += consumed
        labels.setdefault(cell, []).append(record)

    return GridMap(
        origin_x=header["origin"][0],
        origin_y=header["origin"][1],
        cell_size=header["cell_size"],
        width=width,
        height=height,
        elevation=elevation.copy(),
        reflectance=reflectance.copy(),
        hits=hits.copy(),
        labels=labels,
    )


def read_mapfile(path: str) -> GridMap:
    with open(path, "rb") as fh:
        return decode_mapfile(fh.read())
