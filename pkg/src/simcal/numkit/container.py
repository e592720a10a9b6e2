"""Versioned binary checkpoint container.

Layout (little-endian)::

    b"SIPE"              magic
    uint16               format version
    uint32               length of UTF-8 JSON metadata, then the metadata
    uint32               number of arrays
    per array:  uint16 name length, name bytes, uint8 ndim, ndim x uint64 dims
    payload:    every array as row-major float64, in table order
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"SIPE"
FORMAT_VERSION = 1


class ContainerError(ValueError):
    pass


def dumps(arrays: dict[str, np.ndarray], meta: dict | None = None) -> bytes:
    meta_bytes = json.dumps(meta or {}, sort_keys=True).encode()
    out = [MAGIC, struct.pack("<H", FORMAT_VERSION), struct.pack("<I", len(meta_bytes)), meta_bytes]
    out.append(struct.pack("<I", len(arrays)))
    payload = []
    for name, arr in arrays.items():
        arr = np.require(np.asarray(arr, dtype="<f8"), requirements="C")
        encoded = name.encode()
        out.append(struct.pack("<H", len(encoded)) + encoded)
        out.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape))
        payload.append(arr.tobytes(order="C"))
    return b"".join(out + payload)


def loads(data: bytes) -> tuple[dict[str, np.ndarray], dict]:
    if data[:4] != MAGIC:
        raise ContainerError("not a checkpoint container (bad magic bytes)")
    (version,) = struct.unpack_from("<H", data, 4)
    if version != FORMAT_VERSION:
        raise ContainerError(f"unsupported container version {version}")
    pos = 6
    (meta_len,) = struct.unpack_from("<I", data, pos)
    pos += 4
    meta = json.loads(data[pos : pos + meta_len].decode())
    pos += meta_len
    (count,) = struct.unpack_from("<I", data, pos)
    pos += 4
    table = []
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos : pos + name_len].decode()
        pos += name_len
        (ndim,) = struct.unpack_from("<B", data, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}Q", data, pos)
        pos += 8 * ndim
        table.append((name, shape))
    arrays = {}
    for name, shape in table:
        size = int(np.prod(shape, dtype=np.int64))
        arrays[name] = np.frombuffer(data, dtype="<f8", count=size, offset=pos).reshape(shape).copy()
        pos += 8 * size
    if pos != len(data):
        raise ContainerError(f"trailing bytes in container ({len(data) - pos})")
    return arrays, meta


def save(path, arrays: dict[str, np.ndarray], meta: dict | None = None) -> None:
    Path(path).write_bytes(dumps(arrays, meta))


def load(path) -> tuple[dict[str, np.ndarray], dict]:
    return loads(Path(path).read_bytes())
