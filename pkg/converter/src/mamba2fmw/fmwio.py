"""Standalone FMW reader/writer.

Implements the documented container byte layout (magic FMW1, little-endian
records, trailing CRC32) without importing the inference engine: the file
format is the interface between the two packages.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

MAGIC = b"FMW1"
VERSION = 1
DTYPES = {0: "<f4", 1: "<f2", 2: "i1", 3: "<i2"}
DTYPE_CODES = {np.dtype("<f4"): 0, np.dtype("<f2"): 1, np.dtype("i1"): 2, np.dtype("<i2"): 3}


class FmwWriteError(Exception):
    pass


class FmwReadError(Exception):
    pass


def write_fmw(tensors: dict[str, np.ndarray], path: str) -> None:
    """Write name -> array in insertion order; frac is 0 for every record
    (the converter only emits float tensors)."""
    chunks = [MAGIC, struct.pack("<HI", VERSION, len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        if arr.ndim:
            arr = np.ascontiguousarray(arr)
        key = np.dtype(arr.dtype).newbyteorder("<") if arr.dtype.kind == "f" else arr.dtype
        arr = arr.astype(key, copy=False)
        if np.dtype(key) not in DTYPE_CODES:
            raise FmwWriteError(f"unsupported dtype {arr.dtype} for {name!r}")
        nb = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(nb)) + nb)
        chunks.append(
            struct.pack("<BbB", DTYPE_CODES[np.dtype(key)], 0, arr.ndim)
            + struct.pack(f"<{arr.ndim}I", *arr.shape)
        )
        chunks.append(arr.tobytes())
    body = b"".join(chunks)
    with open(path, "wb") as f:
        f.write(body + struct.pack("<I", zlib.crc32(body)))


def read_fmw(path: str) -> dict[str, np.ndarray]:
    """Read a container back; raises FmwReadError on any structural problem."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 14:
        raise FmwReadError("file too short")
    if raw[:4] != MAGIC:
        raise FmwReadError(f"bad magic {raw[:4]!r}")
    (crc,) = struct.unpack("<I", raw[-4:])
    if zlib.crc32(raw[:-4]) != crc:
        raise FmwReadError("checksum mismatch")
    version, count = struct.unpack_from("<HI", raw, 4)
    if version != VERSION:
        raise FmwReadError(f"unsupported version {version}")
    pos, end = 10, len(raw) - 4
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        if pos + 2 > end:
            raise FmwReadError("truncated record")
        (nlen,) = struct.unpack_from("<H", raw, pos)
        pos += 2
        name = raw[pos : pos + nlen].decode("utf-8")
        pos += nlen
        dtype_code, _frac, ndim = struct.unpack_from("<BbB", raw, pos)
        pos += 3
        dims = struct.unpack_from(f"<{ndim}I", raw, pos)
        pos += 4 * ndim
        dt = np.dtype(DTYPES[dtype_code])
        nbytes = int(np.prod(dims, dtype=np.int64)) * dt.itemsize
        if pos + nbytes > end:
            raise FmwReadError(f"truncated data for {name!r}")
        out[name] = np.frombuffer(raw[pos : pos + nbytes], dtype=dt).reshape(dims).copy()
        pos += nbytes
    if pos != end:
        raise FmwReadError("trailing bytes after last tensor")
    return out
