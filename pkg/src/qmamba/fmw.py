"""FMW: a self-describing little-endian tensor container with CRC32.

Layout, all little-endian:

    magic   4 bytes  "FMW1"
    version u16
    count   u32
    count * tensor records:
        name_len u16, name bytes (utf-8)
        dtype    u8   (0=f32, 1=f16, 2=i8, 3=i16)
        frac     i8   (fixed-point fraction bits; 0 for float dtypes)
        ndim     u8
        dims     u32 * ndim
        data     raw little-endian element bytes, row-major
    crc32   u32 of every preceding byte

An empty tensor list is a valid 14-byte file.  Saving then loading is the
identity on bytes; any corruption is caught by the trailing checksum.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

MAGIC = b"FMW1"
VERSION = 1

_DTYPES = {0: "<f4", 1: "<f2", 2: "i1", 3: "<i2"}
_DTYPE_CODES = {np.dtype("<f4"): 0, np.dtype("<f2"): 1, np.dtype("i1"): 2, np.dtype("<i2"): 3}


class FmwError(Exception):
    """Base class for container failures."""


class FmwBadMagic(FmwError):
    pass


class FmwChecksumMismatch(FmwError):
    pass


class FmwTruncated(FmwError):
    pass


@dataclass
class FmwTensor:
    """One stored tensor: the typed array plus its fixed-point frac (0 for floats)."""

    array: np.ndarray
    frac: int = 0


def _coerce(entry) -> FmwTensor:
    if isinstance(entry, FmwTensor):
        return entry
    return FmwTensor(np.asarray(entry))


def save_fmw(tensors: dict, path: str) -> None:
    """Write tensors to path in insertion order.

    Values may be FmwTensor or plain arrays (frac 0).  Arrays must already
    be one of the four supported dtypes.
    """
    chunks = [MAGIC, struct.pack("<HI", VERSION, len(tensors))]
    for name, entry in tensors.items():
        t = _coerce(entry)
        arr = np.asarray(t.array)
        if arr.ndim:
            arr = np.ascontiguousarray(arr)
        dt = np.dtype(arr.dtype).newbyteorder("<") if arr.dtype.kind == "f" else arr.dtype
        arr = arr.astype(dt, copy=False)
        if np.dtype(dt) not in _DTYPE_CODES:
            raise FmwError(f"unsupported dtype {arr.dtype} for tensor {name!r}")
        nb = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(nb)) + nb)
        chunks.append(
            struct.pack("<BbB", _DTYPE_CODES[np.dtype(dt)], t.frac, arr.ndim)
            + struct.pack(f"<{arr.ndim}I", *arr.shape)
        )
        chunks.append(arr.tobytes())
    body = b"".join(chunks)
    with open(path, "wb") as f:
        f.write(body + struct.pack("<I", zlib.crc32(body)))


def load_fmw(path: str) -> dict[str, FmwTensor]:
    """Read a container; raises distinct errors for magic/CRC/truncation."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 14:
        raise FmwTruncated(f"file too short ({len(raw)} bytes)")
    if raw[:4] != MAGIC:
        raise FmwBadMagic(f"bad magic {raw[:4]!r}")
    body, (crc,) = raw[:-4], struct.unpack("<I", raw[-4:])
    if zlib.crc32(body) != crc:
        raise FmwChecksumMismatch("checksum mismatch")

    version, count = struct.unpack_from("<HI", raw, 4)
    if version != VERSION:
        raise FmwError(f"unsupported version {version}")
    pos, end = 10, len(body)
    out: dict[str, FmwTensor] = {}

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > end:
            raise FmwTruncated("record extends past end of file")
        pos += n
        return raw[pos - n : pos]

    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode("utf-8")
        dtype_code, frac, ndim = struct.unpack("<BbB", take(3))
        if dtype_code not in _DTYPES:
            raise FmwError(f"unknown dtype code {dtype_code} in {name!r}")
        dims = struct.unpack(f"<{ndim}I", take(4 * ndim))
        dt = np.dtype(_DTYPES[dtype_code])
        arr = np.frombuffer(take(int(np.prod(dims, dtype=np.int64)) * dt.itemsize), dtype=dt)
        out[name] = FmwTensor(arr.reshape(dims).copy(), frac)
    if pos != end:
        raise FmwError(f"{end - pos} trailing bytes after last tensor")
    return out
