import numpy as np
import pytest

from qmamba.fmw import (
    FmwBadMagic,
    FmwChecksumMismatch,
    FmwError,
    FmwTensor,
    FmwTruncated,
    load_fmw,
    save_fmw,
)


def test_round_trip_bit_identical(tmp_path):
    rng = np.random.default_rng(40)
    tensors = {
        "a": FmwTensor(rng.standard_normal((3, 4)).astype(np.float32)),
        "b.half": FmwTensor(rng.standard_normal(5).astype(np.float16)),
        "c.codes": FmwTensor(rng.integers(-128, 128, (2, 2, 2)).astype(np.int8), frac=5),
        "d.codes": FmwTensor(rng.integers(-30000, 30000, 7).astype(np.int16), frac=-2),
        "scalar": FmwTensor(np.float32(3.25)),
    }
    path = tmp_path / "t.fmw"
    save_fmw(tensors, str(path))
    loaded = load_fmw(str(path))
    assert list(loaded) == list(tensors)
    for name, t in tensors.items():
        assert loaded[name].frac == t.frac
        assert loaded[name].array.dtype == np.asarray(t.array).dtype
        assert np.array_equal(loaded[name].array, t.array)
    # saving the loaded dict reproduces the bytes
    path2 = tmp_path / "t2.fmw"
    save_fmw(loaded, str(path2))
    assert path.read_bytes() == path2.read_bytes()


def test_empty_file_is_14_bytes(tmp_path):
    path = tmp_path / "e.fmw"
    save_fmw({}, str(path))
    assert path.stat().st_size == 14
    assert load_fmw(str(path)) == {}


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.fmw"
    save_fmw({}, str(path))
    raw = bytearray(path.read_bytes())
    raw[:4] = b"NOPE"
    path.write_bytes(raw)
    with pytest.raises(FmwBadMagic):
        load_fmw(str(path))


def test_checksum_mismatch(tmp_path):
    path = tmp_path / "c.fmw"
    save_fmw({"x": FmwTensor(np.zeros(4, dtype=np.float32))}, str(path))
    raw = bytearray(path.read_bytes())
    raw[20] ^= 0xFF
    path.write_bytes(raw)
    with pytest.raises(FmwChecksumMismatch, match="checksum mismatch"):
        load_fmw(str(path))


def test_truncation(tmp_path):
    path = tmp_path / "t.fmw"
    path.write_bytes(b"FMW1\x01\x00")
    with pytest.raises(FmwTruncated):
        load_fmw(str(path))


def test_truncated_record(tmp_path):
    path = tmp_path / "t.fmw"
    save_fmw({"x": FmwTensor(np.zeros(100, dtype=np.float32))}, str(path))
    raw = path.read_bytes()
    import struct, zlib

    body = raw[:-4][:40]  # cut inside the data payload
    path.write_bytes(body + struct.pack("<I", zlib.crc32(body)))
    with pytest.raises(FmwTruncated):
        load_fmw(str(path))


def test_unsupported_dtype_rejected(tmp_path):
    with pytest.raises(FmwError, match="unsupported dtype"):
        save_fmw({"x": FmwTensor(np.zeros(3, dtype=np.float64))}, str(tmp_path / "x.fmw"))
