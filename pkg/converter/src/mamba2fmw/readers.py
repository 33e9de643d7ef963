"""Checkpoint readers: safetensors natively, PyTorch pickles via torch.

The safetensors layout is simple enough to parse with the standard
library: a u64 header length, a JSON header mapping tensor names to
{dtype, shape, data_offsets}, then the raw buffer.
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np

_ST_DTYPES = {
    "F64": np.dtype("<f8"),
    "F32": np.dtype("<f4"),
    "F16": np.dtype("<f2"),
    "I64": np.dtype("<i8"),
    "I32": np.dtype("<i4"),
    "I16": np.dtype("<i2"),
    "I8": np.dtype("i1"),
    "U8": np.dtype("u1"),
    "BOOL": np.dtype("?"),
}


class CheckpointError(Exception):
    pass


def load_safetensors(path: str) -> dict[str, np.ndarray]:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 8:
        raise CheckpointError(f"{path}: not a safetensors file")
    (header_len,) = struct.unpack("<Q", raw[:8])
    if 8 + header_len > len(raw):
        raise CheckpointError(f"{path}: truncated safetensors header")
    header = json.loads(raw[8 : 8 + header_len])
    buf = raw[8 + header_len :]
    out: dict[str, np.ndarray] = {}
    for name, meta in header.items():
        if name == "__metadata__":
            continue
        dtype = meta["dtype"]
        if dtype == "BF16":
            start, stop = meta["data_offsets"]
            u16 = np.frombuffer(buf[start:stop], dtype="<u2").astype(np.uint32) << 16
            arr = u16.view(np.float32).reshape(meta["shape"]).copy()
        else:
            if dtype not in _ST_DTYPES:
                raise CheckpointError(f"{path}: unsupported dtype {dtype} for {name}")
            start, stop = meta["data_offsets"]
            arr = (
                np.frombuffer(buf[start:stop], dtype=_ST_DTYPES[dtype])
                .reshape(meta["shape"])
                .copy()
            )
        out[name] = arr
    return out


def load_torch_pickle(path: str) -> dict[str, np.ndarray]:
    try:
        import torch
    except ImportError as e:  # pragma: no cover
        raise CheckpointError(
            f"{path}: reading PyTorch pickles requires torch (pip install torch)"
        ) from e
    state = torch.load(path, map_location="cpu", weights_only=True)
    if isinstance(state, dict) and "state_dict" in state and all(
        not hasattr(v, "numpy") for k, v in state.items() if k != "state_dict"
    ):
        state = state["state_dict"]
    out = {}
    for name, value in state.items():
        out[name] = value.float().numpy() if value.dtype.is_floating_point else value.numpy()
    return out


def load_checkpoint(path: str) -> tuple[dict[str, np.ndarray], dict]:
    """Load (tensors, upstream config) from a file or an HF-style directory."""
    config: dict = {}
    if os.path.isdir(path):
        cfg_path = os.path.join(path, "config.json")
        if os.path.exists(cfg_path):
            with open(cfg_path) as f:
                config = json.load(f)
        for cand in ("model.safetensors", "pytorch_model.bin"):
            full = os.path.join(path, cand)
            if os.path.exists(full):
                path = full
                break
        else:
            raise CheckpointError(f"{path}: no model.safetensors or pytorch_model.bin found")
    if path.endswith(".safetensors"):
        return load_safetensors(path), config
    if path.endswith((".bin", ".pt", ".pth")):
        return load_torch_pickle(path), config
    raise CheckpointError(f"{path}: unrecognized checkpoint format")
