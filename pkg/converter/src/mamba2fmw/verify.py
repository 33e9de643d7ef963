"""Validate a converted FMW/config pair without running the engine.

Checks: container integrity (magic, CRC, record structure), schema
completeness for the declared config, shape consistency of every tensor,
and basic value sanity (negative decay rates, kernel length 4).
"""

from __future__ import annotations

import json

import numpy as np

from .convert import required_targets
from .fmwio import FmwReadError, read_fmw


def verify(weights_path: str, config_path: str) -> list[str]:
    """Returns a list of failure strings; empty means the pair is valid."""
    failures: list[str] = []
    try:
        tensors = read_fmw(weights_path)
    except (FmwReadError, OSError) as e:
        return [f"container: {e}"]
    try:
        with open(config_path) as f:
            cfg = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        return [f"config: {e}"]

    for key in ("n_layers", "d_model", "expand", "n_heads", "head_dim", "d_state",
                "d_conv", "vocab_size"):
        if key not in cfg:
            failures.append(f"config: missing field {key!r}")
    if failures:
        return failures

    d_model = cfg["d_model"]
    d_inner = cfg["expand"] * d_model
    conv_channels = d_inner + 2 * cfg["d_state"]
    in_proj_out = 2 * d_inner + 2 * cfg["d_state"] + cfg["n_heads"]
    if cfg["expand"] * d_model != cfg["n_heads"] * cfg["head_dim"]:
        failures.append("config: expand*d_model != n_heads*head_dim")

    shapes = {"embedding.weight": (cfg["vocab_size"], d_model), "final_norm.weight": (d_model,)}
    for i in range(cfg["n_layers"]):
        p = f"layers.{i}"
        shapes.update({
            f"{p}.norm1.weight": (d_model,),
            f"{p}.in_proj.weight": (in_proj_out, d_model),
            f"{p}.conv.weight": (conv_channels, cfg["d_conv"]),
            f"{p}.conv.bias": (conv_channels,),
            f"{p}.ssm.A": (cfg["n_heads"],),
            f"{p}.ssm.D": (cfg["n_heads"],),
            f"{p}.ssm.dt_bias": (cfg["n_heads"],),
            f"{p}.norm2.weight": (d_inner,),
            f"{p}.out_proj.weight": (d_model, d_inner),
        })

    for name in required_targets(cfg):
        if name not in tensors:
            failures.append(f"missing: {name}")
        elif tensors[name].shape != shapes[name]:
            failures.append(
                f"shape: {name} is {tensors[name].shape}, expected {shapes[name]}"
            )

    for i in range(cfg["n_layers"]):
        a = tensors.get(f"layers.{i}.ssm.A")
        if a is not None and a.size and np.any(a >= 0):
            failures.append(f"value: layers.{i}.ssm.A has non-negative entries")

    for name, arr in tensors.items():
        if name not in shapes and name != "lm_head.weight":
            failures.append(f"unexpected: {name}")
        if arr.dtype != np.float32:
            failures.append(f"dtype: {name} is {arr.dtype}, expected float32")
    return failures
