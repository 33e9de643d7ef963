"""Map an upstream Mamba2 checkpoint into the FMW schema.

The mapping is data-driven: data/namemap.json holds ordered regex rules,
so new upstream naming variants are file additions, not code changes.
Identity and squeeze rules are bit-preserving f32; only the decay-rate
tensor is derived (A = -exp(A_log)), declared as a transform in the map.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .fmwio import write_fmw
from .readers import CheckpointError, load_checkpoint

MAMBA2_DEFAULTS = {"expand": 2, "d_state": 128, "headdim": 64, "d_conv": 4}

LAYER_FIELDS = (
    "norm1.weight",
    "in_proj.weight",
    "conv.weight",
    "conv.bias",
    "ssm.A",
    "ssm.D",
    "ssm.dt_bias",
    "norm2.weight",
    "out_proj.weight",
)


def _transform(kind: str, arr: np.ndarray) -> np.ndarray:
    if kind == "identity":
        return np.ascontiguousarray(arr.astype(np.float32, copy=False))
    if kind == "squeeze_mid":
        if arr.ndim == 3 and arr.shape[1] == 1:
            arr = arr[:, 0, :]
        return np.ascontiguousarray(arr.astype(np.float32, copy=False))
    if kind == "neg_exp":
        return (-np.exp(arr.astype(np.float32))).astype(np.float32)
    raise ValueError(f"unknown transform {kind!r}")


@dataclass
class NameMap:
    """Ordered upstream-name to schema-name rules."""

    rules: list = field(default_factory=list)

    @classmethod
    def load_default(cls) -> "NameMap":
        text = resources.files("mamba2fmw.data").joinpath("namemap.json").read_text()
        data = json.loads(text)
        return cls(
            rules=[
                (re.compile(r["match"]), r["target"], r["transform"]) for r in data["rules"]
            ]
        )

    def apply(self, tensors: dict[str, np.ndarray]):
        """Returns (mapped {target: array}, unmapped upstream names)."""
        mapped: dict[str, np.ndarray] = {}
        unmapped: list[str] = []
        for name, arr in tensors.items():
            for rx, target, transform in self.rules:
                m = rx.match(name)
                if m:
                    out_name = target.format(**m.groupdict()) if m.groupdict() else target
                    if out_name in mapped:
                        raise CheckpointError(f"two upstream tensors map to {out_name!r}")
                    mapped[out_name] = _transform(transform, arr)
                    break
            else:
                unmapped.append(name)
        return mapped, unmapped


def infer_config(mapped: dict[str, np.ndarray], upstream_cfg: dict) -> dict:
    """Model dimensions from the tensors themselves, upstream config as tiebreak."""
    layer_ids = {
        int(m.group(1)) for m in (re.match(r"layers\.(\d+)\.", k) for k in mapped) if m
    }
    if not layer_ids:
        raise CheckpointError("no layer tensors found; architecture not recognizable")
    n_layers = max(layer_ids) + 1

    def need(name):
        if name not in mapped:
            raise CheckpointError(f"missing tensor {name!r} needed for config inference")
        return mapped[name]

    d_model = need("layers.0.norm1.weight").shape[0]
    out_proj = need("layers.0.out_proj.weight")
    d_inner = out_proj.shape[1]
    n_heads = need("layers.0.ssm.A").shape[0]
    conv_channels = need("layers.0.conv.weight").shape[0]
    d_state = (conv_channels - d_inner) // 2
    ssm_cfg = upstream_cfg.get("ssm_cfg", {})
    return {
        "n_layers": n_layers,
        "d_model": int(d_model),
        "expand": int(d_inner // d_model),
        "n_heads": int(n_heads),
        "head_dim": int(ssm_cfg.get("headdim", d_inner // n_heads)),
        "d_state": int(d_state),
        "d_conv": int(need("layers.0.conv.weight").shape[1]),
        "vocab_size": int(mapped["embedding.weight"].shape[0]) if "embedding.weight" in mapped else 0,
        "rms_eps": float(
            upstream_cfg.get("norm_epsilon", upstream_cfg.get("layer_norm_epsilon", 1e-5))
        ),
    }


def required_targets(cfg: dict) -> list[str]:
    names = []
    if cfg["vocab_size"] > 0:
        names.append("embedding.weight")
    for i in range(cfg["n_layers"]):
        names.extend(f"layers.{i}.{f}" for f in LAYER_FIELDS)
    names.append("final_norm.weight")
    return names


def convert(checkpoint_path: str, out_weights: str, out_config: str, namemap: NameMap | None = None) -> dict:
    """Convert; writes the FMW and config files, returns the mapping report.

    Output bytes are deterministic: tensors are emitted in canonical schema
    order and the config JSON is key-sorted.
    """
    tensors, upstream_cfg = load_checkpoint(checkpoint_path)
    namemap = namemap or NameMap.load_default()
    mapped, unmapped = namemap.apply(tensors)
    cfg = infer_config(mapped, upstream_cfg)

    missing = [t for t in required_targets(cfg) if t not in mapped]
    if missing:
        raise CheckpointError(f"missing tensor {missing[0]!r} (of {len(missing)} missing)")

    ordered = {}
    for name in required_targets(cfg):
        ordered[name] = mapped[name]
    if "lm_head.weight" in mapped:
        ordered["lm_head.weight"] = mapped["lm_head.weight"]
    write_fmw(ordered, out_weights)
    with open(out_config, "w") as f:
        json.dump(cfg, f, indent=2, sort_keys=True)
        f.write("\n")

    return {
        "upstream_tensors": len(tensors),
        "mapped": len(mapped),
        "unmapped": sorted(unmapped),
        "emitted": len(ordered),
        "config": cfg,
    }
