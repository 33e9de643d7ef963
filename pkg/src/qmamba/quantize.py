"""Offline checkpoint quantization.

Takes a float FMW checkpoint, runs a calibration pass through the float
model to observe activation ranges, and emits the quantized FMW:
grouped-Hadamard int8 projection weights with their scales and hardware
requantization pairs, per-channel PoT conv kernels, 16-bit fixed SSM
parameters, and the calibrated per-layer format vectors.  Norm weights,
conv biases, embeddings and heads pass through as float32.

The output is a pure function of (input tensors, config, calibration
sample); with no sample given, a seeded synthetic one is used so repeated
runs produce byte-identical files.
"""

from __future__ import annotations

import numpy as np

from .fixpoint import calibrate_format, choose_pot_exponent
from .fmw import FmwTensor
from .hadamard import build_quant_linear
from .model import SSM_FRAC_KEYS, ModelConfig, build_model, is_quantized, model_prefill
from .ssm import SsmDims, ssm_quant_calibrate

DEFAULT_GROUP_WIDTH = 64


def synthetic_calibration(cfg: ModelConfig, length: int = 32, seed: int = 0) -> np.ndarray:
    """Deterministic stand-in calibration input (tokens or hidden states)."""
    rng = np.random.default_rng(seed)
    if cfg.vocab_size > 0:
        return rng.integers(0, cfg.vocab_size, size=length)
    return rng.standard_normal((length, cfg.d_model))


def _group_count(d: int, width: int, tensor_name: str) -> int:
    if width < 1 or d % width != 0 or (width & (width - 1)) != 0:
        raise ValueError(f"{tensor_name}: feature dim {d} not divisible into 2^k groups of {width}")
    return d // width


def _linear_records(out: dict, prefix: str, w: np.ndarray, m: int, calib_x: np.ndarray, rotate: bool):
    layer = build_quant_linear(w, m, calib_x=calib_x, rotate=rotate)
    s_coe, s_shift = layer.hwq
    out[f"{prefix}.wq"] = FmwTensor(layer.wq.astype(np.int8))
    out[f"{prefix}.s_w"] = FmwTensor(np.float32(layer.s_w))
    out[f"{prefix}.s_coe"] = FmwTensor(np.int16(s_coe))
    out[f"{prefix}.s_shift"] = FmwTensor(np.int16(s_shift))
    out[f"{prefix}.m"] = FmwTensor(np.int16(m if rotate else 0))


def quantize_checkpoint(
    tensors: dict,
    cfg: ModelConfig,
    calib: np.ndarray | None = None,
    group_width: int = DEFAULT_GROUP_WIDTH,
    rotate: bool = True,
) -> dict:
    """Quantize a float FMW tensor dict; returns the quantized tensor dict.

    rotate=False produces the plain per-tensor W8A8 baseline (stored with
    group count 0), kept only for error-comparison experiments.
    """
    if is_quantized(tensors):
        raise ValueError("already quantized")
    model = build_model(tensors, cfg)
    if model.quantized:
        raise ValueError("already quantized")

    calib_input = calib if calib is not None else synthetic_calibration(cfg)
    captures = [dict() for _ in range(cfg.n_layers)]
    model_prefill(calib_input, model, capture=captures)

    out: dict[str, FmwTensor] = {}
    if "embedding.weight" in tensors:
        out["embedding.weight"] = tensors["embedding.weight"]

    for i in range(cfg.n_layers):
        p = f"layers.{i}"
        params, cap = model.blocks[i], captures[i]
        out[f"{p}.norm1.weight"] = tensors[f"{p}.norm1.weight"]

        m_in = _group_count(cfg.d_model, group_width, f"{p}.in_proj.weight")
        _linear_records(
            out, f"{p}.in_proj", params.in_proj_w, m_in,
            np.concatenate(cap["in_proj_in"]), rotate,
        )

        wp = np.array(
            [choose_pot_exponent(params.conv_w[ch], 8) if np.any(params.conv_w[ch]) else 0
             for ch in range(cfg.conv_channels)],
            dtype=np.int64,
        )
        wq = np.rint(params.conv_w / np.exp2(wp.astype(np.float64))[:, None])
        out[f"{p}.conv.wq"] = FmwTensor(np.clip(wq, -128, 127).astype(np.int8))
        out[f"{p}.conv.wp"] = FmwTensor(wp.astype(np.int16))
        out[f"{p}.conv.bias"] = tensors[f"{p}.conv.bias"]
        conv_in_fmt = calibrate_format(np.concatenate(cap["conv_in"]))
        conv_out_fmt = calibrate_format(np.concatenate(cap["conv_out"]))
        out[f"{p}.conv.fracs"] = FmwTensor(
            np.array([conv_in_fmt.frac, conv_out_fmt.frac], dtype=np.int16)
        )

        qssm = ssm_quant_calibrate(
            np.concatenate(cap["ssm_x"]),
            np.concatenate(cap["ssm_b"]),
            np.concatenate(cap["ssm_c"]),
            np.concatenate(cap["ssm_dt"]),
            params.ssm,
            SsmDims(cfg.n_heads, cfg.head_dim, cfg.d_state),
        )
        for name, fix in (("A", qssm.a_fix), ("D", qssm.d_fix), ("dt_bias", qssm.dt_bias_fix)):
            out[f"{p}.ssm.{name}"] = FmwTensor(fix.codes.astype(np.int16), fix.fmt.frac)
        out[f"{p}.ssm.fracs"] = FmwTensor(
            np.array([getattr(qssm.fmts, k).frac for k in SSM_FRAC_KEYS], dtype=np.int16)
        )

        out[f"{p}.norm2.weight"] = tensors[f"{p}.norm2.weight"]
        m_out = _group_count(cfg.d_inner, group_width, f"{p}.out_proj.weight")
        _linear_records(
            out, f"{p}.out_proj", params.out_proj_w, m_out,
            np.concatenate(cap["out_proj_in"]), rotate,
        )

    for name in ("final_norm.weight", "lm_head.weight"):
        if name in tensors:
            out[name] = tensors[name]
    return out
