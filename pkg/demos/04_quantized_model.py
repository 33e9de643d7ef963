"""A complete small model: float reference vs quantized pipeline.

Builds random weights for a 2-layer block stack, quantizes the checkpoint
(Hadamard int8 projections, PoT conv and SSM), and compares the two paths
on the same inputs.  Also demonstrates streaming: prefill then decode
continues bit-exactly from the cached state.
"""

import os
import tempfile

import numpy as np

from qmamba import ModelConfig, build_model, model_decode_step, model_prefill, quantize_checkpoint
from qmamba.analysis import compare_models
from qmamba.fmw import FmwTensor, load_fmw, save_fmw


def random_checkpoint(cfg, rng):
    """Schema-complete random float weights at sane magnitudes."""
    f32 = lambda a: FmwTensor(np.asarray(a, dtype=np.float32))
    t = {}
    for i in range(cfg.n_layers):
        p = f"layers.{i}"
        t[f"{p}.norm1.weight"] = f32(1 + 0.1 * rng.standard_normal(cfg.d_model))
        t[f"{p}.in_proj.weight"] = f32(0.2 * rng.standard_normal((cfg.in_proj_out, cfg.d_model)))
        t[f"{p}.conv.weight"] = f32(0.3 * rng.standard_normal((cfg.conv_channels, 4)))
        t[f"{p}.conv.bias"] = f32(0.05 * rng.standard_normal(cfg.conv_channels))
        t[f"{p}.ssm.A"] = f32(-np.exp(0.5 * rng.standard_normal(cfg.n_heads)))
        t[f"{p}.ssm.D"] = f32(0.5 * rng.standard_normal(cfg.n_heads))
        t[f"{p}.ssm.dt_bias"] = f32(0.3 * rng.standard_normal(cfg.n_heads))
        t[f"{p}.norm2.weight"] = f32(1 + 0.1 * rng.standard_normal(cfg.d_inner))
        t[f"{p}.out_proj.weight"] = f32(0.2 * rng.standard_normal((cfg.d_model, cfg.d_inner)))
    t["final_norm.weight"] = f32(np.ones(cfg.d_model))
    return t


cfg = ModelConfig(n_layers=2, d_model=64, expand=2, n_heads=8, head_dim=16, d_state=16)
rng = np.random.default_rng(4)
tensors = random_checkpoint(cfg, rng)
x = rng.standard_normal((12, cfg.d_model))

# quantize with the run data as calibration (static activation scales)
qt = quantize_checkpoint(tensors, cfg, calib=x)
model_f = build_model(tensors, cfg)
model_q = build_model(qt, cfg)
print(f"float tensors: {len(tensors)}, quantized tensors: {len(qt)}")

# the FMW container round-trips everything bit-exactly
with tempfile.TemporaryDirectory() as tmp:
    path = os.path.join(tmp, "q.fmw")
    save_fmw(qt, path)
    size = os.path.getsize(path)
    reloaded = build_model(load_fmw(path), cfg)
    print(f"quantized checkpoint on disk: {size} bytes, loads as quantized={reloaded.quantized}")

# error report, layer by layer
report = compare_models(model_f, model_q, x)
for i, layer in enumerate(report["layers"]):
    print(f"layer {i}: rel_l2={layer['relative_l2']:.4f} cosine={layer['cosine']:.4f}")
e = report["end_to_end"]
print(f"end-to-end: rel_l2={e['relative_l2']:.4f} cosine={e['cosine']:.4f}")

# streaming: prefill 11 rows, decode the 12th; identical to one prefill(12)
stats = {}
full, _ = model_prefill(x, model_q, stats)
pre, caches = model_prefill(x[:11], model_q)
last = model_decode_step(x[11], model_q, caches)
print(f"\nprefill(12) == prefill(11) + decode(1): {np.array_equal(full[11], last)}")
print(f"saturation counters over the full run: {stats}")
