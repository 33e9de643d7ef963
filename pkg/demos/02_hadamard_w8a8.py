"""Grouped Hadamard rotation: why it makes int8 activations work.

Activations with heavy outliers waste almost the whole int8 range on a few
entries.  Rotating each feature group by an orthogonal +-1 matrix spreads
that energy across the group, so one symmetric scale serves everyone.
This script measures the effect and runs the full quantized linear layer
both ways, then shows the bit-exact hardware requantization path.
"""

import numpy as np

from qmamba import (
    FixFormat,
    build_hadamard,
    build_quant_linear,
    dequantize,
    hadamard_transform_groups,
    hw_quantized_linear,
    plain_w8a8_linear,
    quantize_pot,
    quantized_linear,
    requant_params,
)

rng = np.random.default_rng(1)

# The transform matrix: +-1 entries, rows orthogonal, H @ H.T = n*I.
h4 = build_hadamard(4)
print("order-4 Hadamard:\n", h4)
print("H @ H.T == 4I:", np.array_equal(h4 @ h4.T, 4 * np.eye(4, dtype=np.int64)))

# Inject outliers into 1% of entries and compare crest factors.
x = rng.standard_normal((16, 256))
idx = rng.choice(x.size, x.size // 100, replace=False)
x.ravel()[idx] *= 100
crest = lambda a: np.max(np.abs(a)) / np.sqrt(np.mean(a**2))
x_rot = hadamard_transform_groups(x, m=4)
print(f"\ncrest factor before rotation: {crest(x):6.1f}")
print(f"crest factor after rotation:  {crest(x_rot):6.1f}")

# End-to-end: quantized matmul error with and without rotation.
w = rng.standard_normal((256, 256))
ref = x @ w.T
layer = build_quant_linear(w, m=4)
err_rot = np.linalg.norm(quantized_linear(x, layer) - ref) / np.linalg.norm(ref)
err_plain = np.linalg.norm(plain_w8a8_linear(x, w) - ref) / np.linalg.norm(ref)
print(f"\nrelative error, rotated W8A8: {err_rot:.5f}")
print(f"relative error, plain W8A8:   {err_plain:.5f}")

# The hardware path replaces the division by the activation scale with a
# 15-bit multiply and a shift; (s_coe, s_shift) realize 1/s exactly as
# 2^shift / coe, and both software and hardware paths use that value.
s = 0.0123
coe, shift = requant_params(s)
print(f"\n1/{s} as multiply-shift: coe={coe}, shift={shift}, "
      f"realized 1/s = {coe / 2.0**shift:.4f} (true {1/s:.4f})")

calib = rng.standard_normal((32, 64))
layer_hw = build_quant_linear(rng.standard_normal((32, 64)), m=1, calib_x=calib)
xq = quantize_pot(rng.standard_normal((4, 64)), FixFormat(16, 11))
out_fmt = FixFormat(16, 8)
y_hw = dequantize(hw_quantized_linear(xq, layer_hw, out_fmt))
y_alg = quantized_linear(dequantize(xq), layer_hw)
print(f"hardware vs algorithm path: max diff = "
      f"{np.max(np.abs(y_hw - y_alg)) / out_fmt.ulp:.3f} output ulp (<= 1)")
