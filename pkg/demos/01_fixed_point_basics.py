"""Fixed-point formats, power-of-two quantization, and VPU primitives.

Everything in the quantized datapath is an integer code with a
power-of-two scale.  This walk-through shows how formats are chosen, what
quantization costs, and how the five vector-unit primitives compose.
"""

import numpy as np

from qmamba import FixFormat, FixTensor, VpuKind, dequantize, quantize_pot, vpu_eval
from qmamba.fixpoint import calibrate_format, choose_pot_exponent

rng = np.random.default_rng(0)

# A format is (width, frac): code c represents c * 2**-frac.
fmt = FixFormat(16, 12)
print(f"16-bit format with {fmt.frac} fraction bits: ulp = {fmt.ulp}")
print(f"representable range: [{fmt.code_min * fmt.ulp}, {fmt.code_max * fmt.ulp}]")

# Quantize a random vector and look at the error: always within half an ulp
# unless the value is out of range, in which case it saturates and is counted.
x = rng.standard_normal(8)
t = quantize_pot(x, fmt)
print("\noriginal:   ", np.round(x, 5))
print("dequantized:", np.round(dequantize(t), 5))
print("max error:  ", np.max(np.abs(dequantize(t) - x)), "<= ", fmt.ulp / 2)

big = quantize_pot(np.array([100.0, -0.5]), fmt)
print(f"\nout-of-range value saturates: codes={big.codes}, clamp count={big.sat}")

# choose_pot_exponent finds the smallest power-of-two scale that fits the
# data; calibrate_format adds integer headroom for unseen samples.
sample = rng.standard_normal(1000) * 3.2
p = choose_pot_exponent(sample, 16)
print(f"\nscale exponent for max |x| = {np.max(np.abs(sample)):.2f} at 16 bit: 2^{p}")
print("calibrated format with 3 headroom bits:", calibrate_format(sample))

# The five VPU primitives.  Elementwise units keep vector shape; the two
# tree units reduce to a scalar.  Products accumulate exactly in 32 bits
# and a single round-half-even narrowing happens at the output.
f0 = FixFormat(8, 0)
a = FixTensor(np.array([1, 2, 3, 4]), f0)
b = FixTensor(np.array([10, 20, 30, 40]), f0)
c = FixTensor(np.array([5, 5, 5, 5]), f0)
print("\nPAU a+b:   ", vpu_eval(VpuKind.PAU, a, b).codes)
print("PMU a*b:   ", vpu_eval(VpuKind.PMU, a, b).codes)
print("PMA a*b+c: ", vpu_eval(VpuKind.PMA, a, b, c).codes)
print("HAT sum(a):", vpu_eval(VpuKind.HAT, a).codes)
print("MAT a.b:   ", vpu_eval(VpuKind.MAT, a, b).codes)

# Narrowing to a requested output format rounds half-to-even and saturates.
wide = vpu_eval(VpuKind.MAT, a, b, out_fmt=FixFormat(8, 0))
print(f"MAT narrowed to 8-bit: code={wide.codes[0]} (saturated: {wide.sat} element)")
