"""Grouped Hadamard rotation and W8A8 linear layers.

Activations and weights are partitioned into m column groups of width
n = d/m (a power of two), each group is rotated by the unnormalized
Sylvester Hadamard matrix, and both sides are quantized to int8 with a
single per-tensor symmetric scale taken over the concatenated rotated
groups.  The integer matmul accumulates group partial sums in 32 bits and
the result is dequantized by s_X * s_W * m/d; the m/d factor cancels the
n = d/m gain of the unnormalized transform.

Rotating by an orthogonal matrix spreads outlier energy across the group,
which is what makes symmetric int8 usable on heavy-tailed activations.

Two activation-scaling modes exist:
  * dynamic - s_X is recomputed from each incoming batch (the literal
    algorithm; default for standalone layers);
  * static  - s_X was fixed at calibration time and is carried as the
    hardware requantization pair (s_coe, s_shift).  The realized scale is
    exactly 2**s_shift / s_coe, and both the algorithm path and the
    hardware emulation use that same realized value, which is what makes
    the two paths agree bit-for-bit up to the final output rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fixpoint import (
    FixFormat,
    FixTensor,
    round_half_even,
    saturate,
    shift_round_half_even,
)


# static activation scales widen the calibrated range by 5% so that
# in-distribution data perturbed by upstream quantization error does not
# clip; dynamic mode uses the exact per-batch scale
STATIC_SCALE_MARGIN = 1.05


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def build_hadamard(n: int) -> np.ndarray:
    """Sylvester Hadamard matrix of order n (entries +-1, int64).

    H1 = [[1]]; H_{2n} = [[H, H], [H, -H]].  Satisfies H @ H.T == n * I
    exactly in integer arithmetic.
    """
    if not _is_pow2(n):
        raise ValueError("group dimension must be 2^k")
    h = np.array([[1]], dtype=np.int64)
    while h.shape[0] < n:
        h = np.block([[h, h], [h, -h]])
    return h


def hadamard_transform_groups(x: np.ndarray, m: int) -> np.ndarray:
    """Right-multiply each width-(d/m) column group of x by the Hadamard matrix."""
    x = np.asarray(x, dtype=np.float64)
    d = x.shape[-1]
    if m < 1 or d % m != 0:
        raise ValueError(f"feature dim {d} not divisible into {m} groups")
    n = d // m
    h = build_hadamard(n).astype(np.float64)
    parts = [x[..., i * n : (i + 1) * n] @ h for i in range(m)]
    return np.concatenate(parts, axis=-1)


def find_scale(x: np.ndarray) -> float:
    """Symmetric int8 scale, max|x| / 127; 1.0 for all-zero input."""
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise ValueError("empty tensor")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite values")
    m = float(np.max(np.abs(x)))
    return m / 127.0 if m > 0.0 else 1.0


def quantize_int8(x: np.ndarray, s: float) -> np.ndarray:
    """clamp(round_half_even(x / s), -128, 127) as int64 codes."""
    if not s > 0:
        raise ValueError("scale must be positive")
    return np.clip(round_half_even(np.asarray(x, dtype=np.float64) / s), -128, 127).astype(
        np.int64
    )


def requant_params(s: float) -> tuple[int, int]:
    """15-bit multiplier/shift pair approximating 1/s.

    s_coe = round((1/s) * 2**s_shift) with s_shift chosen so that
    s_coe lands in [2**14, 2**15); v -> (v * s_coe) >> s_shift then
    approximates v / s with relative error <= 2**-14 before shift rounding.
    """
    if not (isinstance(s, (int, float)) and math.isfinite(s) and s > 0):
        raise ValueError("scale must be positive and finite")
    inv = 1.0 / s
    shift = 14 - math.floor(math.log2(inv))
    coe = round(inv * 2.0**shift)
    if coe == 1 << 15:  # rounding crossed the window top
        coe >>= 1
        shift -= 1
    if coe < 1 << 14:  # log2 edge case at exact powers
        coe <<= 1
        shift += 1
    assert (1 << 14) <= coe < (1 << 15)
    return coe, shift


def realized_scale(s_coe: int, s_shift: int) -> float:
    """The activation scale actually implemented by (x*s_coe) >> s_shift."""
    return 2.0**s_shift / s_coe


@dataclass(frozen=True)
class QuantLinearLayer:
    """Offline-quantized linear layer y = x @ W.T with grouped rotation.

    wq holds the rotated int8 weight codes as one (q, d) block; group i is
    the column slice [i*n, (i+1)*n).  hwq = (s_coe, s_shift) carries the
    calibrated activation scale for static mode; None means dynamic.
    rotate=False disables the Hadamard transform (plain per-tensor W8A8,
    kept as the comparison baseline).
    """

    d: int
    q: int
    m: int
    wq: np.ndarray
    s_w: float
    hwq: tuple[int, int] | None = None
    rotate: bool = True

    def __post_init__(self):
        if self.d % self.m != 0:
            raise ValueError(f"d={self.d} not divisible by m={self.m}")
        if self.rotate and not _is_pow2(self.d // self.m):
            raise ValueError("group dimension must be 2^k")
        if self.wq.shape != (self.q, self.d):
            raise ValueError(f"wq shape {self.wq.shape} != ({self.q}, {self.d})")
        if self.wq.size and (self.wq.min() < -128 or self.wq.max() > 127):
            raise ValueError("wq codes outside int8 range")

    @property
    def group_width(self) -> int:
        return self.d // self.m

    def activation_scale(self, x_h: np.ndarray) -> float:
        """Static (realized) scale if calibrated, else dynamic from x_h."""
        if self.hwq is not None:
            return realized_scale(*self.hwq)
        return find_scale(x_h)


def build_quant_linear(
    w: np.ndarray,
    m: int,
    calib_x: np.ndarray | None = None,
    rotate: bool = True,
) -> QuantLinearLayer:
    """Quantize a float (q, d) weight matrix into a QuantLinearLayer.

    Weights are rotated and quantized here, once, offline; only activations
    are rotated at run time.  If calibration activations are given, the
    activation scale is searched on their rotated form and frozen into the
    hardware requantization pair.
    """
    w = np.asarray(w, dtype=np.float64)
    q, d = w.shape
    w_h = hadamard_transform_groups(w, m) if rotate else w
    s_w = find_scale(w_h) if np.any(w_h) else 1.0
    wq = quantize_int8(w_h, s_w)
    hwq = None
    if calib_x is not None:
        x_h = hadamard_transform_groups(calib_x, m) if rotate else np.asarray(calib_x)
        hwq = requant_params(find_scale(x_h) * STATIC_SCALE_MARGIN)
    return QuantLinearLayer(d=d, q=q, m=m, wq=wq, s_w=s_w, hwq=hwq, rotate=rotate)


def _dequant_gain(layer: QuantLinearLayer) -> float:
    # m/d cancels the unnormalized-Hadamard gain; no rotation, no gain.
    return layer.m / layer.d if layer.rotate else 1.0


def quantized_linear(
    x: np.ndarray,
    layer: QuantLinearLayer,
    stats: dict | None = None,
) -> np.ndarray:
    """Grouped-rotation W8A8 matmul: returns real (l, q) outputs.

    Rotate activations per group, quantize with one per-tensor scale,
    accumulate the int8 x int8 products exactly, then dequantize as
    ((Yhat * m/d) * s_X) * s_W.  The multiply order is fixed so results are
    reproducible bit-for-bit.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != layer.d:
        raise ValueError(f"input width {x.shape[-1]} != layer d {layer.d}")
    x_h = hadamard_transform_groups(x, layer.m) if layer.rotate else x
    if layer.hwq is not None:
        # static mode mirrors the hardware multiply-shift exactly: the
        # multiply by s_coe and the power-of-two scaling are exact in
        # float64 for grid inputs, so rounding ties resolve identically
        # in both paths
        s_coe, s_shift = layer.hwq
        s_x = realized_scale(s_coe, s_shift)
        scaled = (x_h * s_coe) * 2.0**-s_shift
    else:
        s_x = find_scale(x_h)
        scaled = x_h / s_x
    xq = np.clip(round_half_even(scaled), -128, 127).astype(np.int64)
    if stats is not None:
        full = np.abs(round_half_even(scaled)) > 127
        stats["linear_clip"] = stats.get("linear_clip", 0) + int(np.count_nonzero(full))
    # integer-valued float64 matmul: products <= 127^2 * d << 2^53, so the
    # accumulation is exact and independent of BLAS thread count
    yhat = xq.astype(np.float64) @ layer.wq.T.astype(np.float64)
    return ((yhat * _dequant_gain(layer)) * s_x) * layer.s_w


def plain_w8a8_linear(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Per-tensor symmetric W8A8 matmul without rotation (baseline)."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    s_x, s_w = find_scale(x), find_scale(w) if np.any(w) else 1.0
    yhat = quantize_int8(x, s_x).astype(np.float64) @ quantize_int8(w, s_w).T.astype(np.float64)
    return (yhat * s_x) * s_w


def hw_quantized_linear(
    x: FixTensor,
    layer: QuantLinearLayer,
    out_fmt: FixFormat,
) -> FixTensor:
    """Bit-defined emulation of the hardware linear datapath.

    Stages, all integer until the last:
      1. Hadamard products: adder trees over sign-recoded input codes
         (H entries are +-1, so each rotated element is a signed sum),
         exact in wide integers.
      2. Requantization to int8 by (code * s_coe) >> (s_shift + frac) with
         round-half-even on the shifted-out bits, then clamp to [-128, 127].
      3. int8 MAT matmuls per group, partial sums reduced in 32-bit.
      4. The accumulated integer result is scaled into `out_fmt`; the wide
         final multiplier is emulated in float64 and rounded once.

    With a static-calibrated layer this agrees with quantized_linear within
    one output ulp (stage 2 is bit-identical to the algorithm's rounding
    because both use the realized scale).
    """
    codes = x.codes
    if codes.shape[-1] != layer.d:
        raise ValueError(f"input width {codes.shape[-1]} != layer d {layer.d}")
    n = layer.group_width
    nsat = 0

    if layer.rotate:
        h = build_hadamard(n)
        xh = np.concatenate(
            [codes[..., i * n : (i + 1) * n] @ h for i in range(layer.m)], axis=-1
        )
    else:
        xh = codes

    if layer.hwq is not None:
        s_coe, s_shift = layer.hwq
    else:
        s_coe, s_shift = requant_params(find_scale(xh.astype(np.float64) * x.fmt.ulp))
    s_x = realized_scale(s_coe, s_shift)

    xq = shift_round_half_even(xh * np.int64(s_coe), s_shift + x.fmt.frac)
    xq, k = saturate(xq, FixFormat(8, 0))
    nsat += k

    yhat = xq @ layer.wq.T  # int64 exact; 32-bit suffices on hardware

    g = (_dequant_gain(layer) * s_x) * layer.s_w
    out_codes = round_half_even(yhat.astype(np.float64) * g * 2.0**out_fmt.frac)
    out_codes, k = saturate(out_codes.astype(np.int64), out_fmt)
    nsat += k
    return FixTensor(out_codes, out_fmt, nsat)
