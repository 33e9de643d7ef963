"""Fixed-point numeric core.

Everything inside the quantized datapath is carried as integer codes with a
power-of-two scale: value = code * 2**(-frac).  This module owns the format
descriptions, the rounding/saturation rules, power-of-two (PoT) quantization,
and the five vector-processing-unit (VPU) primitives that all quantized
compute is expressed in.

Rounding is round-half-to-even everywhere a value is narrowed; overflow
always saturates (never wraps) and is counted, so calibration failures are
visible instead of silently corrupting state.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

_WIDTHS = (8, 16, 32)


class VpuKind(enum.Enum):
    """The five vector processing unit types."""

    PAU = "pau"  # parallel adder: A + B, elementwise
    PMU = "pmu"  # parallel multiplier: A * B, elementwise
    PMA = "pma"  # parallel multiplier-adder: A * B + C, elementwise
    HAT = "hat"  # adder tree: sum(A) -> scalar
    MAT = "mat"  # multiplier-adder tree: sum(A * B) -> scalar


@dataclass(frozen=True)
class FixFormat:
    """A signed fixed-point format: `width` total bits, `frac` fraction bits.

    The PoT scaling exponent is p = -frac, so a code c represents the real
    value c * 2**(-frac).  `frac` may be negative (scales > 1) so that
    large-magnitude tensors still get PoT formats.
    """

    width: int
    frac: int

    def __post_init__(self):
        if self.width not in _WIDTHS:
            raise ValueError(f"width must be one of {_WIDTHS}, got {self.width}")

    @property
    def code_min(self) -> int:
        return -(1 << (self.width - 1))

    @property
    def code_max(self) -> int:
        return (1 << (self.width - 1)) - 1

    @property
    def ulp(self) -> float:
        """Real-value weight of one code step, 2**(-frac)."""
        return 2.0 ** (-self.frac)


@dataclass(frozen=True)
class FixTensor:
    """Integer-coded tensor plus its format.

    `codes` is always int64 storage; `fmt.width` bounds the representable
    range, not the storage dtype.  `sat` counts elements that were clamped
    while producing this tensor (0 for exact results).
    """

    codes: np.ndarray
    fmt: FixFormat
    sat: int = 0

    def __post_init__(self):
        object.__setattr__(self, "codes", np.asarray(self.codes, dtype=np.int64))

    @property
    def shape(self) -> tuple:
        return self.codes.shape

    def check(self) -> "FixTensor":
        """Assert every code is inside the format range."""
        if self.codes.size and (
            self.codes.min() < self.fmt.code_min or self.codes.max() > self.fmt.code_max
        ):
            raise ValueError("codes out of range for format")
        return self


def round_half_even(x: np.ndarray) -> np.ndarray:
    """Round float array to nearest integer, ties to even (np.rint)."""
    return np.rint(x)


def shift_round_half_even(v: np.ndarray, k: int) -> np.ndarray:
    """Divide an integer array by 2**k, rounding half to even.

    Negative k is an exact left shift.  Arithmetic right shift floors toward
    -inf, so the residue is always in [0, 2**k) and one tie rule covers both
    signs.
    """
    v = np.asarray(v, dtype=np.int64)
    if k <= 0:
        return v << (-k)
    q = v >> k
    r = v - (q << k)
    half = np.int64(1) << (k - 1)
    inc = (r > half) | ((r == half) & ((q & 1) == 1))
    return q + inc.astype(np.int64)


def saturate(codes: np.ndarray, fmt: FixFormat) -> tuple[np.ndarray, int]:
    """Clamp codes into fmt's range; returns (clamped, clamp count)."""
    lo, hi = fmt.code_min, fmt.code_max
    nsat = int(np.count_nonzero((codes < lo) | (codes > hi)))
    return np.clip(codes, lo, hi), nsat


def narrow(codes: np.ndarray, from_frac: int, fmt: FixFormat) -> FixTensor:
    """Re-scale wide integer codes at `from_frac` into `fmt`.

    Round-half-even on the dropped bits, then saturate.  This is the single
    narrowing rule used by every VPU output and every inter-stage requantize.
    """
    shifted = shift_round_half_even(codes, from_frac - fmt.frac)
    clamped, nsat = saturate(shifted, fmt)
    return FixTensor(clamped, fmt, nsat)


def choose_pot_exponent(x: np.ndarray, width: int) -> int:
    """Smallest p with max|x| / 2**p <= 2**(width-1) - 1; 0 for all-zero x."""
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise ValueError("empty calibration data")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite calibration data")
    m = float(np.max(np.abs(x)))
    if m == 0.0:
        return 0
    cmax = (1 << (width - 1)) - 1
    p = math.ceil(math.log2(m / cmax))
    # log2 rounding can be off by one at exact powers; settle by direct check
    while m / 2.0**p > cmax:
        p += 1
    while m / 2.0 ** (p - 1) <= cmax:
        p -= 1
    return p


def quantize_pot(x: np.ndarray, fmt: FixFormat) -> FixTensor:
    """Quantize real values into fmt: clamp(round_half_even(x * 2**frac))."""
    x = np.asarray(x, dtype=np.float64)
    codes = round_half_even(x * 2.0**fmt.frac).astype(np.int64)
    clamped, nsat = saturate(codes, fmt)
    return FixTensor(clamped, fmt, nsat)


def dequantize(t: FixTensor) -> np.ndarray:
    """Exact real values: codes * 2**(-frac)."""
    return t.codes.astype(np.float64) * t.fmt.ulp


def calibrate_format(
    sample: np.ndarray,
    width: int = 16,
    headroom_bits: int = 3,
    default_frac: int = 10,
) -> FixFormat:
    """Pick a PoT format from representative data, leaving integer headroom.

    headroom_bits integer bits are reserved above the observed max so unseen
    data slightly larger than the sample does not saturate.  All-zero samples
    get the default format.
    """
    sample = np.asarray(sample, dtype=np.float64)
    if sample.size == 0:
        raise ValueError("empty calibration sample")
    if not np.any(sample):
        return FixFormat(width, default_frac)
    p = choose_pot_exponent(sample, width)
    return FixFormat(width, -p - headroom_bits)


def _require_same_frac(a: FixTensor, b: FixTensor, kind: VpuKind):
    if a.fmt.frac != b.fmt.frac:
        raise ValueError(f"{kind.name} operands must share frac, got {a.fmt.frac} vs {b.fmt.frac}")


def _require_same_len(a: FixTensor, b: FixTensor, kind: VpuKind):
    if a.codes.shape != b.codes.shape:
        raise ValueError(f"{kind.name} operand lengths differ: {a.shape} vs {b.shape}")


def vpu_eval(
    kind: VpuKind,
    a: FixTensor,
    b: FixTensor | None = None,
    c: FixTensor | None = None,
    out_fmt: FixFormat | None = None,
) -> FixTensor:
    """Evaluate one VPU primitive on 1-D operands.

    PAU -> A+B, PMU -> A*B, PMA -> A*B+C (all elementwise), HAT -> sum(A),
    MAT -> sum(A*B) (scalars).  Adds require equal frac; multiply results sit
    at frac_a + frac_b and PMA's addend must already be at that frac.
    Accumulation is exact in a 32-bit-wide integer; the single narrowing to
    `out_fmt` happens last (default: 32-bit at the natural frac).
    """
    if kind in (VpuKind.PAU, VpuKind.PMU, VpuKind.PMA, VpuKind.MAT):
        if b is None:
            raise ValueError(f"{kind.name} requires operand b")
        _require_same_len(a, b, kind)

    if kind == VpuKind.PAU:
        _require_same_frac(a, b, kind)
        wide, wfrac = a.codes + b.codes, a.fmt.frac
    elif kind == VpuKind.PMU:
        wide, wfrac = a.codes * b.codes, a.fmt.frac + b.fmt.frac
    elif kind == VpuKind.PMA:
        if c is None:
            raise ValueError("PMA requires operand c")
        _require_same_len(a, c, kind)
        wfrac = a.fmt.frac + b.fmt.frac
        if c.fmt.frac != wfrac:
            raise ValueError(f"PMA addend frac must be {wfrac}, got {c.fmt.frac}")
        wide = a.codes * b.codes + c.codes
    elif kind == VpuKind.HAT:
        wide, wfrac = np.atleast_1d(np.sum(a.codes, dtype=np.int64)), a.fmt.frac
    elif kind == VpuKind.MAT:
        wide = np.atleast_1d(np.sum(a.codes * b.codes, dtype=np.int64))
        wfrac = a.fmt.frac + b.fmt.frac
    else:  # pragma: no cover
        raise ValueError(f"unknown VPU kind {kind}")

    if out_fmt is None:
        out_fmt = FixFormat(32, wfrac)
    return narrow(wide, wfrac, out_fmt)
