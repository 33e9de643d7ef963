"""Shift-based exponential and SoftPlus approximation.

The negative-domain exponential is computed as e^x = 2^(x*log2e) with
log2e truncated to 4 fraction bits (23/16 exactly); the product t splits
into integer part u and fractional part v in (-1, 0], 2^v comes from an
8-segment chord (endpoint-interpolating) piecewise-linear table, and the
2^u factor is a plain right shift by |u|.

SoftPlus reuses the same unit through its symmetry: for x <= 0 it is
approximated by e^x, for x > 0 by e^(-x) + x.  That makes SoftPlus(0) = 1
rather than ln 2; the gap is inherited from the ln(1+e^x) ~ e^x
approximation and is intentional, as is the 23/16 log2e constant (so
e.g. e^-1 evaluates near 0.3695, not 0.36788).

Both a float64 reference path and a 16-bit fixed-point path are provided;
the fixed path mirrors the multiplexed hardware unit: a preprocessing
negator for positive SoftPlus inputs, a delay register holding the
original input, the shift-and-PWL exponential core, and a postprocessing
adder.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fixpoint import FixFormat, FixTensor, saturate, shift_round_half_even

LOG2E = 23.0 / 16.0  # (1.0111)_2
LOG2E_CODE = 23  # log2e at 4 fraction bits
LOG2E_FRAC = 4

N_SEGMENTS = 8
COEF_FRAC = 14  # fixed-point position of slope/intercept codes
EXP_FRAC = 14  # exponential outputs live in (0, 1]


@dataclass(frozen=True)
class PwlTable:
    """First-order segments approximating 2^v on (-1, 0].

    Segment i covers [-1 + i/8, -1 + (i+1)/8]; slope/intercept are the
    chord through the segment endpoints, so the table is exact at v = 0
    and at every segment boundary, and monotone like 2^v itself.  The
    16-bit code mirrors are used by the fixed-point path.
    """

    v_lo: np.ndarray
    slope: np.ndarray
    intercept: np.ndarray
    slope_code: np.ndarray
    intercept_code: np.ndarray

    def eval(self, v: np.ndarray) -> np.ndarray:
        """Real-path evaluation of the table at v in (-1, 0]."""
        v = np.asarray(v, dtype=np.float64)
        idx = self.segment_index(v)
        return self.slope[idx] * v + self.intercept[idx]

    @staticmethod
    def segment_index(v: np.ndarray) -> np.ndarray:
        back = np.minimum(np.floor(-np.asarray(v) * N_SEGMENTS).astype(np.int64), N_SEGMENTS - 1)
        return N_SEGMENTS - 1 - back


def build_pwl_table() -> PwlTable:
    """Chord-interpolate 2^v over 8 uniform segments of (-1, 0]."""
    lo = -1.0 + np.arange(N_SEGMENTS, dtype=np.float64) / N_SEGMENTS
    hi = lo + 1.0 / N_SEGMENTS
    y_lo, y_hi = np.exp2(lo), np.exp2(hi)
    slope = (y_hi - y_lo) * N_SEGMENTS
    intercept = y_hi - slope * hi
    scale = 2.0**COEF_FRAC
    return PwlTable(
        v_lo=lo,
        slope=slope,
        intercept=intercept,
        slope_code=np.rint(slope * scale).astype(np.int64),
        intercept_code=np.rint(intercept * scale).astype(np.int64),
    )


_DEFAULT_TABLE: PwlTable | None = None


def default_table() -> PwlTable:
    global _DEFAULT_TABLE
    if _DEFAULT_TABLE is None:
        _DEFAULT_TABLE = build_pwl_table()
    return _DEFAULT_TABLE


def split_uv(t):
    """Split t <= 0 into integer u and fractional v with v in (-1, 0].

    Returns (u, v) with t = u + v, both non-positive.  Accepts scalars or
    arrays.
    """
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr > 0):
        raise ValueError("split requires non-positive input")
    u = np.ceil(t_arr)
    v = t_arr - u
    if np.isscalar(t) or t_arr.ndim == 0:
        return int(u), float(v)
    return u, v


def exp_neg_approx(x, table: PwlTable | None = None):
    """Approximate e^x for x <= 0; result in (0, 1].

    t = x * 23/16; 2^v from the chord table; 2^u as an exact power-of-two
    multiply (the real-path mirror of the hardware right shift).
    """
    table = table or default_table()
    x_arr = np.asarray(x, dtype=np.float64)
    if np.any(x_arr > 0):
        raise ValueError("exponential mode requires non-positive input")
    t = x_arr * LOG2E
    u = np.ceil(t)
    v = t - u
    y = table.eval(v) * np.exp2(u)
    return float(y) if (np.isscalar(x) or x_arr.ndim == 0) else y


def softplus_approx(x, table: PwlTable | None = None):
    """SoftPlus via symmetry: e^x for x <= 0, e^(-x) + x for x > 0.

    Always positive and always > x; softplus(0) = 1 by construction.
    """
    table = table or default_table()
    x_arr = np.asarray(x, dtype=np.float64)
    e = exp_neg_approx(-np.abs(x_arr), table)
    y = np.where(x_arr > 0, e + x_arr, e)
    return float(y) if (np.isscalar(x) or x_arr.ndim == 0) else y


def _exp_core_codes(codes: np.ndarray, frac: int, table: PwlTable) -> np.ndarray:
    """Fixed-point exponential core: non-positive codes at `frac` -> codes at EXP_FRAC."""
    t_code = codes * np.int64(LOG2E_CODE)
    t_frac = frac + LOG2E_FRAC
    u = -((-t_code) >> t_frac)  # ceil(t) for t <= 0
    v_code = t_code - (u << t_frac)  # in (-2**t_frac, 0]
    back = np.minimum((-v_code * N_SEGMENTS) >> t_frac, N_SEGMENTS - 1)
    idx = N_SEGMENTS - 1 - back
    y = shift_round_half_even(table.slope_code[idx] * v_code, t_frac) + table.intercept_code[idx]
    return _shift_per_lane(y, -u)


def _shift_per_lane(y: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Per-lane round-half-even right shift (k >= 0, clamped below 63)."""
    k = np.minimum(np.asarray(k, dtype=np.int64), 62)
    q = y >> k
    r = y - (q << k)
    half = np.where(k > 0, np.int64(1) << np.maximum(k - 1, 0), np.int64(0))
    inc = (k > 0) & ((r > half) | ((r == half) & ((q & 1) == 1)))
    return q + inc.astype(np.int64)


def nl_unit_eval(
    mode: str,
    lanes: FixTensor,
    table: PwlTable | None = None,
    lane_count: int = 24,
) -> FixTensor:
    """Emulate the multiplexed nonlinear unit on a vector of 16-bit lanes.

    mode "exp": every lane must be non-positive; positive lanes are clamped
    to zero and counted in the result's sat diagnostics.  Output format is
    16-bit at EXP_FRAC.

    mode "softplus": positive lanes are negated by the preprocessing stage
    while the original value is held in the delay register; after the
    exponential core, the held value is added back on those lanes.  Output
    format is 16-bit at the input frac so the final addition is exact.
    """
    if mode not in ("exp", "softplus"):
        raise ValueError(f"unknown mode {mode!r}")
    if lanes.fmt.width != 16:
        raise ValueError("nonlinear unit lanes must be 16-bit")
    if lanes.codes.ndim != 1 or lanes.codes.shape[0] != lane_count:
        raise ValueError(f"expected {lane_count} lanes, got shape {lanes.shape}")
    table = table or default_table()
    codes = lanes.codes
    frac = lanes.fmt.frac
    diag = 0

    if mode == "exp":
        pos = codes > 0
        diag += int(np.count_nonzero(pos))
        e = _exp_core_codes(np.where(pos, 0, codes), frac, table)
        out, k = saturate(e, FixFormat(16, EXP_FRAC))
        return FixTensor(out, FixFormat(16, EXP_FRAC), diag + k)

    pos = codes > 0
    e = _exp_core_codes(np.where(pos, -codes, codes), frac, table)
    aligned = shift_round_half_even(e, EXP_FRAC - frac)
    out_codes = np.where(pos, aligned + codes, aligned)
    out, k = saturate(out_codes, FixFormat(16, frac))
    return FixTensor(out, FixFormat(16, frac), diag + k)


def exp_fixed(codes: np.ndarray, frac: int, table: PwlTable | None = None) -> np.ndarray:
    """Fixed-point exponential on raw non-positive codes; returns EXP_FRAC codes.

    Batched form of the exp core used by the SSM step-2 path, where lane
    grouping is a scheduling detail and per-lane results must match
    nl_unit_eval bit-for-bit.
    """
    table = table or default_table()
    return _exp_core_codes(np.asarray(codes, dtype=np.int64), frac, table)


def softplus_fixed(codes: np.ndarray, frac: int, table: PwlTable | None = None) -> np.ndarray:
    """Fixed-point SoftPlus on raw codes; returns codes at the input frac."""
    table = table or default_table()
    codes = np.asarray(codes, dtype=np.int64)
    pos = codes > 0
    e = _exp_core_codes(np.where(pos, -codes, codes), frac, table)
    aligned = shift_round_half_even(e, EXP_FRAC - frac)
    return np.where(pos, aligned + codes, aligned)


def pwl_rows(table: PwlTable | None = None) -> list[tuple]:
    """The 8 (v_lo, slope, intercept, slope_code, intercept_code) rows."""
    table = table or default_table()
    return [
        (
            float(table.v_lo[i]),
            float(table.slope[i]),
            float(table.intercept[i]),
            int(table.slope_code[i]),
            int(table.intercept_code[i]),
        )
        for i in range(N_SEGMENTS)
    ]
