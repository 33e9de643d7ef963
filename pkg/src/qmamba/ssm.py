"""Selective state-space recurrence in three steps.

Step 1 turns the raw step size into a positive one through SoftPlus;
step 2 discretizes (decay factor from the exponential, input injection
Q = step * B); step 3 runs the linear recurrence and readout

    H'[p, n] = Abar * H[p, n] + Q[n] * x[p]
    y[p]     = sum_n C[n] * H'[p, n] + D * x[p]

per head, with A and D scalar per head.  The input-injection matrix uses
the step * B approximation of zero-order hold rather than the exact
(dA)^-1 (exp(dA) - I) dB form; the exact form exists only inside the test
oracles to quantify that choice.

Three evaluation paths share these shapes:
  * reference - float64 with exact softplus/exp;
  * approx    - float64 with the shift/PWL nonlinear approximations;
  * quantized - 16-bit fixed point throughout, PoT formats from
    calibration, VPU arithmetic with 32-bit accumulation.
Prefill is defined as repeated single steps, so prefill/decode streaming
equivalence is structural, not numerical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nonlin
from .fixpoint import (
    FixFormat,
    FixTensor,
    calibrate_format,
    narrow,
    quantize_pot,
    shift_round_half_even,
)

DT_FRAC = 12  # step-size lanes: small positives, 16-bit
ABAR_FRAC = 14  # decay factor lives in (0, 1]


@dataclass(frozen=True)
class SsmDims:
    n_heads: int
    head_dim: int
    d_state: int

    def __post_init__(self):
        if min(self.n_heads, self.head_dim, self.d_state) < 1:
            raise ValueError("all dimensions must be positive")


@dataclass(frozen=True)
class SsmParams:
    """Per-head scalars: decay rate A (< 0), feedthrough D, step bias."""

    A: np.ndarray
    D: np.ndarray
    dt_bias: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "A", np.asarray(self.A, dtype=np.float64))
        object.__setattr__(self, "D", np.asarray(self.D, dtype=np.float64))
        object.__setattr__(self, "dt_bias", np.asarray(self.dt_bias, dtype=np.float64))
        if np.any(self.A >= 0):
            raise ValueError("A must be negative for every head")


def _softplus_exact(x: np.ndarray) -> np.ndarray:
    # log1p(exp(x)) stated stably on both tails
    x = np.asarray(x, dtype=np.float64)
    return np.where(x > 0, x + np.log1p(np.exp(-np.abs(x))), np.log1p(np.exp(np.minimum(x, 0))))


def step1_delta(dt, dt_bias, approx: bool = True, table=None):
    """Step size preprocessing: softplus(dt + dt_bias) >= 0."""
    s = np.asarray(dt, dtype=np.float64) + dt_bias
    return nonlin.softplus_approx(s, table) if approx else _softplus_exact(s)


def step2_discretize(dt_sp, A, B, approx: bool = True, table=None):
    """Decay and injection: Abar = exp(dt_sp * A) in (0, 1], Q = dt_sp * B.

    dt_sp: (heads,), A: (heads,), B: (heads, N).  Positive exponential
    arguments (possible only through upstream rounding) are clamped to 0.
    """
    dt_sp = np.asarray(dt_sp, dtype=np.float64)
    arg = np.minimum(dt_sp * A, 0.0)
    a_bar = nonlin.exp_neg_approx(arg, table) if approx else np.exp(arg)
    q = dt_sp[..., None] * np.asarray(B, dtype=np.float64)
    return a_bar, q


def recurrence_step(h, a_bar, q, x, c, d):
    """One recurrence update; returns (h', y).

    h: (heads, P, N), a_bar: (heads,), q: (heads, N), x: (heads, P),
    c: (heads, N), d: (heads,).
    """
    h = np.asarray(h, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    heads, p_dim, n_dim = h.shape
    if x.shape != (heads, p_dim) or c.shape != (heads, n_dim) or q.shape != (heads, n_dim):
        raise ValueError("recurrence operand shapes inconsistent with state")
    h_new = a_bar[:, None, None] * h + q[:, None, :] * x[:, :, None]
    y = np.einsum("hn,hpn->hp", c, h_new) + d[:, None] * x
    return h_new, y


def ssm_prefill(x, b, c, dt, params: SsmParams, dims: SsmDims, approx: bool = True, table=None):
    """Run the recurrence over a sequence from zero state.

    x: (L, heads, P), b/c: (L, heads, N), dt: (L, heads).  Returns
    (y: (L, heads, P), final state).  Defined as L repeated single steps.
    """
    length = x.shape[0]
    if length < 1:
        raise ValueError("sequence must have at least one step")
    h = np.zeros((dims.n_heads, dims.head_dim, dims.d_state), dtype=np.float64)
    ys = np.empty((length, dims.n_heads, dims.head_dim), dtype=np.float64)
    for k in range(length):
        dt_sp = step1_delta(dt[k], params.dt_bias, approx, table)
        a_bar, q = step2_discretize(dt_sp, params.A, b[k], approx, table)
        h, ys[k] = recurrence_step(h, a_bar, q, x[k], c[k], params.D)
    return ys, h


@dataclass(frozen=True)
class SsmQuantFormats:
    """Calibrated PoT formats for every tensor in the fixed-point path."""

    x: FixFormat
    b: FixFormat
    c: FixFormat
    dt_a: FixFormat
    q: FixFormat
    h: FixFormat
    y: FixFormat
    dt: FixFormat = FixFormat(16, DT_FRAC)
    dt_sp: FixFormat = FixFormat(16, DT_FRAC)
    a_bar: FixFormat = FixFormat(16, ABAR_FRAC)


@dataclass(frozen=True)
class QuantSsm:
    """Fixed-point SSM block: calibrated formats plus quantized parameters."""

    dims: SsmDims
    params: SsmParams
    fmts: SsmQuantFormats
    a_fix: FixTensor
    d_fix: FixTensor
    dt_bias_fix: FixTensor

    def zero_state(self) -> FixTensor:
        shape = (self.dims.n_heads, self.dims.head_dim, self.dims.d_state)
        return FixTensor(np.zeros(shape, dtype=np.int64), self.fmts.h)

    def step(self, state: FixTensor, x, b, c, dt, stats: dict | None = None):
        """One fixed-point step on real-valued inputs; returns (state', y real).

        Inputs are quantized into their calibrated formats on entry; the
        output is dequantized on exit.  All intermediate arithmetic is
        integer with single round-half-even narrowings, so a given (state,
        inputs) pair always produces identical bits.
        """
        f = self.fmts
        sat = 0

        xq = quantize_pot(x, f.x)
        bq = quantize_pot(b, f.b)
        cq = quantize_pot(c, f.c)
        dtq = quantize_pot(dt, f.dt)
        sat += xq.sat + bq.sat + cq.sat + dtq.sat

        # step 1: PAU add of the bias, then the softplus lane unit
        dt_sum = narrow(dtq.codes + self.dt_bias_fix.codes, f.dt.frac, f.dt)
        sat += dt_sum.sat
        dt_sp_t = narrow(nonlin.softplus_fixed(dt_sum.codes, f.dt.frac), f.dt.frac, f.dt_sp)
        sat += dt_sp_t.sat
        dt_sp = dt_sp_t.codes

        # step 2: PMU then exponential mode; positive arguments clamp to 0
        arg = narrow(dt_sp * self.a_fix.codes, f.dt_sp.frac + self.a_fix.fmt.frac, f.dt_a)
        sat += arg.sat
        pos = arg.codes > 0
        sat += int(np.count_nonzero(pos))
        a_bar = nonlin.exp_fixed(np.where(pos, 0, arg.codes), f.dt_a.frac)
        q = narrow(dt_sp[:, None] * bq.codes, f.dt_sp.frac + f.b.frac, f.q)
        sat += q.sat

        # step 3: PMU/PMA state update, MAT readout, final PMA with D*x
        decay = a_bar[:, None, None] * state.codes  # frac ABAR + h
        inject = q.codes[:, None, :] * xq.codes[:, :, None]  # frac q + x
        inject_al = shift_round_half_even(inject, (f.q.frac + f.x.frac) - (ABAR_FRAC + f.h.frac))
        h_new = narrow(decay + inject_al, ABAR_FRAC + f.h.frac, f.h)
        sat += h_new.sat

        mat = np.einsum("hn,hpn->hp", cq.codes, h_new.codes)  # frac c + h
        dx = self.d_fix.codes[:, None] * xq.codes  # frac d + x
        dx_al = shift_round_half_even(dx, (self.d_fix.fmt.frac + f.x.frac) - (f.c.frac + f.h.frac))
        y = narrow(mat + dx_al, f.c.frac + f.h.frac, f.y)
        sat += y.sat

        if stats is not None:
            stats["ssm_sat"] = stats.get("ssm_sat", 0) + sat
        return h_new, y.codes.astype(np.float64) * f.y.ulp

    def prefill(self, x, b, c, dt, stats: dict | None = None):
        """Sequence form; bit-identical to repeated step() calls from zero state."""
        state = self.zero_state()
        length = x.shape[0]
        ys = np.empty((length, self.dims.n_heads, self.dims.head_dim), dtype=np.float64)
        for k in range(length):
            state, ys[k] = self.step(state, x[k], b[k], c[k], dt[k], stats)
        return ys, state


def ssm_quant_calibrate(x, b, c, dt, params: SsmParams, dims: SsmDims) -> QuantSsm:
    """Pick fixed-point formats from a representative activation sample.

    Runs the float approx path over the sample to observe every derived
    tensor (step sizes, exponential arguments, injections, states, outputs)
    and assigns each its PoT format; the state format gets one extra
    integer bit of headroom over the observed maximum.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise ValueError("empty calibration sample")
    dt_sum = np.asarray(dt, dtype=np.float64) + params.dt_bias
    dt_sp = nonlin.softplus_approx(dt_sum)
    dt_a = np.minimum(dt_sp * params.A, 0.0)
    q_vals = dt_sp[..., None] * np.asarray(b, dtype=np.float64)

    h = np.zeros((dims.n_heads, dims.head_dim, dims.d_state), dtype=np.float64)
    h_max, y_all = 1e-12, []
    for k in range(x.shape[0]):
        a_bar_k = nonlin.exp_neg_approx(dt_a[k])
        h, y_k = recurrence_step(h, a_bar_k, q_vals[k], x[k], c[k], params.D)
        h_max = max(h_max, float(np.max(np.abs(h))))
        y_all.append(y_k)

    fmts = SsmQuantFormats(
        x=calibrate_format(x),
        b=calibrate_format(b),
        c=calibrate_format(c),
        dt_a=calibrate_format(dt_a),
        q=calibrate_format(q_vals),
        h=calibrate_format(np.array([h_max]), headroom_bits=1),
        y=calibrate_format(np.asarray(y_all)),
    )
    a_fmt = calibrate_format(params.A, headroom_bits=0)
    d_fmt = calibrate_format(params.D, headroom_bits=0)
    return QuantSsm(
        dims=dims,
        params=params,
        fmts=fmts,
        a_fix=quantize_pot(params.A, a_fmt),
        d_fix=quantize_pot(params.D, d_fmt),
        dt_bias_fix=quantize_pot(params.dt_bias, fmts.dt),
    )
