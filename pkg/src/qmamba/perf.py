"""Cycle-approximate analytical cost model of the accelerator.

The model is a closed-form schedule, not an event-driven simulation: the
hardware description gives parallelism counts (6 linear groups with 4
adder trees and 64 multiplier trees each, 32 conv trees, 24/64-lane SSM
units, a 32x8 state tile) but no pipeline timing diagrams, so each module
gets a documented pass-count formula validated against hand-counted
fixtures.

Schedules:

* Linear (l rows, d -> q features, m groups of width n = d/m):
  per group and row, Hadamard passes = ceil(n / hat_lanes) (width-1
  groups skip the identity rotation), matmul passes = ceil(q / mat_units);
  the two stages pipeline across rows with initiation interval
  max(stage passes); ceil(m / linear_groups) sequential group waves.

* SSM (per token, strictly sequential across tokens):
  step1 = PAU + SoftPlus unit passes over the head lanes;
  step2 = PMU + exp passes over head lanes plus the Q = step*B lanes;
  step3 = state tiles for update and readout (heads * ceil(P*N / tile))
  twice, plus the final 32-input combine.  No cross-token pipelining, so
  cycles are exactly linear in L with no constant term.

* Conv: ceil(channels / conv matrix trees) per token.

* Norm/SiLU: elementwise float work at `float_lanes` lanes per cycle.

* Other: residual adds, plus the vocabulary head (scheduled like a linear
  layer for the final position) and one embedding row per token.

Memory: weights stream from DRAM at dram_bytes_per_cycle (projection
weights int8, norms/embedding float32); activations are assumed to stay
in on-chip buffers.  Each module costs max(compute, memory) and modules
compose by sum (no overlap) or max (--overlap, optimistic).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .model import ModelConfig

GROUP_WIDTH = 64  # linear quantization group width mirrored by the scheduler

MODULES = ("linear", "conv", "ssm", "norm_silu", "other")


def _default_fill() -> dict:
    return {"linear": 8, "conv": 4, "ssm": 0, "norm_silu": 4, "other": 4}


@dataclass(frozen=True)
class HwConfig:
    """Accelerator parallelism description; defaults model the reference design."""

    freq_mhz: float = 250.0
    linear_groups: int = 6
    hat_lanes_per_group: int = 4
    mat_units_linear: int = 64
    conv_mat_units: int = 32
    ssm_lane24: int = 24
    ssm_lane64: int = 64
    ssm_state_tile: tuple = (32, 8)
    nl_lanes: int = 24
    float_lanes: int = 64
    pipeline_fill_cycles: dict = field(default_factory=_default_fill)
    dram_bytes_per_cycle: float = 64.0

    def __post_init__(self):
        vals = [self.freq_mhz, self.linear_groups, self.hat_lanes_per_group,
                self.mat_units_linear, self.conv_mat_units, self.ssm_lane24,
                self.ssm_lane64, self.nl_lanes, self.float_lanes,
                self.dram_bytes_per_cycle, *self.ssm_state_tile]
        if any(v <= 0 for v in vals):
            raise ValueError("hardware parameters must be positive")

    @classmethod
    def from_json(cls, path: str) -> "HwConfig":
        with open(path) as f:
            data = json.load(f)
        if "ssm_state_tile" in data:
            data["ssm_state_tile"] = tuple(data["ssm_state_tile"])
        return cls(**data)


@dataclass
class CycleReport:
    """Per-module cycles and derived throughput figures."""

    cycles: dict
    total_cycles: int
    freq_mhz: float
    tokens: int
    tokens_per_s: float
    seconds: float
    tokens_per_s_per_w: float | None = None

    @property
    def breakdown(self) -> dict:
        total = sum(self.cycles.values())
        return {k: (v / total if total else 0.0) for k, v in self.cycles.items()}

    def to_dict(self) -> dict:
        d = {
            "cycles": dict(self.cycles),
            "total_cycles": self.total_cycles,
            "breakdown": self.breakdown,
            "freq_mhz": self.freq_mhz,
            "tokens": self.tokens,
            "seconds": self.seconds,
            "tokens_per_s": self.tokens_per_s,
        }
        if self.tokens_per_s_per_w is not None:
            d["tokens_per_s_per_w"] = self.tokens_per_s_per_w
        return d

    def format_text(self) -> str:
        lines = [f"{'module':<10} {'cycles':>14} {'share':>8}"]
        for k in MODULES:
            lines.append(f"{k:<10} {self.cycles[k]:>14d} {self.breakdown[k]:>7.1%}")
        lines.append(f"{'total':<10} {self.total_cycles:>14d}")
        lines.append(f"tokens/s at {self.freq_mhz:g} MHz: {self.tokens_per_s:.3f}")
        if self.tokens_per_s_per_w is not None:
            lines.append(f"tokens/(s*W): {self.tokens_per_s_per_w:.3f}")
        return "\n".join(lines)


def _ceil(a: int, b: int) -> int:
    return -(-a // b)


def estimate_linear_cycles(l: int, d: int, q: int, m: int, hw: HwConfig) -> int:
    """Compute-schedule cycles of one grouped W8A8 linear over l rows."""
    if min(l, d, q, m) < 1:
        raise ValueError("dimensions must be positive")
    n = d // m
    had = _ceil(n, hw.hat_lanes_per_group) if n > 1 else 0
    mat = _ceil(q, hw.mat_units_linear)
    ii = max(had, mat, 1)
    waves = _ceil(m, hw.linear_groups)
    wave_cycles = had + mat + (l - 1) * ii
    return hw.pipeline_fill_cycles["linear"] + waves * wave_cycles


def estimate_ssm_cycles(L: int, n_heads: int, head_dim: int, d_state: int, hw: HwConfig) -> int:
    """Sequential recurrence cycles over L tokens (exactly linear in L)."""
    if L == 0:
        return 0
    if min(L, n_heads, head_dim, d_state) < 1:
        raise ValueError("dimensions must be positive")
    head_passes = _ceil(n_heads, hw.nl_lanes)
    step1 = 2 * head_passes  # PAU + SoftPlus unit
    step2 = 2 * head_passes + _ceil(n_heads * d_state, hw.ssm_lane64)  # PMU+exp, Q lanes
    tile = hw.ssm_state_tile[0] * hw.ssm_state_tile[1]
    tiles = n_heads * _ceil(head_dim * d_state, tile)
    step3 = 2 * tiles + _ceil(n_heads * head_dim, hw.ssm_state_tile[0])
    return L * (step1 + step2 + step3)


def _linear_group_count(d: int) -> int:
    return max(1, d // GROUP_WIDTH) if d % GROUP_WIDTH == 0 else 1


def _module_cycles(L: int, cfg: ModelConfig, hw: HwConfig, logits_rows: int) -> dict:
    """Per-module max(compute, weight-stream) cycles for an L-token pass."""
    dbpc = hw.dram_bytes_per_cycle
    fill = hw.pipeline_fill_cycles
    nl_ = cfg.n_layers

    lin_compute = nl_ * (
        estimate_linear_cycles(L, cfg.d_model, cfg.in_proj_out, _linear_group_count(cfg.d_model), hw)
        + estimate_linear_cycles(L, cfg.d_inner, cfg.d_model, _linear_group_count(cfg.d_inner), hw)
    )
    lin_bytes = nl_ * (cfg.d_model * cfg.in_proj_out + cfg.d_inner * cfg.d_model)  # int8
    linear = max(lin_compute, math.ceil(lin_bytes / dbpc))

    conv_compute = nl_ * (fill["conv"] + L * _ceil(cfg.conv_channels, hw.conv_mat_units))
    conv_bytes = nl_ * (cfg.conv_channels * 4 + cfg.conv_channels * 4)  # int8 taps + f32 bias
    conv = max(conv_compute, math.ceil(conv_bytes / dbpc))

    ssm_compute = nl_ * estimate_ssm_cycles(L, cfg.n_heads, cfg.head_dim, cfg.d_state, hw)
    ssm_bytes = nl_ * (3 * cfg.n_heads * 2)  # A, D, dt_bias as 16-bit fixed
    ssm = max(ssm_compute, math.ceil(ssm_bytes / dbpc))

    fl = hw.float_lanes
    norm_token = 2 * _ceil(cfg.d_model, fl) + _ceil(cfg.conv_channels, fl) + 2 * _ceil(cfg.d_inner, fl)
    norm_compute = nl_ * (fill["norm_silu"] + L * norm_token)
    norm_bytes = nl_ * (cfg.d_model + cfg.d_inner) * 4
    norm_silu = max(norm_compute, math.ceil(norm_bytes / dbpc))

    other_compute = fill["other"] + nl_ * L * _ceil(cfg.d_model, fl)  # residual adds
    other_bytes = 0
    if cfg.vocab_size > 0:
        other_compute += estimate_linear_cycles(
            logits_rows, cfg.d_model, cfg.vocab_size, _linear_group_count(cfg.d_model), hw
        )
        other_bytes += cfg.vocab_size * cfg.d_model  # int8 head weights
        other_bytes += L * cfg.d_model * 4  # embedding rows, f32
    other = max(other_compute, math.ceil(other_bytes / dbpc))

    return {"linear": linear, "conv": conv, "ssm": ssm, "norm_silu": norm_silu, "other": other}


def _compose(cycles: dict, overlap: bool) -> int:
    return max(cycles.values()) if overlap else sum(cycles.values())


def estimate_prefill(
    L: int, cfg: ModelConfig, hw: HwConfig, overlap: bool = False
) -> CycleReport:
    """Whole-prompt cost; logits (if any) are computed for the last position."""
    if L < 1:
        raise ValueError("prefill length must be >= 1")
    cycles = _module_cycles(L, cfg, hw, logits_rows=1)
    total = _compose(cycles, overlap)
    seconds = total / (hw.freq_mhz * 1e6)
    return CycleReport(
        cycles=cycles,
        total_cycles=total,
        freq_mhz=hw.freq_mhz,
        tokens=L,
        seconds=seconds,
        tokens_per_s=L / seconds,
    )


def estimate_decode(
    cfg: ModelConfig,
    hw: HwConfig,
    power_watts: float | None = None,
    overlap: bool = False,
) -> CycleReport:
    """Single-token generation cost and throughput (L-independent)."""
    cycles = _module_cycles(1, cfg, hw, logits_rows=1)
    total = _compose(cycles, overlap)
    seconds = total / (hw.freq_mhz * 1e6)
    tps = 1.0 / seconds
    return CycleReport(
        cycles=cycles,
        total_cycles=total,
        freq_mhz=hw.freq_mhz,
        tokens=1,
        seconds=seconds,
        tokens_per_s=tps,
        tokens_per_s_per_w=None if power_watts is None else tps / power_watts,
    )
