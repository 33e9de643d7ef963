"""The analytical cycle model: where the time goes and why.

Per-module pass-count schedules (validated against hand counts) plus a
weights-over-DRAM memory bound, composed per module as max(compute,
memory).  Decode on large models is memory-bound: streaming int8 weights
dominates, which is what puts single-token throughput in the units of
tokens per second.
"""

from qmamba import HwConfig, ModelConfig, estimate_decode, estimate_prefill

hw = HwConfig()
cfg_130m = ModelConfig(n_layers=24, d_model=768, expand=2, n_heads=24, head_dim=64,
                       d_state=128, vocab_size=50288)
cfg_2p7b = ModelConfig(n_layers=64, d_model=2560, expand=2, n_heads=80, head_dim=64,
                       d_state=128, vocab_size=50288)

print("hardware instance:", hw.linear_groups, "linear groups,",
      hw.mat_units_linear, "matmul trees each,", hw.conv_mat_units, "conv trees,",
      f"{hw.dram_bytes_per_cycle:.0f} B/cycle DRAM at {hw.freq_mhz:.0f} MHz")

# prefill breakdown across sequence lengths: the recurrence is strictly
# sequential, so its share grows while everything else amortizes
print("\n130M prefill breakdown by sequence length:")
print(f"{'L':>6} {'linear':>8} {'conv':>8} {'ssm':>8} {'norm':>8} {'other':>8} {'tok/s':>9}")
for L in (256, 1024, 4096, 8192):
    r = estimate_prefill(L, cfg_130m, hw)
    b = r.breakdown
    print(f"{L:6d} {b['linear']:8.1%} {b['conv']:8.1%} {b['ssm']:8.1%} "
          f"{b['norm_silu']:8.1%} {b['other']:8.1%} {r.tokens_per_s:9.1f}")

# decode: one token at a time, weights streamed every step
rep = estimate_decode(cfg_2p7b, hw, power_watts=9.3)
print("\n2.7B single-token decode:")
print(rep.format_text())

# sensitivity: throughput scales with clock and with memory bandwidth
for dbpc in (32, 64, 128):
    r = estimate_decode(cfg_2p7b, HwConfig(dram_bytes_per_cycle=dbpc))
    print(f"DRAM {dbpc:4d} B/cycle -> {r.tokens_per_s:5.2f} token/s")
