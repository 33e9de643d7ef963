"""The shift-based exponential and SoftPlus approximation.

e^x for x <= 0 becomes 2^(x * 23/16): the fractional power comes from an
8-chord table of 2^v on (-1, 0], the integer power is a right shift.
SoftPlus reuses the same core through its symmetry rewrite, accepting a
known gap at 0 (value 1 instead of ln 2).  The 24-lane fixed-point unit
mirrors the multiplexed hardware datapath.
"""

import numpy as np

from qmamba import FixFormat, FixTensor, exp_neg_approx, softplus_approx, split_uv
from qmamba.nonlin import build_pwl_table, nl_unit_eval, pwl_rows

table = build_pwl_table()

print("the 8 chords of 2^v on (-1, 0]:")
print(f"{'v_lo':>8} {'slope':>10} {'intercept':>10} {'slope_code':>11} {'icept_code':>11}")
for v_lo, slope, icept, sc, ic in pwl_rows(table):
    print(f"{v_lo:8.3f} {slope:10.5f} {icept:10.5f} {sc:11d} {ic:11d}")

# input splitting: t = x*log2e separates into integer u and fraction v
for t in (0.0, -1.4375, -3.9):
    u, v = split_uv(t)
    print(f"split({t:7.4f}) -> u={u}, v={v:.4f}")

# accuracy over the operating range; the error has two sources: the 4-bit
# log2e constant and the chord interpolation
x = np.linspace(-8, 0, 2001)
err = np.abs(exp_neg_approx(x, table) - np.exp(x))
print(f"\nexp approximation, x in [-8, 0]: max err = {err.max():.5f}")
print(f"exp(-1) ~ {exp_neg_approx(-1.0, table):.5f}  (e^-1 = {np.exp(-1):.5f};"
      " the gap is the 23/16 constant, by design)")

# SoftPlus branches and its exact symmetry
print(f"\nsoftplus(0)  = {softplus_approx(0.0, table)} (exact softplus would give ln 2)")
print(f"softplus(3)  = {softplus_approx(3.0, table):.5f}")
print(f"softplus(-3) = {softplus_approx(-3.0, table):.5f}")
a = np.abs(np.random.default_rng(2).standard_normal(10**5)) * 6
exact = np.array_equal(softplus_approx(a, table), a + softplus_approx(-a, table))
print(f"sp(x) == x + sp(-x) bitwise over 1e5 draws: {exact}")

# the 24-lane fixed-point unit: positive lanes are negated by the
# preprocessing stage, the original value is delayed and added back
lanes = FixTensor(np.round(np.linspace(-3, 3, 24) * 4096).astype(np.int64), FixFormat(16, 12))
out = nl_unit_eval("softplus", lanes, table)
real = softplus_approx(lanes.codes * 2.0**-12, table)
print(f"\n24-lane softplus unit vs real path: max diff = "
      f"{np.max(np.abs(out.codes * out.fmt.ulp - real)):.6f} "
      f"(2 ulp = {2 * out.fmt.ulp:.6f})")
