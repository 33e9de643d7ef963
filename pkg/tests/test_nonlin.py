import numpy as np
import pytest

from qmamba.fixpoint import FixFormat, FixTensor
from qmamba.nonlin import (
    EXP_FRAC,
    LOG2E,
    N_SEGMENTS,
    build_pwl_table,
    exp_fixed,
    exp_neg_approx,
    nl_unit_eval,
    pwl_rows,
    softplus_approx,
    softplus_fixed,
    split_uv,
)

# frozen from the pre-build sweep oracle over x in [-16, 0] step 1e-4:
# max |approx - exp(x)| = 0.00172213 (at x ~ -0.7398)
EXP_SWEEP_BOUND = 0.001723


@pytest.fixture(scope="module")
def table():
    return build_pwl_table()


class TestPwlTable:
    def test_constant(self):
        assert LOG2E == 23.0 / 16.0

    def test_segments_partition(self, table):
        assert len(table.v_lo) == N_SEGMENTS
        assert np.array_equal(np.diff(table.v_lo), np.full(7, 1.0 / N_SEGMENTS))
        assert table.v_lo[0] == -1.0 and table.v_lo[-1] == -1.0 / N_SEGMENTS

    def test_first_segment_slope(self, table):
        # chord over [-1/8, 0]: (1 - 2^-0.125) * 8
        assert abs(table.slope[-1] - 0.66400) < 5e-4

    def test_exact_at_zero(self, table):
        assert table.eval(np.array([0.0]))[0] == 1.0

    def test_half_at_minus_one(self, table):
        # chord interpolation hits the endpoint exactly
        assert abs(table.eval(np.array([-1.0 + 1e-15]))[0] - 0.5) < 1e-12

    def test_max_chord_error(self, table):
        v = np.linspace(-1.0 + 1e-9, 0.0, 200001)
        err = np.abs(table.eval(v) - np.exp2(v))
        assert err.max() <= 1.1e-3

    def test_rows_dump(self, table):
        rows = pwl_rows(table)
        assert len(rows) == 8
        assert rows[-1][2] == 1.0  # intercept of the segment touching 0
        assert all(isinstance(r[3], int) and isinstance(r[4], int) for r in rows)


class TestSplitUv:
    def test_examples(self):
        assert split_uv(0.0) == (0, 0.0)
        assert split_uv(-1.4375) == (-1, -0.4375)
        u, v = split_uv(-0.99636)
        assert u == 0 and abs(v + 0.99636) < 1e-12

    def test_ranges(self):
        rng = np.random.default_rng(20)
        t = -np.abs(rng.standard_normal(1000)) * 8
        u, v = split_uv(t)
        assert np.all(u <= 0) and np.all(v <= 0) and np.all(v > -1)
        assert np.allclose(u + v, t, rtol=0, atol=0)

    def test_positive_rejected(self):
        with pytest.raises(ValueError):
            split_uv(0.5)


class TestExpNegApprox:
    def test_at_zero(self, table):
        assert exp_neg_approx(0.0, table) == 1.0

    def test_near_ln2(self, table):
        # true value 0.5; the gap comes from the 4-bit log2e constant
        assert abs(exp_neg_approx(-0.6931, table) - 0.5013) < 1e-3

    def test_at_minus_one(self, table):
        # 2^(-0.4375)/2 = 0.36921 before chord error; the chord value is frozen
        y = exp_neg_approx(-1.0, table)
        assert abs(y - 0.3695530484726295) < 1e-15
        assert abs(y - 2.0**-0.4375 / 2.0) <= 1.1e-3 / 2

    def test_positive_rejected(self, table):
        with pytest.raises(ValueError, match="non-positive"):
            exp_neg_approx(0.1, table)

    def test_sweep_bound_and_monotonicity(self, table):
        x = -np.arange(0, 160001, dtype=np.float64) * 1e-4  # [-16, 0] step 1e-4
        y = exp_neg_approx(x, table)
        err = np.abs(y - np.exp(x))
        assert err.max() <= EXP_SWEEP_BOUND
        assert err.max() <= 6e-3
        assert np.all(np.diff(y) <= 0)  # x descending -> y nonincreasing
        assert np.all((y > 0) & (y <= 1))


class TestSoftplusApprox:
    def test_at_zero(self, table):
        # Eq-forced branch value: 1.0, not ln 2
        assert softplus_approx(0.0, table) == 1.0

    def test_positive_branch(self, table):
        assert abs(softplus_approx(3.0, table) - 3.0504) < 1e-3

    def test_bounds(self, table):
        rng = np.random.default_rng(21)
        x = rng.uniform(-20, 20, 10000)
        y = softplus_approx(x, table)
        assert np.all(y > 0)
        assert np.all(y > x)
        assert np.all(y >= np.maximum(x, 0))

    def test_symmetry_bitwise(self, table):
        # sp(x) == x + sp(-x) exactly, evaluated at the positive orientation
        rng = np.random.default_rng(22)
        a = np.abs(rng.standard_normal(100000)) * 8
        lhs = softplus_approx(a, table)
        rhs = a + softplus_approx(-a, table)
        assert np.array_equal(lhs, rhs)


class TestNlUnit:
    def _lanes(self, vals, frac=12):
        return FixTensor(np.asarray(vals, dtype=np.int64), FixFormat(16, frac))

    def test_softplus_zero_lanes(self, table):
        out = nl_unit_eval("softplus", self._lanes(np.zeros(24)), table)
        assert np.all(out.codes == 4096)  # 1.0 at frac 12

    def test_exp_minus_one(self, table):
        out = nl_unit_eval("exp", self._lanes(np.full(24, -4096)), table)
        real = exp_neg_approx(-1.0, table)
        assert out.fmt.frac == EXP_FRAC
        assert abs(out.codes[0] * out.fmt.ulp - real) <= out.fmt.ulp

    def test_softplus_symmetry_fixed(self, table):
        rng = np.random.default_rng(23)
        x = rng.integers(1, 2**14, size=12)  # positive codes, headroom for +x
        lanes = self._lanes(np.concatenate([x, -x]))
        out = nl_unit_eval("softplus", lanes, table)
        diff = out.codes[:12] - out.codes[12:]
        assert np.max(np.abs(diff - x)) <= 2

    def test_exp_positive_lane_clamps_and_counts(self, table):
        lanes = self._lanes(np.r_[np.full(23, -4096), [100]])
        out = nl_unit_eval("exp", lanes, table)
        assert out.codes[-1] == 2**EXP_FRAC  # exp(0) = 1
        assert out.sat >= 1

    def test_wrong_width_rejected(self, table):
        with pytest.raises(ValueError, match="16-bit"):
            nl_unit_eval("exp", FixTensor(np.zeros(24, dtype=np.int64), FixFormat(8, 4)), table)

    def test_wrong_lane_count_rejected(self, table):
        with pytest.raises(ValueError, match="lanes"):
            nl_unit_eval("exp", self._lanes(np.zeros(10)), table)

    def test_configurable_lane_count(self, table):
        out = nl_unit_eval("exp", self._lanes(np.zeros(6)), table, lane_count=6)
        assert out.codes.shape == (6,)

    def test_lane_parallel_equals_sequential(self, table):
        rng = np.random.default_rng(24)
        codes = -rng.integers(0, 2**15, size=24)
        batch = nl_unit_eval("exp", self._lanes(codes), table)
        single = [
            nl_unit_eval("exp", self._lanes([c] * 24), table).codes[0] for c in codes
        ]
        assert np.array_equal(batch.codes, single)

    def test_fixed_real_agreement(self, table):
        # |fixed decode - real path| <= 2^(-frac+1) on a dense sweep
        frac = 12
        codes = -np.arange(0, 2**15, 7, dtype=np.int64)
        fixed = exp_fixed(codes, frac, table) * 2.0**-EXP_FRAC
        real = exp_neg_approx(codes * 2.0**-frac, table)
        assert np.max(np.abs(fixed - real)) <= 2.0 ** (-EXP_FRAC + 1)

        sp_codes = np.arange(-(2**14), 2**14, 5, dtype=np.int64)
        fixed_sp = softplus_fixed(sp_codes, frac, table) * 2.0**-frac
        real_sp = softplus_approx(sp_codes * 2.0**-frac, table)
        assert np.max(np.abs(fixed_sp - real_sp)) <= 2.0 ** (-frac + 1)

    def test_underflow_to_zero(self, table):
        # frac 8 reaches x = -127: |u| far beyond the 14-bit output precision
        out = nl_unit_eval("exp", self._lanes(np.full(24, -(2**15) + 1), frac=8), table)
        assert np.all(out.codes == 0)
