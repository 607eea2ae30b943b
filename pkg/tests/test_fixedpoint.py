import math
from fractions import Fraction

import numpy as np
import pytest

from fxq.fixedpoint import (
    FixedPointRepr,
    clip,
    clipped_count,
    no_clip_offset,
    quantize,
    quantize_tensor,
    repr_range,
)


def quantize_reference(x: float, bw: int, f: int) -> float:
    """Exact rational re-statement of the quantization rule, used as an oracle."""
    t = 2 ** (bw - 1) - 1 if bw >= 2 else 0
    y = Fraction(x) * Fraction(2) ** f
    whole = math.floor(abs(y))
    r = whole + 1 if abs(y) - whole >= Fraction(1, 2) else whole
    r = -r if y < 0 else r
    r = max(-t, min(t, r))
    return float(Fraction(r) / Fraction(2) ** f) + 0.0


class TestClip:
    def test_above_upper_bound(self):
        assert clip(5.0, -3, 3) == 3

    def test_interior_point(self):
        assert clip(0.0, -3, 3) == 0.0

    def test_boundary(self):
        assert clip(-3.0, -3, 3) == -3.0

    def test_rejects_inverted_bounds(self):
        with pytest.raises(ValueError):
            clip(0.0, 1.0, -1.0)


class TestRepr:
    def test_rejects_zero_bitwidth(self):
        with pytest.raises(ValueError):
            FixedPointRepr(0, 3)

    def test_lsb_and_msb(self):
        r = FixedPointRepr(8, 4)
        assert r.lsb == 2.0**-4
        assert r.msb_value == 2.0**7 / 2.0**4

    def test_sign_only_repr(self):
        r = FixedPointRepr(1, 5)
        assert r.max_magnitude == 0.0
        assert r.integer_bound == 0


class TestQuantize:
    def test_paper_clipping_example(self):
        # -83.5625 at (6, 2): scaled -334.25 saturates at -31, giving -7.75
        assert quantize(-83.5625, FixedPointRepr(6, 2)) == -7.75

    def test_exactly_representable_value(self):
        assert quantize(-5.375, FixedPointRepr(8, 4)) == -5.375

    def test_zero_maps_to_zero(self):
        for repr_ in (FixedPointRepr(8, 4), FixedPointRepr(2, -3), FixedPointRepr(1, 0)):
            q = quantize(0.0, repr_)
            assert q == 0.0 and math.copysign(1.0, q) == 1.0

    def test_negative_zero_normalized(self):
        q = quantize(-0.1, FixedPointRepr(4, 0))
        assert q == 0.0 and math.copysign(1.0, q) == 1.0

    def test_bw1_prunes_everything(self):
        for x in (-1e9, -0.5, 0.25, 3.0, 7e12):
            assert quantize(x, FixedPointRepr(1, 7)) == 0.0

    def test_rejects_non_finite(self):
        for bad in (math.nan, math.inf, -math.inf):
            with pytest.raises(ValueError):
                quantize(bad, FixedPointRepr(8, 4))

    def test_half_ties_round_away_from_zero(self):
        # 0.125 * 2**2 = 0.5 exactly
        assert quantize(0.125, FixedPointRepr(6, 2)) == 0.25
        assert quantize(-0.125, FixedPointRepr(6, 2)) == -0.25

    def test_matches_rational_oracle_on_grid(self):
        xs = [(-1) ** i * (i * 0.3711 + 0.001 * i * i) for i in range(60)]
        for bw in (1, 2, 3, 5, 8, 12):
            for f in (-3, 0, 2, 7):
                for x in xs:
                    assert quantize(x, FixedPointRepr(bw, f)) == quantize_reference(x, bw, f)


class TestQuantizeTensor:
    def test_derived_example(self):
        # Hand-applied rule at (3, 4), LSB 0.0625: 0.48 rounds to 0,
        # -0.96 to -1 LSB, 1.76 to 2 LSB.
        expected = [quantize_reference(x, 3, 4) for x in (0.03, -0.06, 0.11)]
        assert expected == [0.0, -0.0625, 0.125]
        out = quantize_tensor(np.array([0.03, -0.06, 0.11]), FixedPointRepr(3, 4))
        np.testing.assert_array_equal(out, expected)

    def test_empty_input(self):
        out = quantize_tensor(np.array([]), FixedPointRepr(5, 2))
        assert out.shape == (0,)

    def test_idempotent_on_quantized_input(self):
        rng = np.random.default_rng(7)
        v = rng.normal(size=257)
        r = FixedPointRepr(6, 3)
        q1 = quantize_tensor(v, r)
        np.testing.assert_array_equal(quantize_tensor(q1, r), q1)

    def test_shape_preserved(self):
        v = np.zeros((2, 3, 4))
        assert quantize_tensor(v, FixedPointRepr(4, 1)).shape == (2, 3, 4)

    def test_matches_scalar_path(self):
        rng = np.random.default_rng(11)
        v = rng.normal(scale=30.0, size=500)
        r = FixedPointRepr(7, -1)
        out = quantize_tensor(v, r)
        for x, q in zip(v, out):
            assert quantize(float(x), r) == q

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            quantize_tensor(np.array([1.0, np.nan]), FixedPointRepr(4, 0))


class TestReprRange:
    def test_paper_values(self):
        assert repr_range(FixedPointRepr(5, 7)) == (-0.1171875, 0.1171875)
        assert repr_range(FixedPointRepr(4, 7)) == (-0.0546875, 0.0546875)
        assert repr_range(FixedPointRepr(3, 0)) == (-3.0, 3.0)

    def test_sign_only(self):
        assert repr_range(FixedPointRepr(1, 3)) == (0.0, 0.0)


class TestNoClipOffset:
    def test_small_magnitude(self):
        # ceil(log2 0.35) = -1, so 8 - 1 - (-1)
        assert no_clip_offset(8, 0.35) == 8

    def test_power_of_two_guard(self):
        # without the guard 4.0 * 2**3 = 32 would exceed t = 31
        assert no_clip_offset(6, 4.0) == 2
        assert clipped_count(np.array([4.0]), FixedPointRepr(6, 2)) == 0
        assert clipped_count(np.array([4.0]), FixedPointRepr(6, 3)) == 1

    def test_all_zero_tensor(self):
        assert no_clip_offset(8, 0.0) == 7

    def test_near_power_of_two_still_clip_free(self):
        # values just below a power of two can round past the bound at the
        # unguarded offset; the offset must still be clip-free
        for bw0 in (4, 6, 8, 12):
            for m in (3.9999999, 1.9999999999, 0.4999999999999999):
                f = no_clip_offset(bw0, m)
                assert clipped_count(np.array([m, -m]), FixedPointRepr(bw0, f)) == 0

    def test_rejects_small_bitwidth(self):
        with pytest.raises(ValueError):
            no_clip_offset(1, 0.5)


class TestClippedCount:
    def test_paper_value_clips(self):
        assert clipped_count(np.array([-83.5625]), FixedPointRepr(6, 2)) == 1

    def test_in_range_values(self):
        assert clipped_count(np.array([0.0, 0.1]), FixedPointRepr(8, 4)) == 0

    def test_no_clip_at_no_clip_offset(self):
        rng = np.random.default_rng(3)
        v = rng.uniform(-0.35, 0.35, size=1000)
        v[17] = 0.35
        f = no_clip_offset(8, 0.35)
        assert clipped_count(v, FixedPointRepr(8, f)) == 0

    def test_empty(self):
        assert clipped_count(np.array([]), FixedPointRepr(4, 0)) == 0
