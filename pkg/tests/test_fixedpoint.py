"""Fixed-point arithmetic vs an independent exact-rational oracle."""

import math
import random
from fractions import Fraction

import pytest

from ml2rtl.fixedpoint import (
    FixedPointFormat,
    FixedPointValue,
    Overflow,
    Rounding,
    dequantize,
    fxp_add,
    fxp_cast,
    fxp_compare,
    fxp_mul,
    product_format,
    quantize_real,
)


from oracles import oracle_cast


def rand_format(rng: random.Random, max_bits: int = 32) -> FixedPointFormat:
    w = rng.randint(1, max_bits)
    return FixedPointFormat(
        w,
        rng.randint(0, w),
        signed=rng.random() < 0.7,
        rounding=rng.choice(list(Rounding)),
        overflow=rng.choice(list(Overflow)),
    )


def rand_value(rng: random.Random, fmt: FixedPointFormat) -> FixedPointValue:
    return FixedPointValue(rng.randint(fmt.min_raw, fmt.max_raw), fmt)


S8_1 = FixedPointFormat(8, 1)  # signed, rne, sat


# ---------------------------------------------------------------------------
# Format and value plumbing
# ---------------------------------------------------------------------------

def test_format_invariants_enforced():
    with pytest.raises(ValueError):
        FixedPointFormat(0, 0)
    with pytest.raises(ValueError):
        FixedPointFormat(65, 1)
    with pytest.raises(ValueError):
        FixedPointFormat(8, 9)
    with pytest.raises(ValueError):
        FixedPointFormat(8, -1)
    fmt = FixedPointFormat(8, 3, signed=False)
    assert fmt.fractional_bits == 5
    assert fmt.min_raw == 0 and fmt.max_raw == 255


def test_value_range_checked():
    with pytest.raises(ValueError):
        FixedPointValue(128, S8_1)
    with pytest.raises(ValueError):
        FixedPointValue(-129, S8_1)
    with pytest.raises(ValueError):
        FixedPointValue(-1, FixedPointFormat(8, 1, signed=False))


def test_format_string_roundtrip():
    fmt = FixedPointFormat.from_string("fixed<18,8,s,rne,sat>")
    assert fmt == FixedPointFormat(18, 8, True, Rounding.NEAREST_EVEN, Overflow.SATURATE)
    assert fmt.to_string() == "fixed<18,8,s,rne,sat>"
    # defaults when options omitted
    assert FixedPointFormat.from_string("fixed<8,1,s>") == S8_1
    assert FixedPointFormat.from_string("fixed<6,2,u,trn>") == FixedPointFormat(
        6, 2, False, Rounding.TRUNCATE, Overflow.SATURATE
    )
    assert FixedPointFormat.from_string("fixed<6,2,u,wrap>").overflow is Overflow.WRAP
    rng = random.Random(7)
    for _ in range(200):
        fmt = rand_format(rng, max_bits=64)
        assert FixedPointFormat.from_string(fmt.to_string()) == fmt


@pytest.mark.parametrize(
    "text", ["fixed<8>", "fixed<8,1>", "fixed<8,1,x>", "fx<8,1,s>", "fixed<8,1,s,abc>", ""]
)
def test_format_string_rejects_garbage(text):
    with pytest.raises(ValueError):
        FixedPointFormat.from_string(text)


# ---------------------------------------------------------------------------
# quantize_real / dequantize
# ---------------------------------------------------------------------------

def test_quantize_zero_is_raw_zero():
    rng = random.Random(1)
    for _ in range(50):
        assert quantize_real(0.0, rand_format(rng)).raw == 0


def test_quantize_exact_values():
    assert quantize_real(0.75, S8_1).raw == 96
    # 0.3 * 2^7 = 38.4 -> 38 under round-nearest-even
    v = quantize_real(0.3, S8_1)
    assert v.raw == 38
    assert v.value == 0.296875
    # beyond range saturates to max representable
    assert quantize_real(5.0, S8_1).raw == 127
    assert quantize_real(-5.0, S8_1).raw == -128


def test_quantize_rejects_non_finite():
    for bad in (math.nan, math.inf, -math.inf):
        with pytest.raises(ValueError):
            quantize_real(bad, S8_1)


def test_dequantize_examples():
    assert dequantize(FixedPointValue(0, S8_1)) == 0.0
    assert dequantize(FixedPointValue(96, S8_1)) == 0.75
    assert dequantize(FixedPointValue(-128, S8_1)) == -1.0


def test_roundtrip_error_bounds():
    rng = random.Random(42)
    for _ in range(2000):
        w = rng.randint(2, 32)
        i = rng.randint(0, w - 1)
        for rounding in Rounding:
            fmt = FixedPointFormat(w, i, signed=True, rounding=rounding)
            # draw x strictly inside the representable range
            span = float(fmt.max_value - fmt.min_value)
            x = float(fmt.min_value) + rng.random() * span
            err = Fraction(x) - quantize_real(x, fmt).exact
            if rounding is Rounding.NEAREST_EVEN:
                assert abs(err) <= Fraction(1, 2 ** (fmt.fractional_bits + 1))
            else:
                assert 0 <= err < Fraction(1, 2**fmt.fractional_bits)


def test_quantize_matches_oracle_randomized():
    rng = random.Random(123)
    for _ in range(5000):
        fmt = rand_format(rng, max_bits=48)
        x = (rng.random() - 0.5) * 2 ** rng.randint(-8, 10)
        assert quantize_real(x, fmt).raw == oracle_cast(Fraction(x), fmt)


# ---------------------------------------------------------------------------
# add / mul / cast vs oracle
# ---------------------------------------------------------------------------

def test_add_examples():
    zero = quantize_real(0.0, S8_1)
    assert fxp_add(zero, zero, S8_1).raw == 0
    a = quantize_real(0.25, S8_1)
    b = quantize_real(0.5, S8_1)
    assert fxp_add(a, b, S8_1).raw == 96  # 0.75, exact
    top = FixedPointValue(127, S8_1)  # 0.9921875
    assert fxp_add(top, top, S8_1).raw == 127  # saturates


def test_mul_examples():
    half = quantize_real(0.5, S8_1)
    assert fxp_mul(half, quantize_real(0.0, S8_1), S8_1).raw == 0
    assert fxp_mul(half, half, S8_1).raw == 32  # 0.25, exact
    v = FixedPointValue(38, S8_1)  # 0.296875
    # 0.296875^2 * 2^7 = 11.28125 -> 11 under rne
    out = fxp_mul(v, v, S8_1)
    assert out.raw == 11
    assert out.value == 0.0859375


def test_compare_examples():
    a = FixedPointValue(64, S8_1)
    assert fxp_compare(a, a) == 0
    b = quantize_real(0.5, FixedPointFormat(16, 2))
    assert fxp_compare(a, b) == 0  # format-independent value equality
    x = FixedPointValue(38, S8_1)  # 0.296875
    y = quantize_real(0.3, FixedPointFormat(16, 1))
    assert fxp_compare(x, y) == -1
    assert fxp_compare(y, x) == 1


def test_add_mul_match_oracle_randomized():
    rng = random.Random(2024)
    for _ in range(5000):
        fa, fb = rand_format(rng), rand_format(rng)
        out = rand_format(rng)
        a, b = rand_value(rng, fa), rand_value(rng, fb)
        assert fxp_add(a, b, out).raw == oracle_cast(a.exact + b.exact, out)
        assert fxp_mul(a, b, out).raw == oracle_cast(a.exact * b.exact, out)


def test_cast_matches_oracle_randomized():
    rng = random.Random(77)
    for _ in range(5000):
        fmt, out = rand_format(rng), rand_format(rng)
        v = rand_value(rng, fmt)
        assert fxp_cast(v, out).raw == oracle_cast(v.exact, out)


def test_widening_is_lossless():
    rng = random.Random(9)
    for _ in range(2000):
        fmt = rand_format(rng, max_bits=24)
        v = rand_value(rng, fmt)
        wide_int = fmt.integer_bits + rng.randint(1, 8)
        wide_frac = fmt.fractional_bits + rng.randint(0, 8)
        if wide_int + wide_frac > 64:
            continue
        wide = FixedPointFormat(
            wide_int + wide_frac,
            wide_int,
            signed=True,
            rounding=rng.choice(list(Rounding)),
            overflow=rng.choice(list(Overflow)),
        )
        assert fxp_cast(v, wide).exact == v.exact


def test_saturate_never_flips_sign():
    rng = random.Random(31337)
    for _ in range(4000):
        fa, fb = rand_format(rng), rand_format(rng)
        out = rand_format(rng).with_semantics(overflow=Overflow.SATURATE)
        a, b = rand_value(rng, fa), rand_value(rng, fb)
        for exact, got in (
            (a.exact + b.exact, fxp_add(a, b, out)),
            (a.exact * b.exact, fxp_mul(a, b, out)),
        ):
            assert not (exact > 0 and got.raw < 0)
            assert not (exact < 0 and got.raw > 0)


def test_product_format_is_exact():
    rng = random.Random(5)
    for _ in range(2000):
        fa, fb = rand_format(rng, 16), rand_format(rng, 16)
        pf = product_format(fa, fb)
        a, b = rand_value(rng, fa), rand_value(rng, fb)
        prod = fxp_mul(a, b, pf)
        assert prod.exact == a.exact * b.exact
