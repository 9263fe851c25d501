"""Exact two's-complement fixed-point arithmetic with explicit formats.

A value is a raw integer interpreted as ``raw * 2**-fractional_bits``.  All
operations compute the exact rational result first and apply a single cast
into the requested output format, so results are deterministic and
bit-reproducible regardless of platform.  Python integers are arbitrary
precision, which more than covers the worst case (64-bit operands, adder
trees of any practical depth).

Two rounding modes are supported: truncation toward negative infinity (an
arithmetic right shift, the cheapest thing to build in hardware) and
round-to-nearest-even.  Overflow either saturates to the format limits or
wraps modulo ``2**total_bits``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction


class Rounding(Enum):
    """How a cast resolves values that fall between representable points."""

    TRUNCATE = "trn"
    NEAREST_EVEN = "rne"


class Overflow(Enum):
    """How a cast handles values outside the representable range."""

    SATURATE = "sat"
    WRAP = "wrap"


@dataclass(frozen=True)
class FixedPointFormat:
    """Width, scaling, signedness and cast semantics of a fixed-point type.

    ``integer_bits`` includes the sign bit for signed formats, so
    ``fixed<8,1,s>`` covers [-1, 1) with 7 fractional bits.
    """

    total_bits: int
    integer_bits: int
    signed: bool = True
    rounding: Rounding = Rounding.NEAREST_EVEN
    overflow: Overflow = Overflow.SATURATE

    def __post_init__(self) -> None:
        if not 1 <= self.total_bits <= 64:
            raise ValueError(f"total_bits must be in 1..64, got {self.total_bits}")
        if not 0 <= self.integer_bits <= self.total_bits:
            raise ValueError(
                f"integer_bits must be in 0..{self.total_bits}, got {self.integer_bits}"
            )

    @property
    def fractional_bits(self) -> int:
        return self.total_bits - self.integer_bits

    @property
    def min_raw(self) -> int:
        return -(1 << (self.total_bits - 1)) if self.signed else 0

    @property
    def max_raw(self) -> int:
        if self.signed:
            return (1 << (self.total_bits - 1)) - 1
        return (1 << self.total_bits) - 1

    @property
    def min_value(self) -> Fraction:
        return Fraction(self.min_raw, 1 << self.fractional_bits)

    @property
    def max_value(self) -> Fraction:
        return Fraction(self.max_raw, 1 << self.fractional_bits)

    @property
    def ulp(self) -> Fraction:
        return Fraction(1, 1 << self.fractional_bits)

    def holds_raw(self, raw: int) -> bool:
        return self.min_raw <= raw <= self.max_raw

    def with_semantics(
        self, rounding: Rounding | None = None, overflow: Overflow | None = None
    ) -> "FixedPointFormat":
        """Same width/scaling, different cast semantics."""
        return FixedPointFormat(
            self.total_bits,
            self.integer_bits,
            self.signed,
            rounding if rounding is not None else self.rounding,
            overflow if overflow is not None else self.overflow,
        )

    def to_string(self) -> str:
        sign = "s" if self.signed else "u"
        return (
            f"fixed<{self.total_bits},{self.integer_bits},{sign},"
            f"{self.rounding.value},{self.overflow.value}>"
        )

    def __str__(self) -> str:  # pragma: no cover - convenience
        return self.to_string()

    @classmethod
    def from_string(cls, text: str) -> "FixedPointFormat":
        """Parse ``fixed<W,I,s|u[,rne|trn][,sat|wrap]>`` notation.

        Rounding defaults to round-nearest-even and overflow to saturate when
        omitted, e.g. ``fixed<18,8,s>`` == ``fixed<18,8,s,rne,sat>``.
        """
        s = text.strip()
        if not (s.startswith("fixed<") and s.endswith(">")):
            raise ValueError(f"bad fixed-point format string: {text!r}")
        parts = [p.strip() for p in s[len("fixed<") : -1].split(",")]
        if len(parts) < 3 or len(parts) > 5:
            raise ValueError(f"bad fixed-point format string: {text!r}")
        try:
            total = int(parts[0])
            integer = int(parts[1])
        except ValueError as e:
            raise ValueError(f"bad fixed-point format string: {text!r}") from e
        if parts[2] not in ("s", "u"):
            raise ValueError(f"bad signedness {parts[2]!r} in {text!r}")
        signed = parts[2] == "s"
        rounding = Rounding.NEAREST_EVEN
        overflow = Overflow.SATURATE
        for tok in parts[3:]:
            if tok in ("rne", "trn"):
                rounding = Rounding(tok)
            elif tok in ("sat", "wrap"):
                overflow = Overflow(tok)
            else:
                raise ValueError(f"bad format option {tok!r} in {text!r}")
        return cls(total, integer, signed, rounding, overflow)


@dataclass(frozen=True)
class FixedPointValue:
    """An integer raw bit pattern paired with the format that interprets it."""

    raw: int
    fmt: FixedPointFormat

    def __post_init__(self) -> None:
        if not self.fmt.holds_raw(self.raw):
            raise ValueError(
                f"raw {self.raw} does not fit {self.fmt.to_string()}"
            )

    @property
    def exact(self) -> Fraction:
        """The represented real value, exactly."""
        return Fraction(self.raw, 1 << self.fmt.fractional_bits)

    @property
    def value(self) -> float:
        """The represented value as a float (rounded if raw exceeds 53 bits)."""
        return math.ldexp(self.raw, -self.fmt.fractional_bits)


def _round_shift(v: int, shift: int, rounding: Rounding) -> int:
    """Round ``v * 2**-shift`` to an integer.  ``shift`` must be >= 0."""
    if shift == 0:
        return v
    if rounding is Rounding.TRUNCATE:
        return v >> shift  # arithmetic shift floors toward -inf
    q = v >> shift
    r = v - (q << shift)
    half = 1 << (shift - 1)
    if r > half:
        return q + 1
    if r < half:
        return q
    return q + (q & 1)  # tie: round to even


def _apply_overflow(n: int, fmt: FixedPointFormat) -> int:
    if fmt.min_raw <= n <= fmt.max_raw:
        return n
    if fmt.overflow is Overflow.SATURATE:
        return fmt.max_raw if n > fmt.max_raw else fmt.min_raw
    m = n & ((1 << fmt.total_bits) - 1)
    if fmt.signed and m >= 1 << (fmt.total_bits - 1):
        m -= 1 << fmt.total_bits
    return m


def cast_scaled(num: int, scale: int, fmt: FixedPointFormat) -> FixedPointValue:
    """Cast the exact value ``num * 2**-scale`` into ``fmt`` (single rounding)."""
    f = fmt.fractional_bits
    if f >= scale:
        n = num << (f - scale)
    else:
        n = _round_shift(num, scale - f, fmt.rounding)
    return FixedPointValue(_apply_overflow(n, fmt), fmt)


def quantize_real(x: float, fmt: FixedPointFormat) -> FixedPointValue:
    """Cast a real number into ``fmt`` under its rounding/overflow semantics."""
    if not math.isfinite(x):
        raise ValueError(f"cannot quantize non-finite value {x!r}")
    frac = Fraction(x) * (1 << fmt.fractional_bits)
    q, r = divmod(frac.numerator, frac.denominator)
    if r == 0:
        n = q
    elif fmt.rounding is Rounding.TRUNCATE:
        n = q
    else:
        twice = 2 * r
        if twice > frac.denominator:
            n = q + 1
        elif twice < frac.denominator:
            n = q
        else:
            n = q + (q & 1)
    return FixedPointValue(_apply_overflow(n, fmt), fmt)


def dequantize(v: FixedPointValue) -> float:
    """Return ``raw * 2**-fractional_bits`` (exact whenever raw fits 53 bits)."""
    return v.value


def fxp_cast(v: FixedPointValue, out_fmt: FixedPointFormat) -> FixedPointValue:
    """Re-cast a value into another format (single rounding at the new scale)."""
    return cast_scaled(v.raw, v.fmt.fractional_bits, out_fmt)


def fxp_add(
    a: FixedPointValue, b: FixedPointValue, out_fmt: FixedPointFormat
) -> FixedPointValue:
    """Exact sum of two values, then one cast into ``out_fmt``."""
    fa, fb = a.fmt.fractional_bits, b.fmt.fractional_bits
    scale = max(fa, fb)
    num = (a.raw << (scale - fa)) + (b.raw << (scale - fb))
    return cast_scaled(num, scale, out_fmt)


def fxp_mul(
    a: FixedPointValue, b: FixedPointValue, out_fmt: FixedPointFormat
) -> FixedPointValue:
    """Exact product of two values, then one cast into ``out_fmt``."""
    return cast_scaled(a.raw * b.raw, a.fmt.fractional_bits + b.fmt.fractional_bits, out_fmt)


def fxp_compare(a: FixedPointValue, b: FixedPointValue) -> int:
    """Order the exact real values: -1 if a < b, 0 if equal, 1 if a > b.

    Formats may differ; the comparison aligns both raws to a common scale.
    """
    fa, fb = a.fmt.fractional_bits, b.fmt.fractional_bits
    scale = max(fa, fb)
    x = a.raw << (scale - fa)
    y = b.raw << (scale - fb)
    return (x > y) - (x < y)


#: Format of single-bit control wires (comparator outputs, valid flags).
BIT = FixedPointFormat(1, 1, signed=False, rounding=Rounding.TRUNCATE)


def product_format(a: FixedPointFormat, b: FixedPointFormat) -> FixedPointFormat:
    """The exact-product format: widths add, fractional bits add.

    A product of W1 x W2-bit operands always fits in W1+W2 bits (signed when
    either operand is signed), so a multiply into this format never rounds
    and never overflows.
    """
    total = a.total_bits + b.total_bits
    frac = a.fractional_bits + b.fractional_bits
    if total > 64:
        raise ValueError(f"product width {total} exceeds 64 bits")
    return FixedPointFormat(
        total,
        total - frac,
        signed=a.signed or b.signed,
        rounding=Rounding.TRUNCATE,
        overflow=Overflow.WRAP,
    )
