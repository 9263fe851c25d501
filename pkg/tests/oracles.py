"""Reference implementations shared across test modules.

These are written independently of the package code paths they check:
Fraction arithmetic with math.floor / % instead of shifts and masks.
"""

import math
from fractions import Fraction

from ml2rtl.fixedpoint import FixedPointFormat, Overflow, Rounding


def oracle_cast(value: Fraction, fmt: FixedPointFormat) -> int:
    """Exact rational -> raw integer under the format's cast semantics."""
    scaled = value * (Fraction(2) ** fmt.fractional_bits)
    fl = math.floor(scaled)
    if fmt.rounding is Rounding.TRUNCATE:
        n = fl
    else:
        rem = scaled - fl
        if rem > Fraction(1, 2):
            n = fl + 1
        elif rem < Fraction(1, 2):
            n = fl
        else:
            n = fl if fl % 2 == 0 else fl + 1
    if n < fmt.min_raw or n > fmt.max_raw:
        if fmt.overflow is Overflow.SATURATE:
            n = min(max(n, fmt.min_raw), fmt.max_raw)
        else:
            n = n % (1 << fmt.total_bits)
            if fmt.signed and n >= 1 << (fmt.total_bits - 1):
                n -= 1 << fmt.total_bits
    return n
