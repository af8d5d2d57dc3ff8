"""Numerical severity of a corrupted output matrix."""

import math
from dataclasses import dataclass
from fractions import Fraction
from math import isqrt
from typing import FrozenSet, Optional, Sequence, Tuple

from .fpcodec import FloatFormat, decode_value


@dataclass(frozen=True)
class SeverityRecord:
    corrupted: FrozenSet[Tuple[int, int]]
    K: int
    rmse: Optional[float]
    nonfinite_count: int


def _sqrt_fraction(q: Fraction) -> float:
    """Correctly rounded square root of a non-negative rational."""
    if q == 0:
        return 0.0
    # scale so the integer root carries ~64 more bits than binary64 needs
    shift = max(0, 2 * 118 - (q.numerator.bit_length() - q.denominator.bit_length()))
    shift += shift & 1
    n = (q.numerator << shift) // q.denominator
    r = isqrt(n)
    sticky = 1 if r * r != n or (q.numerator << shift) % q.denominator else 0
    # the sticky bit breaks exact ties the truncation could otherwise create
    return float(Fraction(2 * r + sticky, 1 << (shift // 2 + 1)))


def severity(golden_out: Sequence[Sequence[int]], faulty_out: Sequence[Sequence[int]],
             out_fmt: FloatFormat) -> SeverityRecord:
    """Corrupted set, its size K and the RMSE over finite corrupted elements."""
    if len(golden_out) != len(faulty_out) or any(
            len(g) != len(f) for g, f in zip(golden_out, faulty_out)):
        raise ValueError("golden and faulty matrices differ in shape")
    corrupted = []
    total = Fraction(0)
    finite = 0
    for i, (grow, frow) in enumerate(zip(golden_out, faulty_out)):
        for j, (gb, fb) in enumerate(zip(grow, frow)):
            if gb == fb:
                continue
            corrupted.append((i, j))
            yg = decode_value(gb, out_fmt)
            yf = decode_value(fb, out_fmt)
            if math.isfinite(yg) and math.isfinite(yf):
                diff = Fraction(yf) - Fraction(yg)
                total += diff * diff
                finite += 1
    k = len(corrupted)
    rmse = _sqrt_fraction(total / finite) if finite else None
    return SeverityRecord(frozenset(corrupted), k, rmse, k - finite)
