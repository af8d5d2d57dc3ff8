"""Independent reference arithmetic for the tests.

Everything here works on exact rationals (``fractions.Fraction``) and derives
rounding directly from the definition of round-to-nearest-even.  It shares no
code with the package, so agreement between the two is meaningful.
"""

import math
from fractions import Fraction


class Val:
    """Exact value: a rational with an explicit sign (for signed zero), or Inf/NaN."""

    __slots__ = ("q", "neg", "inf", "nan")

    def __init__(self, q=Fraction(0), neg=False, inf=False, nan=False):
        self.q, self.neg, self.inf, self.nan = q, neg, inf, nan

    def __repr__(self):
        if self.nan:
            return "Val(nan)"
        if self.inf:
            return f"Val({'-' if self.neg else '+'}inf)"
        return f"Val({'-' if self.neg and self.q == 0 else ''}{self.q})"


def fields(fmt):
    width, e_bits, m_bits, bias = fmt
    return width, e_bits, m_bits, bias


def oracle_decode(bits, fmt) -> Val:
    width, e_bits, m_bits, bias = fields(fmt)
    neg = bool(bits >> (width - 1))
    e = (bits >> m_bits) & ((1 << e_bits) - 1)
    m = bits & ((1 << m_bits) - 1)
    if e == (1 << e_bits) - 1:
        return Val(nan=True) if m else Val(neg=neg, inf=True)
    if e == 0:
        mag = Fraction(m, 1 << m_bits) * Fraction(2) ** (1 - bias)
    else:
        mag = (1 + Fraction(m, 1 << m_bits)) * Fraction(2) ** (e - bias)
    return Val(-mag if neg else mag, neg)


def oracle_class(bits, fmt) -> str:
    width, e_bits, m_bits, _ = fields(fmt)
    e = (bits >> m_bits) & ((1 << e_bits) - 1)
    m = bits & ((1 << m_bits) - 1)
    if e == (1 << e_bits) - 1:
        return "nan" if m else "inf"
    if e == 0:
        return "subnormal" if m else "zero"
    return "normal"


def _floor_log2(q: Fraction) -> int:
    e = q.numerator.bit_length() - q.denominator.bit_length()
    if Fraction(2) ** e > q:
        e -= 1
    return e


def oracle_round(v: Val, fmt) -> int:
    """Round an exact value to the nearest pattern, ties to even, overflow to Inf."""
    width, e_bits, m_bits, bias = fields(fmt)
    exp_all = (1 << e_bits) - 1
    if v.nan:
        return (exp_all << m_bits) | (1 << (m_bits - 1))
    sign = (1 << (width - 1)) if v.neg else 0
    if v.inf:
        return sign | (exp_all << m_bits)
    mag = abs(v.q)
    if mag == 0:
        return sign
    emin = 1 - bias
    e = max(_floor_log2(mag), emin)
    n = round(mag / Fraction(2) ** (e - m_bits))  # Fraction.__round__ is half-even
    if n == 1 << (m_bits + 1):
        n >>= 1
        e += 1
    if n < 1 << m_bits:
        return sign | n
    biased = e + bias
    if biased >= exp_all:
        return sign | (exp_all << m_bits)
    return sign | (biased << m_bits) | (n - (1 << m_bits))


def oracle_mul(a: Val, b: Val) -> Val:
    if a.nan or b.nan:
        return Val(nan=True)
    neg = a.neg != b.neg
    if a.inf or b.inf:
        if (not a.inf and a.q == 0) or (not b.inf and b.q == 0):
            return Val(nan=True)
        return Val(neg=neg, inf=True)
    return Val(a.q * b.q, neg)


def oracle_add(a: Val, b: Val) -> Val:
    if a.nan or b.nan:
        return Val(nan=True)
    if a.inf and b.inf:
        return Val(neg=a.neg, inf=True) if a.neg == b.neg else Val(nan=True)
    if a.inf:
        return a
    if b.inf:
        return b
    q = a.q + b.q
    if q == 0:
        # exact zero: -0 only when both addends are -0 (round-to-nearest)
        both_neg_zero = a.q == 0 and b.q == 0 and a.neg and b.neg
        return Val(Fraction(0), both_neg_zero)
    return Val(q, q < 0)


def oracle_mul_round(a_bits, b_bits, in_fmt, out_fmt) -> int:
    return oracle_round(oracle_mul(oracle_decode(a_bits, in_fmt), oracle_decode(b_bits, in_fmt)), out_fmt)


def oracle_add_round(x_bits, y_bits, fmt) -> int:
    return oracle_round(oracle_add(oracle_decode(x_bits, fmt), oracle_decode(y_bits, fmt)), fmt)


def oracle_matmul(A, B, in_fmt, acc_fmt):
    """acc <- round(acc + round(a*b)) over the depth, starting from +0."""
    m, depth, n = len(A), len(B), len(B[0])
    out = []
    for i in range(m):
        row = []
        for j in range(n):
            acc = 0
            for d in range(depth):
                p = oracle_mul_round(A[i][d], B[d][j], in_fmt, acc_fmt)
                acc = oracle_add_round(acc, p, acc_fmt)
            row.append(acc)
        out.append(row)
    return out


def oracle_rmse(golden_vals, faulty_vals):
    """Brute-force RMSE over finite corrupted pairs: exact mean, then math.sqrt."""
    total, count = Fraction(0), 0
    for g, f in zip(golden_vals, faulty_vals):
        if math.isfinite(g) and math.isfinite(f):
            total += (Fraction(f) - Fraction(g)) ** 2
            count += 1
    if not count:
        return None
    return math.sqrt(float(total / count))


# (width, exponent bits, mantissa bits, bias) as plain tuples
T_FP32 = (32, 8, 23, 127)
T_FP16 = (16, 5, 10, 15)
T_BP16 = (16, 8, 7, 127)
T_FP8 = (8, 5, 2, 15)
TUPLES = {"FP32": T_FP32, "FP16": T_FP16, "BP16": T_BP16, "FP8": T_FP8}
