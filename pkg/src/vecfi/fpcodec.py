"""Bit-exact codecs for the four floating-point formats used by the kernels.

FP32 and FP16 are the IEEE-754 binary32/binary16 encodings, BP16 is the
bfloat-style E8M7 layout and FP8 is E5M2 with IEEE-style Inf/NaN.  All four
embed losslessly in a Python float (binary64), which is used as the carrier
for every arithmetic step: the exact (or innocuously double-rounded) binary64
result is rounded once into the target format.
"""

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Dict, Tuple

__all__ = [
    "FloatFormat",
    "FieldKind",
    "FP32",
    "FP16",
    "BP16",
    "FP8",
    "FORMATS",
    "get_format",
    "decode",
    "decode_value",
    "encode",
    "field_bounds",
    "field_bits",
    "flip_bit",
    "mul_round",
    "add_round",
    "format_bits",
    "widened",
]


@dataclass(frozen=True)
class FloatFormat:
    name: str
    total_bits: int
    exp_bits: int
    man_bits: int
    bias: int

    def __post_init__(self):
        if 1 + self.exp_bits + self.man_bits != self.total_bits:
            raise ValueError(f"{self.name}: field widths do not add up")
        if self.bias != 2 ** (self.exp_bits - 1) - 1:
            raise ValueError(f"{self.name}: non-standard bias {self.bias}")

    @property
    def exp_max(self) -> int:
        """All-ones biased exponent (Inf/NaN)."""
        return (1 << self.exp_bits) - 1

    @property
    def mask(self) -> int:
        return (1 << self.total_bits) - 1

    @property
    def sign_mask(self) -> int:
        return 1 << (self.total_bits - 1)

    @property
    def canonical_nan(self) -> int:
        return (self.exp_max << self.man_bits) | (1 << (self.man_bits - 1))

    @property
    def max_finite(self) -> float:
        return math.ldexp(2.0 - 2.0 ** -self.man_bits, self.exp_max - 1 - self.bias)

    def __str__(self):
        return self.name


class FieldKind(Enum):
    SIGN = "sign"
    EXPONENT = "exponent"
    MANTISSA = "mantissa"

    @classmethod
    def parse(cls, text: str) -> "FieldKind":
        key = text.strip().lower()
        for kind in cls:
            if key in (kind.value, kind.value[0], kind.name.lower()):
                return kind
        raise ValueError(f"unknown field {text!r} (expected sign/exponent/mantissa)")


FP32 = FloatFormat("FP32", 32, 8, 23, 127)
FP16 = FloatFormat("FP16", 16, 5, 10, 15)
BP16 = FloatFormat("BP16", 16, 8, 7, 127)
FP8 = FloatFormat("FP8", 8, 5, 2, 15)

FORMATS: Dict[str, FloatFormat] = {f.name: f for f in (FP32, FP16, BP16, FP8)}

# accumulate/output format of the widening kernels
_WIDENED = {"FP16": FP32, "FP8": FP16}


def get_format(name) -> FloatFormat:
    if isinstance(name, FloatFormat):
        return name
    try:
        return FORMATS[str(name).strip().upper()]
    except KeyError:
        raise ValueError(f"unknown precision {name!r}; expected one of {sorted(FORMATS)}") from None


def widened(fmt: FloatFormat) -> FloatFormat:
    try:
        return _WIDENED[fmt.name]
    except KeyError:
        raise ValueError(f"no widening defined for {fmt.name}") from None


def _decode_slow(bits: int, fmt: FloatFormat) -> Tuple[float, str]:
    man_bits = fmt.man_bits
    sign = -1.0 if bits >> (fmt.total_bits - 1) & 1 else 1.0
    exp = (bits >> man_bits) & fmt.exp_max
    man = bits & ((1 << man_bits) - 1)
    if exp == fmt.exp_max:
        if man:
            return math.nan, "nan"
        return sign * math.inf, "inf"
    if exp == 0:
        if man == 0:
            return sign * 0.0, "zero"
        return sign * math.ldexp(man, 1 - fmt.bias - man_bits), "subnormal"
    return sign * math.ldexp(man | (1 << man_bits), exp - fmt.bias - man_bits), "normal"


@lru_cache(maxsize=None)
def _value_table(fmt: FloatFormat):
    return tuple(_decode_slow(b, fmt)[0] for b in range(1 << fmt.total_bits))


def decode(bits: int, fmt: FloatFormat) -> Tuple[float, str]:
    """Decode a bit pattern; returns ``(value, class)``.

    The class tag is one of ``zero``, ``subnormal``, ``normal``, ``inf``, ``nan``.
    """
    if not 0 <= bits <= fmt.mask:
        raise ValueError(f"pattern {bits:#x} does not fit in {fmt.name}")
    return _decode_slow(bits, fmt)


def decode_value(bits: int, fmt: FloatFormat) -> float:
    """Value-only decode; table-driven for the formats of 16 bits or less."""
    if fmt.total_bits <= 16:
        return _value_table(fmt)[bits]
    return _decode_slow(bits, fmt)[0]


def encode(x: float, fmt: FloatFormat) -> int:
    """Round ``x`` to nearest-even in ``fmt``; overflow gives Inf, NaN is canonical."""
    if x != x:
        return fmt.canonical_nan
    sign = fmt.sign_mask if math.copysign(1.0, x) < 0 else 0
    ax = abs(x)
    man_bits = fmt.man_bits
    if ax == math.inf:
        return sign | (fmt.exp_max << man_bits)
    if ax == 0.0:
        return sign
    e = math.frexp(ax)[1] - 1
    emin = 1 - fmt.bias
    if e < emin:
        e = emin
    # integer significand at the quantum of binade e; scaling by 2^k is exact
    n = round(math.ldexp(ax, man_bits - e))
    hidden = 1 << man_bits
    if n >= hidden << 1:
        n >>= 1
        e += 1
    if n < hidden:
        # subnormal (only reachable when e == emin)
        return sign | n
    biased = e + fmt.bias
    if biased >= fmt.exp_max:
        return sign | (fmt.exp_max << man_bits)
    return sign | (biased << man_bits) | (n - hidden)


def field_bounds(fmt: FloatFormat, field: FieldKind) -> Tuple[int, int]:
    """Inclusive ``(high, low)`` bit indices of a field, LSB = 0."""
    if field is FieldKind.SIGN:
        return fmt.total_bits - 1, fmt.total_bits - 1
    if field is FieldKind.EXPONENT:
        return fmt.total_bits - 2, fmt.man_bits
    if field is FieldKind.MANTISSA:
        return fmt.man_bits - 1, 0
    raise ValueError(f"unknown field {field!r}")


def field_bits(fmt: FloatFormat, field: FieldKind) -> range:
    hi, lo = field_bounds(fmt, field)
    return range(lo, hi + 1)


def flip_bit(bits: int, index: int, width: int = None) -> int:
    if index < 0 or (width is not None and index >= width):
        raise ValueError(f"bit index {index} out of range for width {width}")
    return bits ^ (1 << index)


def mul_round(a: int, b: int, in_fmt: FloatFormat, out_fmt: FloatFormat) -> int:
    # products of any two supported operands are exact in binary64
    return encode(decode_value(a, in_fmt) * decode_value(b, in_fmt), out_fmt)


def add_round(x: int, y: int, fmt: FloatFormat) -> int:
    # binary64 has at least 2p+2 bits for every format here, so rounding the
    # binary64 sum again is equivalent to a single correct rounding
    return encode(decode_value(x, fmt) + decode_value(y, fmt), fmt)


def format_bits(bits: int, fmt: FloatFormat) -> str:
    """Lowercase hex with width-matching zero padding, e.g. ``0x3c`` for FP8."""
    return f"0x{bits:0{fmt.total_bits // 4}x}"
