"""
Four small floating-point formats
=================================

The datapath works on FP32, FP16, BP16 (8-bit exponent, 7-bit mantissa) and
FP8 (E5M2).  Every value in the machine is a raw bit pattern; this script shows
how those patterns decode, where the fields sit, and what a single bit flip does
to a value in each format.
"""

from vecfi.fpcodec import FORMATS, FieldKind, decode, encode, field_bounds, flip_bit, format_bits

for name, fmt in FORMATS.items():
    one = encode(1.0, fmt)
    bounds = {f.value: field_bounds(fmt, f) for f in FieldKind}
    print(f"{name:5s} 1.0 = {format_bits(one, fmt):12s} fields {bounds}  max finite {fmt.max_finite:.4g}")

# %%
# Flipping the most significant exponent bit of 1.0 gives Inf in every format,
# while the next exponent bit down scales the value by an enormous power of two.
# Formats sharing the 5-bit exponent (FP16 and FP8) react identically.

for name, fmt in FORMATS.items():
    one = encode(1.0, fmt)
    hi, lo = field_bounds(fmt, FieldKind.EXPONENT)
    print(f"{name:5s} exp MSB flip -> {decode(flip_bit(one, hi), fmt)[0]!r:8}  "
          f"next bit -> {decode(flip_bit(one, hi - 1), fmt)[0]:.4g}  "
          f"mantissa LSB -> {decode(flip_bit(one, 0), fmt)[0]!r}")

# %%
# Rounding is to nearest, ties to even.  2.25 sits exactly between the FP8
# neighbours 2.0 and 2.5, and lands on the even one.
print("encode(2.25, FP8) =", format_bits(encode(2.25, FORMATS["FP8"]), FORMATS["FP8"]))
