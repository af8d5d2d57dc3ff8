"""
The fault-free machine
======================

A 16x16x16 MatMul on eight lanes: output elements are dealt to lanes in
row-major order, each lane group runs its 16 multiply-accumulate steps, and
the results are stored the cycle after the last step.  The golden run records
every strobe value, which is what faulty runs are compared against.
"""

import numpy as np

from vecfi import KernelConfig, get_format, reference_matmul, run_golden
from vecfi.fpcodec import decode_value

cfg = KernelConfig(precision=get_format("FP16"))
golden = run_golden(cfg)
print(f"{cfg.label}: {cfg.groups} lane groups, {cfg.mac_cycles} MAC cycles, "
      f"{golden.total_cycles} cycles in total")

# %%
# The machine output equals the straight-line rounded recurrence.
assert golden.output_bits == reference_matmul(cfg, golden.A, golden.B)

# %%
# Compared with a float64 product, FP16 accumulation drifts by a few ulps.
A = np.array([[decode_value(x, cfg.precision) for x in row] for row in golden.A])
B = np.array([[decode_value(x, cfg.precision) for x in row] for row in golden.B])
C = np.array([[decode_value(x, cfg.acc_fmt) for x in row] for row in golden.output_bits])
print("max |C - A@B| =", np.abs(C - A @ B).max())

# %%
# Which fault sites exist, and how wide are they?
for site in golden.registry[:3] + golden.registry[-8:]:
    print(f"  {site.site_id:22s} {site.module.value:10s} {site.signal_class.value:9s} {site.width} bits")
