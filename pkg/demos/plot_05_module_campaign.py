"""
Module-level SET and SEU campaign
=================================

Faults land uniformly over every eligible bit and cycle: SEUs on storage
(TCDM, VRF, controller), SETs on ports and handshakes (VFU, VLSU).  Bigger
blocks catch more faults; handshake hits are where crashes come from.
"""

from vecfi.campaign import module_tallies, run_module_suite
from vecfi.machine import FaultKind
from vecfi.report import aggregate, module_shares

records = run_module_suite(3000)

for kind in (FaultKind.SET, FaultKind.SEU):
    print(kind.value)
    for module, t in sorted(module_tallies(r for r in records if r.fault_kind == kind.value).items()):
        n = t["Masked"] + t["FS"] + t["FD"]
        print(f"  {module:10s} {n:5d} trials  Masked {t['Masked'] / n:6.1%}  FS {t['FS'] / n:6.1%}  "
              f"FD {t['FD'] / n:6.1%}  (SDC {t['SDC']})")

# %%
# Share of manifesting errors (FS + FD) per module for the FP32 workload.
for row in module_shares(aggregate(records)):
    if row["precision"] == "FP32":
        print(f"  {row['fault_kind']} {row['module']:10s} manifest share {row['manifest_share']:.3f}")
