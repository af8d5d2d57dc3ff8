"""
Single fault injections
=======================

One fault, one run.  The three outcome classes are easy to provoke by hand:
dropping a valid pulse stalls the pipeline, flipping a stored input sign
corrupts a whole output row, and a glitch on a port nobody samples goes nowhere.
"""

import json

from vecfi import FaultKind, FaultSpec, KernelConfig, get_format, run_faulty, run_golden
from vecfi.campaign import trial_json

golden = run_golden(KernelConfig(precision=get_format("FP16"), dims=(4, 4, 4)))
lay = golden.layout


def show(title, fault):
    print(f"{title}:\n  {json.dumps(trial_json(fault, run_faulty(golden, fault)))}")


show("suppressed valid during an active transfer",
     FaultSpec(FaultKind.SET, golden.site("vfu.lane0.valid"), 0, 3))

# sign bit of A[2][3] while it still sits in TCDM
word = lay.base_a + 2 * lay.D + 3
show("SEU on a stored input sign bit",
     FaultSpec(FaultKind.SEU, golden.site("tcdm.state"), word * lay.word_w + lay.in_w - 1, 0))

# the first store happens after the first group finishes, so cycle 2 has
# nothing on the store bus for the glitch to corrupt
show("SET on the store data bus in a cycle with no store",
     FaultSpec(FaultKind.SET, golden.site("vlsu.store_data"), 5, 2))
