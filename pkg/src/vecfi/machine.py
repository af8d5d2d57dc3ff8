"""Structural vector-cluster model with good-machine / faulty-machine simulation.

The model is a three-stage schedule running one MAC micro-op per cycle:

* the VLSU prefetches the operands of micro-op ``u+1`` from TCDM into one of
  two VRF staging buffers,
* the VFU lanes execute micro-op ``u`` from the other staging buffer into a
  double-buffered accumulator held in the VRF,
* one cycle after a lane group finishes, the VLSU writes its accumulators
  back to the output region of TCDM.

The scalar operand ``A[i, d]`` is held once per row on the VFU operand-A bus
and fanned out to every lane working on that row, while each lane receives its
own ``B[d, j]`` element.

Two faulty-machine engines share these semantics.  ``simulate_full`` re-runs
the whole machine with the fault applied and is used for faults that can
perturb control (handshakes, the controller sequence counter).  Everything
else goes through ``_run_divergent``, which replays only the operations whose
inputs differ from the good machine, in the manner of a concurrent fault
simulator.
"""

from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, List, Optional, Tuple

from .fpcodec import add_round, decode_value, encode, mul_round
from .kernel import (
    EPILOGUE_CYCLES,
    PROLOGUE_CYCLES,
    KernelConfig,
    Matrix,
    MacEvent,
    build_schedule,
    gen_inputs,
    lane_assignment,
)
from .severity import SeverityRecord, severity

VRF_REGS = 32
VRF_REG_BITS = 256
SEQ_BITS = 32
# placeholder blocks without a behavioural model
SNITCH_STATE_BITS = 32 * 32
ICACHE_STATE_BITS = 8192
VSLDU_PORT_BITS = 256


class Module(Enum):
    TCDM = "TCDM"
    VRF = "VRF"
    VFU = "VFU"
    VLSU = "VLSU"
    VSLDU = "VSLDU"
    CONTROLLER = "Controller"
    SNITCH = "Snitch"
    ICACHE = "ICache"

    @classmethod
    def parse(cls, text) -> "Module":
        if isinstance(text, cls):
            return text
        key = str(text).strip().lower()
        for m in cls:
            if key in (m.value.lower(), m.name.lower()):
                return m
        raise ValueError(f"unknown module {text!r}")


UNMODELED_MODULES = frozenset({Module.VSLDU, Module.SNITCH, Module.ICACHE})


class SignalClass(Enum):
    DATA = "Data"
    HANDSHAKE = "Handshake"
    STATE = "State"


class FaultKind(Enum):
    SEU = "SEU"
    SET = "SET"

    @classmethod
    def parse(cls, text) -> "FaultKind":
        if isinstance(text, cls):
            return text
        try:
            return cls[str(text).strip().upper()]
        except KeyError:
            raise ValueError(f"unknown fault kind {text!r} (expected SEU or SET)") from None


class OutcomeClass(Enum):
    MASKED = "Masked"
    FS = "FS"
    FD = "FD"


class UnsupportedModuleError(ValueError):
    """Raised when a campaign targets a block that has no behavioural model."""


class InvalidFaultError(ValueError):
    pass


@dataclass(frozen=True)
class FaultSite:
    module: Module
    signal_class: SignalClass
    width: int
    site_id: str


@dataclass(frozen=True)
class FaultSpec:
    kind: FaultKind
    site: FaultSite
    bit_index: int
    cycle: int

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "site_id": self.site.site_id,
                "bit": self.bit_index, "cycle": self.cycle}


@dataclass(frozen=True)
class TrialOutcome:
    cls: OutcomeClass
    sdc: bool
    first_divergence_cycle: Optional[int]
    corrupted_indices: FrozenSet[Tuple[int, int]]
    K: int
    severity: Optional[SeverityRecord]
    elapsed_cycles: int

    @property
    def rmse(self) -> Optional[float]:
        return self.severity.rmse if self.severity else None

    @property
    def nonfinite_count(self) -> int:
        return self.severity.nonfinite_count if self.severity else 0


def detect_deadlock(elapsed_cycles: int, golden_cycles: int) -> bool:
    return elapsed_cycles > 2 * golden_cycles + 64


def classify(handshake_mismatch: bool, deadlock: bool, data_mismatch: bool,
             output_mismatch: bool) -> Tuple[OutcomeClass, bool]:
    """FS takes precedence over FD, FD over Masked."""
    if handshake_mismatch or deadlock:
        return OutcomeClass.FS, False
    if data_mismatch or output_mismatch:
        return OutcomeClass.FD, output_mismatch
    return OutcomeClass.MASKED, False


# ---------------------------------------------------------------------------
# layout

class Layout:
    """Static geometry of one kernel on the machine: addresses, buffers, sites."""

    def __init__(self, cfg: KernelConfig):
        self.cfg = cfg
        m, n, depth = cfg.dims
        self.M, self.N, self.D, self.L = m, n, depth, cfg.lanes
        self.in_fmt, self.acc_fmt = cfg.precision, cfg.acc_fmt
        self.in_w, self.acc_w = self.in_fmt.total_bits, self.acc_fmt.total_bits
        self.in_mask = (1 << self.in_w) - 1
        self.acc_mask = (1 << self.acc_w) - 1
        # every TCDM slot is as wide as an output element
        self.word_w = self.acc_w
        self.base_a, self.base_b = 0, m * depth
        self.base_c = m * depth + depth * n
        self.T = self.base_c + m * n
        self.G = cfg.groups
        self.total_macs = self.G * depth
        self.golden_cycles = PROLOGUE_CYCLES + self.total_macs + EPILOGUE_CYCLES

        # per group: active lanes (lane, i, j, slot) and the rows held on the bus
        self.group_lanes = []
        self.group_rows = []
        for g in range(self.G):
            rows = []
            lanes = []
            for lane, i, j in lane_assignment(cfg, g):
                if i not in rows:
                    rows.append(i)
                lanes.append((lane, i, j, rows.index(i)))
            self.group_rows.append(tuple(rows))
            self.group_lanes.append(tuple(lanes))
        self.S = max(len(r) for r in self.group_rows)

        # VRF slot locations follow the TCDM words in one flat location space
        S, L, T = self.S, self.L, self.T
        self.sa_base = T
        self.sb_base = T + 2 * S
        self.acc_base = T + 2 * S + 2 * L
        self.n_locs = self.acc_base + 2 * L
        self._build_vrf_map()

    def sa(self, parity, slot):
        return self.sa_base + parity * self.S + slot

    def sb(self, parity, lane):
        return self.sb_base + parity * self.L + lane

    def acc(self, parity, lane):
        return self.acc_base + parity * self.L + lane

    def loc_mask(self, loc) -> int:
        if loc < self.T:
            return (1 << self.word_w) - 1
        if loc < self.acc_base:
            return self.in_mask
        return self.acc_mask

    def _build_vrf_map(self):
        # each buffer starts on a register boundary
        buffers = []
        for p in range(2):
            buffers.append([(self.sa(p, s), self.in_w) for s in range(self.S)])
        for p in range(2):
            buffers.append([(self.sb(p, l), self.in_w) for l in range(self.L)])
        for p in range(2):
            buffers.append([(self.acc(p, l), self.acc_w) for l in range(self.L)])
        self.vrf_slots = []  # (first bit, width, loc)
        reg = 0
        for buf in buffers:
            bit = reg * VRF_REG_BITS
            for loc, w in buf:
                self.vrf_slots.append((bit, w, loc))
                bit += w
            reg += -(-(bit - reg * VRF_REG_BITS) // VRF_REG_BITS)
        if reg > VRF_REGS:
            raise ValueError(f"kernel needs {reg} vector registers, VRF has {VRF_REGS}")
        self._vrf_starts = [s[0] for s in self.vrf_slots]

    def vrf_bit(self, bit: int) -> Optional[Tuple[int, int]]:
        """Map a VRF storage bit to ``(loc, bit within slot)``; None if unused."""
        k = bisect_left(self._vrf_starts, bit + 1) - 1
        if k < 0:
            return None
        start, w, loc = self.vrf_slots[k]
        if bit < start + w:
            return loc, bit - start
        return None

    def tcdm_bit(self, bit: int) -> Tuple[int, int]:
        return divmod(bit, self.word_w)

    def c_word(self, i, j) -> int:
        return self.base_c + i * self.N + j

    def out_coord(self, word) -> Tuple[int, int]:
        return divmod(word - self.base_c, self.N)

    def fetch_plan(self, u):
        """TCDM sources for the S scalar slots followed by the L lane slots (-1 = none)."""
        srcs = [-1] * (self.S + self.L)
        if 0 <= u < self.total_macs:
            g, d = divmod(u, self.D)
            for s, i in enumerate(self.group_rows[g]):
                srcs[s] = self.base_a + i * self.D + d
            for lane, _, j, _ in self.group_lanes[g]:
                srcs[self.S + lane] = self.base_b + d * self.N + j
        return srcs


def site_registry(cfg: KernelConfig) -> List[FaultSite]:
    lay = cfg if isinstance(cfg, Layout) else Layout(cfg)
    S, L = lay.S, lay.L
    sites = [
        FaultSite(Module.TCDM, SignalClass.STATE, lay.T * lay.word_w, "tcdm.state"),
        FaultSite(Module.VRF, SignalClass.STATE, VRF_REGS * VRF_REG_BITS, "vrf.state"),
        FaultSite(Module.VFU, SignalClass.DATA, S * lay.in_w, "vfu.operand_a"),
    ]
    for lane in range(L):
        p = f"vfu.lane{lane}."
        sites += [
            FaultSite(Module.VFU, SignalClass.DATA, lay.in_w, p + "operand_a"),
            FaultSite(Module.VFU, SignalClass.DATA, lay.in_w, p + "operand_b"),
            FaultSite(Module.VFU, SignalClass.DATA, lay.acc_w, p + "operand_c"),
            FaultSite(Module.VFU, SignalClass.DATA, lay.acc_w, p + "result"),
            FaultSite(Module.VFU, SignalClass.HANDSHAKE, 1, p + "valid"),
            FaultSite(Module.VFU, SignalClass.HANDSHAKE, 1, p + "ready"),
        ]
    sites += [
        FaultSite(Module.VLSU, SignalClass.DATA, (S + L) * lay.in_w, "vlsu.data"),
        FaultSite(Module.VLSU, SignalClass.HANDSHAKE, 1, "vlsu.valid"),
        FaultSite(Module.VLSU, SignalClass.HANDSHAKE, 1, "vlsu.ready"),
        FaultSite(Module.VLSU, SignalClass.DATA, L * lay.acc_w, "vlsu.store_data"),
        FaultSite(Module.VLSU, SignalClass.HANDSHAKE, 1, "vlsu.store_valid"),
        FaultSite(Module.VLSU, SignalClass.HANDSHAKE, 1, "vlsu.store_ready"),
        FaultSite(Module.CONTROLLER, SignalClass.STATE, SEQ_BITS, "controller.seq"),
        FaultSite(Module.VSLDU, SignalClass.DATA, VSLDU_PORT_BITS, "vsldu.data"),
        FaultSite(Module.VSLDU, SignalClass.HANDSHAKE, 1, "vsldu.valid"),
        FaultSite(Module.VSLDU, SignalClass.HANDSHAKE, 1, "vsldu.ready"),
        FaultSite(Module.SNITCH, SignalClass.STATE, SNITCH_STATE_BITS, "snitch.state"),
        FaultSite(Module.ICACHE, SignalClass.STATE, ICACHE_STATE_BITS, "icache.state"),
    ]
    return sites


def handshake_site_ids(lanes: int) -> Tuple[str, ...]:
    ids = []
    for lane in range(lanes):
        ids += [f"vfu.lane{lane}.valid", f"vfu.lane{lane}.ready"]
    ids += ["vlsu.valid", "vlsu.ready", "vlsu.store_valid", "vlsu.store_ready"]
    return tuple(ids)


WRITEOUT_STROBES = frozenset({"vlsu.store_data"})


# ---------------------------------------------------------------------------
# full simulation

def _pack(values, width):
    out = 0
    for k, v in enumerate(values):
        out |= v << (k * width)
    return out


def _unpack(word, width, count):
    mask = (1 << width) - 1
    return [(word >> (k * width)) & mask for k in range(count)]


@dataclass
class FullRun:
    tcdm: List[int]
    cycles: int
    deadlock: bool
    data_strobes: List[Dict[str, int]]
    handshake_strobes: List[Tuple[int, ...]]
    ops: Optional[list] = None
    events: Optional[List[MacEvent]] = None


def simulate_full(lay: Layout, A: Matrix, B: Matrix, fault: Optional[FaultSpec] = None,
                  record: bool = False) -> FullRun:
    """Cycle-by-cycle execution of the whole machine, optionally with one fault."""
    M, N, D, L, S = lay.M, lay.N, lay.D, lay.L, lay.S
    in_w, acc_w = lay.in_w, lay.acc_w
    in_fmt, acc_fmt = lay.in_fmt, lay.acc_fmt
    in_mask = lay.in_mask
    total = lay.total_macs
    golden = lay.golden_cycles

    tcdm = [0] * lay.T
    for i in range(M):
        for d in range(D):
            tcdm[lay.base_a + i * D + d] = A[i][d]
    for d in range(D):
        for j in range(N):
            tcdm[lay.base_b + d * N + j] = B[d][j]
    vrf = [0] * (lay.n_locs - lay.T)
    vb = lay.T  # vrf list is indexed by loc - T

    seq = 0
    issued = 0
    stalled = False
    pending_store = None
    lane_stale = [None] * L  # (a, b, c, dest loc) last latched by each lane
    load_stale = None  # (packed, parity)
    store_stale = None  # (packed, group)

    f_kind = fault.kind if fault else None
    f_site = fault.site.site_id if fault else None
    f_bit = fault.bit_index if fault else 0
    f_cycle = fault.cycle if fault else -1
    flip = 1 << f_bit

    data_log: List[Dict[str, int]] = []
    hs_log: List[Tuple[int, ...]] = []
    ops = [] if record else None
    events = [] if record else None

    t = 0
    deadlock = False
    while True:
        if detect_deadlock(t, golden):
            deadlock = True
            break
        if stalled:
            # frozen machine: nothing can change any more, run out the watchdog
            frozen_hs = tuple(0 for _ in range(2 * L + 4))
            while not detect_deadlock(t, golden):
                data_log.append({})
                hs_log.append(frozen_hs)
                t += 1
            deadlock = True
            break
        if issued >= total and pending_store is None and t >= PROLOGUE_CYCLES:
            break

        if f_kind is FaultKind.SEU and t == f_cycle:
            if f_site == "tcdm.state":
                w, b = lay.tcdm_bit(f_bit)
                tcdm[w] ^= 1 << b
            elif f_site == "vrf.state":
                hit = lay.vrf_bit(f_bit)
                if hit:
                    vrf[hit[0] - vb] ^= 1 << hit[1]
            elif f_site == "controller.seq":
                seq ^= flip
        set_site = f_site if (f_kind is FaultKind.SET and t == f_cycle) else None

        strobes: Dict[str, int] = {}
        writes_tcdm = []
        writes_vrf = []
        cycle_ops = [] if record else None
        drop = False

        in_window = t >= PROLOGUE_CYCLES and issued < total
        fetch_active = t < PROLOGUE_CYCLES or (in_window and issued + 1 < total)
        win_group = issued // D if in_window else -1

        # ---- VLSU load channel
        if fetch_active:
            u_f = seq if t < PROLOGUE_CYCLES else seq + 1
            srcs = lay.fetch_plan(u_f)
            vals = [tcdm[w] & in_mask if w >= 0 else 0 for w in srcs]
            packed = _pack(vals, in_w)
            if set_site == "vlsu.data":
                packed ^= flip
                vals = _unpack(packed, in_w, S + L)
            if set_site in ("vlsu.valid", "vlsu.ready"):
                drop = True
            else:
                p = u_f % 2
                dsts = [lay.sa(p, s) for s in range(S)] + [lay.sb(p, l) for l in range(L)]
                for loc, v in zip(dsts, vals):
                    writes_vrf.append((loc, v))
                strobes["vlsu.data"] = packed
                load_stale = (packed, p)
                if record:
                    cycle_ops.append(("F", tuple(srcs), tuple(dsts), tuple(vals), packed))
        elif set_site == "vlsu.valid" and load_stale is not None:
            packed, p = load_stale
            vals = _unpack(packed, in_w, S + L)
            dsts = [lay.sa(p, s) for s in range(S)] + [lay.sb(p, l) for l in range(L)]
            for loc, v in zip(dsts, vals):
                writes_vrf.append((loc, v))
            strobes["vlsu.data"] = packed

        # ---- VFU lanes
        lane_valid = [0] * L
        if in_window:
            for lane, _, _, _ in lay.group_lanes[win_group]:
                lane_valid[lane] = 1
            u = seq
            if u < total:
                g, d = divmod(u, D)
                p = u % 2
                gp = g % 2
                bus_vals = [vrf[lay.sa(p, s) - vb] for s in range(S)]
                bus = _pack(bus_vals, in_w)
                if set_site == "vfu.operand_a":
                    bus ^= flip
                    bus_vals = _unpack(bus, in_w, S)
                strobes["vfu.operand_a"] = bus
                op_lanes = [] if record else None
                active = {lane: (i, j, s) for lane, i, j, s in lay.group_lanes[g]}
            else:
                active = {}
            for lane in range(L):
                if not lane_valid[lane]:
                    continue
                pre = f"vfu.lane{lane}."
                if set_site in (pre + "valid", pre + "ready"):
                    drop = True
                    continue
                if lane not in active:
                    # bubble: micro-op does not cover this lane
                    continue
                i, j, s = active[lane]
                a = bus_vals[s]
                b = vrf[lay.sb(p, lane) - vb]
                c_loc = lay.acc(gp, lane) if d > 0 else -1
                c = vrf[c_loc - vb] if d > 0 else 0
                if set_site is not None and set_site.startswith(pre):
                    port = set_site[len(pre):]
                    if port == "operand_a":
                        a ^= flip
                    elif port == "operand_b":
                        b ^= flip
                    elif port == "operand_c":
                        c ^= flip
                r = add_round(c, mul_round(a, b, in_fmt, acc_fmt), acc_fmt)
                if set_site == pre + "result":
                    r ^= flip
                dst = lay.acc(gp, lane)
                writes_vrf.append((dst, r))
                strobes[pre + "operand_a"] = a
                strobes[pre + "operand_b"] = b
                strobes[pre + "operand_c"] = c
                strobes[pre + "result"] = r
                lane_stale[lane] = (a, b, c, dst)
                if record:
                    op_lanes.append((lane, s, lay.sb(p, lane), c_loc, dst, a, b, c, r))
                    events.append(MacEvent(t, lane, (i, j), d, a, b, acc_fmt))
            if record and u < total:
                sa_locs = tuple(lay.sa(p, s) for s in range(S))
                cycle_ops.append(("E", sa_locs, tuple(bus_vals), bus, tuple(op_lanes)))
        if set_site is not None and set_site.startswith("vfu.lane") and set_site.endswith(".valid"):
            lane = int(set_site[len("vfu.lane"):].split(".")[0])
            if not lane_valid[lane] and lane_stale[lane] is not None:
                # spurious valid: the lane latches whatever its ports still hold
                a, b, c, dst = lane_stale[lane]
                r = add_round(c, mul_round(a, b, in_fmt, acc_fmt), acc_fmt)
                writes_vrf.append((dst, r))
                pre = f"vfu.lane{lane}."
                strobes[pre + "operand_a"] = a
                strobes[pre + "operand_b"] = b
                strobes[pre + "operand_c"] = c
                strobes[pre + "result"] = r

        # ---- VLSU store channel
        store_active = pending_store is not None
        if store_active:
            gs = pending_store
            gp = gs % 2
            srcs = [-1] * L
            dsts = [-1] * L
            for lane, i, j, _ in lay.group_lanes[gs]:
                srcs[lane] = lay.acc(gp, lane)
                dsts[lane] = lay.c_word(i, j)
            vals = [vrf[s - vb] if s >= 0 else 0 for s in srcs]
            packed = _pack(vals, acc_w)
            if set_site == "vlsu.store_data":
                packed ^= flip
                vals = _unpack(packed, acc_w, L)
            if set_site in ("vlsu.store_valid", "vlsu.store_ready"):
                drop = True
            else:
                for w, v in zip(dsts, vals):
                    if w >= 0:
                        writes_tcdm.append((w, v))
                strobes["vlsu.store_data"] = packed
                store_stale = (packed, gs)
                if record:
                    cycle_ops.append(("S", tuple(srcs), tuple(dsts), tuple(vals), packed))
        elif set_site == "vlsu.store_valid" and store_stale is not None:
            packed, gs = store_stale
            vals = _unpack(packed, acc_w, L)
            for lane, i, j, _ in lay.group_lanes[gs]:
                writes_tcdm.append((lay.c_word(i, j), vals[lane]))
            strobes["vlsu.store_data"] = packed

        # ---- driven handshake values (what the strobes observe)
        hs = []
        for lane in range(L):
            hs += [lane_valid[lane], 1]
        hs += [1 if fetch_active else 0, 1, 1 if store_active else 0, 1]
        hs_log.append(tuple(hs))
        data_log.append(strobes)
        if record:
            ops.append(cycle_ops)

        # ---- commit
        for loc, v in writes_vrf:
            vrf[loc - vb] = v
        for w, v in writes_tcdm:
            tcdm[w] = v
        pending_store = None
        if in_window:
            seq = (seq + 1) & ((1 << SEQ_BITS) - 1)
            issued += 1
            if issued % D == 0:
                pending_store = issued // D - 1
        if drop:
            stalled = True
        t += 1

    return FullRun(tcdm, t, deadlock, data_log, hs_log, ops, events)


# ---------------------------------------------------------------------------
# golden trace

@dataclass
class GoldenTrace:
    cfg: KernelConfig
    layout: Layout
    A: Matrix
    B: Matrix
    schedule: List[MacEvent]
    output_bits: Matrix
    total_cycles: int
    data_strobes: List[Dict[str, int]]
    handshake_strobes: List[Tuple[int, ...]]
    ops: list
    final_tcdm: List[int]
    touches: Dict[int, List[int]] = field(default_factory=dict)
    history: Dict[int, Tuple[List[int], List[int]]] = field(default_factory=dict)
    registry: List[FaultSite] = field(default_factory=list)

    @property
    def strobe_log(self):
        return list(zip(self.data_strobes, self.handshake_strobes))

    def site(self, site_id: str) -> FaultSite:
        for s in self.registry:
            if s.site_id == site_id:
                return s
        raise KeyError(site_id)

    def value_at(self, loc: int, cycle: int) -> int:
        """Good-machine value of a location at the start of ``cycle``."""
        cycles, values = self.history[loc]
        return values[bisect_right(cycles, cycle) - 1]


def run_golden(cfg: KernelConfig, A: Matrix = None, B: Matrix = None) -> GoldenTrace:
    if A is None or B is None:
        A, B = gen_inputs(cfg)
    lay = Layout(cfg)
    run = simulate_full(lay, A, B, record=True)
    out = [[run.tcdm[lay.c_word(i, j)] for j in range(lay.N)] for i in range(lay.M)]
    schedule = sorted(run.events, key=lambda e: (e.cycle, e.lane))
    trace = GoldenTrace(cfg, lay, A, B, schedule, out, run.cycles, run.data_strobes,
                        run.handshake_strobes, run.ops, run.tcdm,
                        registry=site_registry(lay))
    _index_trace(trace, A, B)
    return trace


def _index_trace(trace: GoldenTrace, A: Matrix, B: Matrix):
    """Per-location touch cycles and value histories for divergence replay."""
    lay = trace.layout
    touches: Dict[int, List[int]] = {}
    # value history: (cycles at which the value became valid, values)
    init = [0] * lay.n_locs
    for i in range(lay.M):
        for d in range(lay.D):
            init[lay.base_a + i * lay.D + d] = A[i][d]
    for d in range(lay.D):
        for j in range(lay.N):
            init[lay.base_b + d * lay.N + j] = B[d][j]
    history = {loc: ([-1], [init[loc]]) for loc in range(lay.n_locs)}

    def touch(loc, t):
        lst = touches.setdefault(loc, [])
        if not lst or lst[-1] != t:
            lst.append(t)

    def wrote(loc, t, v):
        cyc, vals = history[loc]
        cyc.append(t + 1)
        vals.append(v)

    for t, cycle_ops in enumerate(trace.ops):
        for op in cycle_ops:
            if op[0] == "F":
                _, srcs, dsts, vals, _ = op
                for w in srcs:
                    if w >= 0:
                        touch(w, t)
                for loc, v in zip(dsts, vals):
                    touch(loc, t)
                    wrote(loc, t, v)
            elif op[0] == "E":
                _, sa_locs, _, _, lanes = op
                for loc in sa_locs:
                    touch(loc, t)
                for lane, s, sb_loc, c_loc, dst, a, b, c, r in lanes:
                    touch(sb_loc, t)
                    if c_loc >= 0:
                        touch(c_loc, t)
                    touch(dst, t)
                    wrote(dst, t, r)
            else:
                _, srcs, dsts, vals, _ = op
                for loc in srcs:
                    if loc >= 0:
                        touch(loc, t)
                for w, v in zip(dsts, vals):
                    if w >= 0:
                        touch(w, t)
                        wrote(w, t, v)
    trace.touches = touches
    trace.history = history


# ---------------------------------------------------------------------------
# faulty machine

def validate_fault(golden: GoldenTrace, fault: FaultSpec):
    site = fault.site
    if site not in golden.registry:
        raise InvalidFaultError(f"site {site.site_id!r} is not in this kernel's registry")
    if not 0 <= fault.bit_index < site.width:
        raise InvalidFaultError(f"bit {fault.bit_index} outside {site.site_id} width {site.width}")
    if not 0 <= fault.cycle < golden.total_cycles:
        raise InvalidFaultError(f"cycle {fault.cycle} outside the {golden.total_cycles}-cycle window")
    if fault.kind is FaultKind.SEU and site.signal_class is not SignalClass.STATE:
        raise InvalidFaultError("SEU faults target State sites only")
    if fault.kind is FaultKind.SET and site.signal_class is SignalClass.STATE:
        raise InvalidFaultError("SET faults target Data or Handshake sites only")


def _needs_full(fault: FaultSpec) -> bool:
    return (fault.site.signal_class is SignalClass.HANDSHAKE
            or fault.site.site_id == "controller.seq")


def _observed(observe):
    if observe == "all":
        return None
    if observe == "writeout":
        return WRITEOUT_STROBES
    return frozenset(observe)


def run_faulty(golden: GoldenTrace, fault: Optional[FaultSpec], observe="all",
               engine: str = "auto") -> TrialOutcome:
    """Run the faulty machine against the golden trace and classify the run.

    ``observe`` selects the data strobes that are compared: ``"all"`` for the
    module-level campaigns, ``"writeout"`` for the operand-targeted SDC campaign
    (handshake strobes are always compared).  ``engine`` forces ``"full"`` or
    ``"divergent"`` replay; ``"auto"`` picks divergence replay whenever the fault
    cannot disturb control flow.
    """
    if fault is None:
        return _outcome(golden, False, False, None, None, golden.total_cycles)
    validate_fault(golden, fault)
    if fault.site.module in UNMODELED_MODULES:
        return _outcome(golden, False, False, None, None, golden.total_cycles)
    watch = _observed(observe)
    if engine == "full" or (engine == "auto" and _needs_full(fault)):
        return _run_full(golden, fault, watch)
    if _needs_full(fault):
        raise ValueError("divergence replay cannot model control-flow faults")
    return _run_divergent(golden, fault, watch)


def _outcome(golden, hs_mismatch, deadlock, first_div, faulty_c, elapsed, data_mismatch=False):
    if faulty_c is not None and not (hs_mismatch or deadlock):
        sev = severity(golden.output_bits, faulty_c, golden.layout.acc_fmt)
        output_mismatch = sev.K > 0
    else:
        sev, output_mismatch = None, False
    cls, sdc = classify(hs_mismatch, deadlock, data_mismatch, output_mismatch)
    if cls is OutcomeClass.FS:
        return TrialOutcome(cls, False, first_div, frozenset(), 0, None, elapsed)
    if not sdc:
        return TrialOutcome(cls, False, first_div, frozenset(), 0, None, elapsed)
    return TrialOutcome(cls, True, first_div, sev.corrupted, sev.K, sev, elapsed)


def _run_full(golden: GoldenTrace, fault: FaultSpec, watch) -> TrialOutcome:
    lay = golden.layout
    run = simulate_full(lay, golden.A, golden.B, fault)
    hs_mismatch = False
    data_mismatch = False
    first = None
    n_g = len(golden.data_strobes)
    for t in range(run.cycles):
        g_hs = golden.handshake_strobes[t] if t < n_g else None
        g_data = golden.data_strobes[t] if t < n_g else {}
        f_data = run.data_strobes[t]
        if run.handshake_strobes[t] != g_hs:
            hs_mismatch = True
        if f_data != g_data:
            keys = set(f_data) | set(g_data)
            if watch is not None:
                keys &= watch
            if any(f_data.get(k) != g_data.get(k) for k in keys):
                data_mismatch = True
        if first is None and (hs_mismatch or data_mismatch):
            first = t
        if hs_mismatch:
            break
    if run.cycles < n_g:
        hs_mismatch = True
        first = run.cycles if first is None else first
    faulty_c = [[run.tcdm[lay.c_word(i, j)] for j in range(lay.N)] for i in range(lay.M)]
    return _outcome(golden, hs_mismatch, run.deadlock, first, faulty_c, run.cycles, data_mismatch)


def _run_divergent(golden: GoldenTrace, fault: FaultSpec, watch) -> TrialOutcome:
    """Replay only the good-machine operations that read diverged locations."""
    lay = golden.layout
    in_fmt, acc_fmt = lay.in_fmt, lay.acc_fmt
    in_w, acc_w, in_mask = lay.in_w, lay.acc_w, lay.in_mask
    S, L = lay.S, lay.L
    ops = golden.ops
    touches = golden.touches
    n_cycles = golden.total_cycles
    site = fault.site.site_id
    flip = 1 << fault.bit_index
    t0 = fault.cycle

    diverged: Dict[int, int] = {}
    set_site = None
    if fault.kind is FaultKind.SEU:
        if site == "tcdm.state":
            loc, b = lay.tcdm_bit(fault.bit_index)
        else:
            hit = lay.vrf_bit(fault.bit_index)
            if hit is None:
                return _outcome(golden, False, False, None, None, n_cycles)
            loc, b = hit
        diverged[loc] = golden.value_at(loc, t0) ^ (1 << b)
    else:
        set_site = site

    watch_all = watch is None
    data_mismatch = False
    first = None

    def mismatch(site_id, t):
        nonlocal data_mismatch, first
        if watch_all or site_id in watch:
            data_mismatch = True
            if first is None:
                first = t

    def next_cycle(after):
        best = n_cycles
        for loc in diverged:
            lst = touches.get(loc)
            if lst:
                k = bisect_left(lst, after)
                if k < len(lst) and lst[k] < best:
                    best = lst[k]
        return best

    t = t0
    while t < n_cycles:
        cycle_set = set_site if t == t0 else None
        writes = []
        for op in ops[t]:
            kind = op[0]
            if kind == "F":
                _, srcs, dsts, vals, packed = op
                hit = cycle_set == "vlsu.data"
                if not hit:
                    for w in srcs:
                        if w in diverged:
                            hit = True
                            break
                if hit:
                    new = [(diverged[w] if w in diverged else golden.final_tcdm[w]) & in_mask
                           if w >= 0 else 0 for w in srcs]
                    new_packed = _pack(new, in_w)
                    if cycle_set == "vlsu.data":
                        new_packed ^= flip
                        new = _unpack(new_packed, in_w, S + L)
                    if new_packed != packed:
                        mismatch("vlsu.data", t)
                    writes.extend(zip(dsts, new, vals))
                else:
                    writes.extend((loc, v, v) for loc, v in zip(dsts, vals))
            elif kind == "E":
                _, sa_locs, bus_vals, bus, lanes = op
                new_bus = bus_vals
                if cycle_set == "vfu.operand_a" or any(l in diverged for l in sa_locs):
                    new_bus = [diverged.get(l, v) for l, v in zip(sa_locs, bus_vals)]
                    packed = _pack(new_bus, in_w)
                    if cycle_set == "vfu.operand_a":
                        packed ^= flip
                        new_bus = _unpack(packed, in_w, S)
                    if packed != bus:
                        mismatch("vfu.operand_a", t)
                for lane, s, sb_loc, c_loc, dst, a, b, c, r in lanes:
                    port = None
                    if cycle_set is not None:
                        pre = f"vfu.lane{lane}."
                        if cycle_set.startswith(pre):
                            port = cycle_set[len(pre):]
                    fa = new_bus[s]
                    fb = diverged.get(sb_loc, b)
                    fc = diverged.get(c_loc, c) if c_loc >= 0 else 0
                    if fa == a and fb == b and fc == c and port is None:
                        writes.append((dst, r, r))
                        continue
                    if port == "operand_a":
                        fa ^= flip
                    elif port == "operand_b":
                        fb ^= flip
                    elif port == "operand_c":
                        fc ^= flip
                    if fa == a and fb == b and fc == c:
                        fr = r
                    else:
                        fr = add_round(fc, mul_round(fa, fb, in_fmt, acc_fmt), acc_fmt)
                    if port == "result":
                        fr ^= flip
                    pre = f"vfu.lane{lane}."
                    if fa != a:
                        mismatch(pre + "operand_a", t)
                    if fb != b:
                        mismatch(pre + "operand_b", t)
                    if fc != c:
                        mismatch(pre + "operand_c", t)
                    if fr != r:
                        mismatch(pre + "result", t)
                    writes.append((dst, fr, r))
            else:
                _, srcs, dsts, vals, packed = op
                hit = cycle_set == "vlsu.store_data" or any(s_ in diverged for s_ in srcs if s_ >= 0)
                if hit:
                    new = [diverged.get(s_, v) if s_ >= 0 else 0 for s_, v in zip(srcs, vals)]
                    new_packed = _pack(new, acc_w)
                    if cycle_set == "vlsu.store_data":
                        new_packed ^= flip
                        new = _unpack(new_packed, acc_w, L)
                    if new_packed != packed:
                        mismatch("vlsu.store_data", t)
                    writes.extend((w, v, gv) for w, v, gv in zip(dsts, new, vals) if w >= 0)
                else:
                    writes.extend((w, v, v) for w, v in zip(dsts, vals) if w >= 0)
        for loc, v, gv in writes:
            if v == gv:
                diverged.pop(loc, None)
            else:
                diverged[loc] = v
        if not diverged:
            break
        t = next_cycle(t + 1)

    faulty_c = [row[:] for row in golden.output_bits]
    for loc, v in diverged.items():
        if lay.base_c <= loc < lay.T:
            i, j = lay.out_coord(loc)
            faulty_c[i][j] = v
    return _outcome(golden, False, False, first, faulty_c, n_cycles, data_mismatch)
