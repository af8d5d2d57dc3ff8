"""MatMul / Widening MatMul workloads and their MAC schedule."""

import csv
import io
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Tuple

import numpy as np

from .fpcodec import FloatFormat, add_round, encode, format_bits, get_format, mul_round, widened

DEFAULT_SEED = 0xC0FFEE
DEFAULT_DIMS = (16, 16, 16)
DEFAULT_LANES = 8
# cycles before the first MAC (operand prefetch) and after the last (final store)
PROLOGUE_CYCLES = 1
EPILOGUE_CYCLES = 1

Matrix = List[List[int]]


class KernelKind(Enum):
    MATMUL = "MatMul"
    WIDENING = "WideningMatMul"

    @classmethod
    def parse(cls, text) -> "KernelKind":
        if isinstance(text, cls):
            return text
        key = str(text).strip().lower().replace("_", "").replace("-", "")
        if key in ("matmul", "mm"):
            return cls.MATMUL
        if key in ("wideningmatmul", "widening", "wmm"):
            return cls.WIDENING
        raise ValueError(f"unknown kernel kind {text!r} (expected MatMul or WideningMatMul)")

    @property
    def short(self) -> str:
        return "matmul" if self is KernelKind.MATMUL else "widening"


@dataclass(frozen=True)
class KernelConfig:
    kind: KernelKind = KernelKind.MATMUL
    precision: FloatFormat = field(default_factory=lambda: get_format("FP32"))
    dims: Tuple[int, int, int] = DEFAULT_DIMS
    lanes: int = DEFAULT_LANES
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        object.__setattr__(self, "kind", KernelKind.parse(self.kind))
        object.__setattr__(self, "precision", get_format(self.precision))
        object.__setattr__(self, "dims", tuple(int(x) for x in self.dims))
        if len(self.dims) != 3 or min(self.dims) < 1:
            raise ValueError(f"dims must be three positive integers, got {self.dims}")
        if self.lanes < 1:
            raise ValueError("lanes must be >= 1")
        if self.kind is KernelKind.WIDENING and self.precision.name not in ("FP16", "FP8"):
            raise ValueError(f"WideningMatMul needs FP16 or FP8 inputs, not {self.precision.name}")

    @property
    def acc_fmt(self) -> FloatFormat:
        if self.kind is KernelKind.WIDENING:
            return widened(self.precision)
        return self.precision

    @property
    def groups(self) -> int:
        m, n, _ = self.dims
        return -(-m * n // self.lanes)

    @property
    def mac_cycles(self) -> int:
        return self.groups * self.dims[2]

    @property
    def label(self) -> str:
        return f"{self.precision.name} {self.kind.value}"

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "precision": self.precision.name,
            "dims": list(self.dims),
            "lanes": self.lanes,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KernelConfig":
        known = {"kind", "precision", "dims", "lanes", "seed"}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown kernel config keys: {sorted(extra)}")
        kw = dict(d)
        if "seed" in kw:
            kw["seed"] = parse_int(kw["seed"])
        return cls(**kw)


def parse_int(value) -> int:
    if isinstance(value, str):
        return int(value, 0)
    return int(value)


def default_suite(dims=DEFAULT_DIMS, lanes=DEFAULT_LANES, seed=DEFAULT_SEED) -> List[KernelConfig]:
    """The six evaluated workloads, in the order they are reported."""
    pairs = [
        ("FP32", KernelKind.MATMUL),
        ("FP16", KernelKind.MATMUL),
        ("BP16", KernelKind.MATMUL),
        ("FP16", KernelKind.WIDENING),
        ("FP8", KernelKind.MATMUL),
        ("FP8", KernelKind.WIDENING),
    ]
    return [KernelConfig(kind, get_format(p), dims, lanes, seed) for p, kind in pairs]


@dataclass(frozen=True)
class MacEvent:
    cycle: int
    lane: int
    out_index: Tuple[int, int]
    step: int
    a_bits: int
    b_bits: int
    acc_fmt: FloatFormat

    @property
    def mac_index(self) -> int:
        return self.cycle - PROLOGUE_CYCLES


def gen_inputs(cfg: KernelConfig) -> Tuple[Matrix, Matrix]:
    """Seeded inputs, uniform in [-1, 1) before rounding to the input format."""
    m, n, d = cfg.dims
    rng = np.random.default_rng(cfg.seed)
    fmt = cfg.precision
    a = rng.uniform(-1.0, 1.0, size=(m, d))
    b = rng.uniform(-1.0, 1.0, size=(d, n))
    return (
        [[encode(float(x), fmt) for x in row] for row in a],
        [[encode(float(x), fmt) for x in row] for row in b],
    )


def lane_assignment(cfg: KernelConfig, group: int) -> List[Tuple[int, int, int]]:
    """``(lane, i, j)`` for the output elements handled by one lane group."""
    m, n, _ = cfg.dims
    out = []
    for lane in range(cfg.lanes):
        k = group * cfg.lanes + lane
        if k >= m * n:
            break
        i, j = divmod(k, n)
        out.append((lane, i, j))
    return out


def build_schedule(cfg: KernelConfig, A: Matrix, B: Matrix) -> List[MacEvent]:
    """Round-robin row-major lane assignment; each group runs its D steps back to back."""
    m, n, depth = cfg.dims
    if len(A) != m or any(len(r) != depth for r in A) or len(B) != depth or any(len(r) != n for r in B):
        raise ValueError("input matrices do not match the configured dims")
    acc_fmt = cfg.acc_fmt
    events = []
    for g in range(cfg.groups):
        assigned = lane_assignment(cfg, g)
        for d in range(depth):
            cycle = PROLOGUE_CYCLES + g * depth + d
            for lane, i, j in assigned:
                events.append(MacEvent(cycle, lane, (i, j), d, A[i][d], B[d][j], acc_fmt))
    return events


def reference_matmul(cfg: KernelConfig, A: Matrix, B: Matrix) -> Matrix:
    """Straight-line rounded recurrence, no machine model involved."""
    m, n, depth = cfg.dims
    in_fmt, acc_fmt = cfg.precision, cfg.acc_fmt
    out = []
    for i in range(m):
        row = []
        for j in range(n):
            acc = 0
            for d in range(depth):
                acc = add_round(acc, mul_round(A[i][d], B[d][j], in_fmt, acc_fmt), acc_fmt)
            row.append(acc)
        out.append(row)
    return out


def matrix_to_csv(matrix: Matrix, fmt: FloatFormat) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in matrix:
        writer.writerow([format_bits(x, fmt) for x in row])
    return buf.getvalue()


def matrix_from_csv(text: str) -> Matrix:
    return [[int(x, 16) for x in row] for row in csv.reader(io.StringIO(text)) if row]


def load_kernel_config(path) -> KernelConfig:
    with open(path) as fh:
        return KernelConfig.from_dict(json.load(fh))
