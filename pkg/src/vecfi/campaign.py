"""Fault sampling and trial execution for the operand SDC and module-level campaigns."""

import csv
import io
import json
import os
from bisect import bisect_right
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import accumulate
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence

import numpy as np

from .fpcodec import FieldKind, field_bits
from .kernel import DEFAULT_SEED, KernelConfig, default_suite, parse_int
from .machine import (
    UNMODELED_MODULES,
    FaultKind,
    FaultSpec,
    GoldenTrace,
    Module,
    OutcomeClass,
    SignalClass,
    TrialOutcome,
    UnsupportedModuleError,
    run_faulty,
    run_golden,
)
from .severity import SeverityRecord, severity  # noqa: F401  (re-exported)

ALL_FIELDS = (FieldKind.SIGN, FieldKind.EXPONENT, FieldKind.MANTISSA)
DEFAULT_TRIALS = 1000
MODELED_MODULES = tuple(m for m in Module if m not in UNMODELED_MODULES)

CSV_COLUMNS = (
    "precision", "kernel", "target", "fault_kind",
    "trial_index", "site_id", "bit", "cycle", "class", "sdc", "K", "rmse", "nonfinite_count",
)


@dataclass(frozen=True)
class SdcCampaignConfig:
    kernel: KernelConfig
    field: FieldKind
    trials: int = DEFAULT_TRIALS
    campaign_seed: int = DEFAULT_SEED
    # also let the sampler pick the accumulator input of the MAC
    flip_accumulator: bool = False

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")


@dataclass(frozen=True)
class ModuleCampaignConfig:
    kernel: KernelConfig
    fault_kind: FaultKind
    trials: int = DEFAULT_TRIALS
    campaign_seed: int = DEFAULT_SEED
    modules: Optional[FrozenSet[Module]] = None

    def __post_init__(self):
        object.__setattr__(self, "fault_kind", FaultKind.parse(self.fault_kind))
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.modules is not None:
            mods = frozenset(Module.parse(m) for m in self.modules)
            bad = sorted(m.value for m in mods & UNMODELED_MODULES)
            if bad:
                raise UnsupportedModuleError(
                    f"no behavioural model for {', '.join(bad)}; "
                    f"supported modules: {', '.join(m.value for m in MODELED_MODULES)}")
            object.__setattr__(self, "modules", mods)


@dataclass(frozen=True)
class TrialRecord:
    precision: str
    kernel: str
    target: str
    fault_kind: str
    trial_index: int
    site_id: str
    bit: int
    cycle: int
    cls: str
    sdc: bool
    K: int
    rmse: Optional[float]
    nonfinite_count: int
    first_divergence_cycle: Optional[int] = None

    def row(self) -> list:
        return [
            self.precision, self.kernel, self.target, self.fault_kind,
            self.trial_index, self.site_id, self.bit, self.cycle, self.cls,
            int(self.sdc), self.K, "" if self.rmse is None else repr(self.rmse),
            self.nonfinite_count,
        ]

    @classmethod
    def from_row(cls, row: Dict[str, str]) -> "TrialRecord":
        return cls(
            row["precision"], row["kernel"], row["target"], row["fault_kind"],
            int(row["trial_index"]), row["site_id"], int(row["bit"]), int(row["cycle"]),
            row["class"], row["sdc"] == "1", int(row["K"]),
            float(row["rmse"]) if row["rmse"] else None, int(row["nonfinite_count"]),
        )


def trial_rng(campaign_seed: int, trial_index: int) -> np.random.Generator:
    """Per-trial generator derived from (seed, index) only, so order never matters."""
    return np.random.default_rng(np.random.SeedSequence([campaign_seed & (2**64 - 1), trial_index]))


def trial_json(fault: FaultSpec, outcome: TrialOutcome) -> dict:
    return {
        "fault": fault.to_dict(),
        "class": outcome.cls.value,
        "sdc": outcome.sdc,
        "first_divergence_cycle": outcome.first_divergence_cycle,
        "K": outcome.K,
        "rmse": outcome.rmse,
    }


# ---------------------------------------------------------------------------
# operand-targeted SDC campaign

def sample_operand_fault(golden: GoldenTrace, field: FieldKind, rng: np.random.Generator,
                         flip_accumulator: bool = False) -> FaultSpec:
    """One bit of one FPU input operand at one MAC event, all uniform."""
    lay = golden.layout
    event = golden.schedule[int(rng.integers(len(golden.schedule)))]
    slots = ("a", "b", "c") if flip_accumulator else ("a", "b")
    slot = slots[int(rng.integers(len(slots)))]
    fmt = lay.acc_fmt if slot == "c" else lay.in_fmt
    bits = field_bits(fmt, field)
    bit = bits[int(rng.integers(len(bits)))]
    if slot == "a":
        # operand A is the row element broadcast to every lane on that row
        g = event.mac_index // lay.D
        bus_slot = lay.group_rows[g].index(event.out_index[0])
        site = golden.site("vfu.operand_a")
        bit += bus_slot * lay.in_w
    elif slot == "b":
        site = golden.site(f"vfu.lane{event.lane}.operand_b")
    else:
        site = golden.site(f"vfu.lane{event.lane}.operand_c")
    return FaultSpec(FaultKind.SET, site, bit, event.cycle)


def _record(cfg: KernelConfig, target: str, kind: str, index: int, fault: FaultSpec,
            out: TrialOutcome) -> TrialRecord:
    return TrialRecord(
        cfg.precision.name, cfg.kind.value, target, kind, index, fault.site.site_id,
        fault.bit_index, fault.cycle, out.cls.value, out.sdc, out.K, out.rmse,
        out.nonfinite_count, out.first_divergence_cycle,
    )


_GOLDEN: Dict[KernelConfig, GoldenTrace] = {}


def golden_for(cfg: KernelConfig) -> GoldenTrace:
    trace = _GOLDEN.get(cfg)
    if trace is None:
        trace = _GOLDEN[cfg] = run_golden(cfg)
    return trace


def _sdc_trials(cfg: SdcCampaignConfig, start: int, stop: int) -> List[TrialRecord]:
    golden = golden_for(cfg.kernel)
    out = []
    for idx in range(start, stop):
        fault = sample_operand_fault(golden, cfg.field, trial_rng(cfg.campaign_seed, idx),
                                     cfg.flip_accumulator)
        res = run_faulty(golden, fault, observe="writeout")
        out.append(_record(cfg.kernel, cfg.field.value, "SET", idx, fault, res))
    return out


# ---------------------------------------------------------------------------
# module-level campaign

def eligible_sites(golden: GoldenTrace, kind: FaultKind, modules=None):
    mods = set(MODELED_MODULES) if modules is None else set(modules)
    if mods & UNMODELED_MODULES:
        raise UnsupportedModuleError("campaigns cannot target blocks without a behavioural model")
    if kind is FaultKind.SEU:
        classes = {SignalClass.STATE}
    else:
        classes = {SignalClass.DATA, SignalClass.HANDSHAKE}
    sites = [s for s in golden.registry if s.module in mods and s.signal_class in classes]
    if not sites:
        raise UnsupportedModuleError(
            f"no {kind.value}-eligible sites in modules {sorted(m.value for m in mods)}")
    return sites


def sample_module_fault(golden: GoldenTrace, sites, cumulative, rng) -> FaultSpec:
    """Uniform over every eligible bit (modules weighted by bit count) and every cycle."""
    pos = int(rng.integers(cumulative[-1]))
    k = bisect_right(cumulative, pos)
    site = sites[k]
    bit = pos - (cumulative[k - 1] if k else 0)
    cycle = int(rng.integers(golden.total_cycles))
    kind = FaultKind.SEU if site.signal_class is SignalClass.STATE else FaultKind.SET
    return FaultSpec(kind, site, bit, cycle)


def _module_trials(cfg: ModuleCampaignConfig, start: int, stop: int) -> List[TrialRecord]:
    golden = golden_for(cfg.kernel)
    sites = eligible_sites(golden, cfg.fault_kind, cfg.modules)
    cumulative = list(accumulate(s.width for s in sites))
    out = []
    for idx in range(start, stop):
        fault = sample_module_fault(golden, sites, cumulative, trial_rng(cfg.campaign_seed, idx))
        res = run_faulty(golden, fault, observe="all")
        out.append(_record(cfg.kernel, fault.site.module.value, cfg.fault_kind.value, idx, fault, res))
    return out


# ---------------------------------------------------------------------------
# execution

def _run_chunk(args):
    kind, cfg, start, stop = args
    if kind == "sdc":
        return _sdc_trials(cfg, start, stop)
    return _module_trials(cfg, start, stop)


def default_workers() -> int:
    return os.cpu_count() or 1


def _execute(jobs: Sequence[tuple], workers: int) -> List[TrialRecord]:
    """Run ``(kind, cfg)`` jobs; output is ordered by job then trial index."""
    chunks = []
    for job_id, (kind, cfg) in enumerate(jobs):
        step = max(50, cfg.trials // max(1, workers * 4))
        for start in range(0, cfg.trials, step):
            chunks.append((job_id, (kind, cfg, start, min(cfg.trials, start + step))))
    if workers <= 1 or len(chunks) == 1:
        results = [(job_id, _run_chunk(c)) for job_id, c in chunks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = pool.map(_run_chunk, [c for _, c in chunks])
            results = list(zip((job_id for job_id, _ in chunks), parts))
    records = []
    for job_id, recs in results:
        records.extend((job_id, r.trial_index, r) for r in recs)
    records.sort(key=lambda x: (x[0], x[1]))
    return [r for _, _, r in records]


def run_sdc_campaign(cfg: SdcCampaignConfig, workers: int = 1) -> List[TrialRecord]:
    return _execute([("sdc", cfg)], workers)


def run_module_campaign(cfg: ModuleCampaignConfig, workers: int = 1) -> List[TrialRecord]:
    return _execute([("module", cfg)], workers)


def run_sdc_suite(kernels: Iterable[KernelConfig] = None, fields=ALL_FIELDS,
                  trials: int = DEFAULT_TRIALS, campaign_seed: int = DEFAULT_SEED,
                  workers: int = 1, flip_accumulator: bool = False) -> List[TrialRecord]:
    kernels = default_suite() if kernels is None else list(kernels)
    jobs = [("sdc", SdcCampaignConfig(k, f, trials, campaign_seed, flip_accumulator))
            for k in kernels for f in fields]
    return _execute(jobs, workers)


def split_budget(budget: int, parts: int) -> List[int]:
    base, extra = divmod(budget, parts)
    return [base + (1 if k < extra else 0) for k in range(parts)]


def run_module_suite(budget: int, kernels: Iterable[KernelConfig] = None,
                     kinds=(FaultKind.SET, FaultKind.SEU), campaign_seed: int = DEFAULT_SEED,
                     workers: int = 1, modules=None) -> List[TrialRecord]:
    """Spread ``budget`` trials over every (workload, fault kind) pair."""
    kernels = default_suite() if kernels is None else list(kernels)
    pairs = [(k, kind) for k in kernels for kind in kinds]
    jobs = [("module", ModuleCampaignConfig(k, kind, n, campaign_seed, modules))
            for (k, kind), n in zip(pairs, split_budget(budget, len(pairs))) if n > 0]
    return _execute(jobs, workers)


def module_tallies(records: Iterable[TrialRecord]) -> Dict[str, Dict[str, int]]:
    """Per-module counts of Masked / FS / FD / SDC (SDC is a subset of FD)."""
    out: Dict[str, Dict[str, int]] = {}
    for r in records:
        t = out.setdefault(r.target, {"Masked": 0, "FS": 0, "FD": 0, "SDC": 0})
        t[r.cls] += 1
        if r.sdc:
            t["SDC"] += 1
    return out


# ---------------------------------------------------------------------------
# config files and record I/O

def records_to_csv(records: Iterable[TrialRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in records:
        writer.writerow(r.row())
    return buf.getvalue()


def records_from_csv(text: str) -> List[TrialRecord]:
    return [TrialRecord.from_row(row) for row in csv.DictReader(io.StringIO(text))]


def load_campaign_config(source) -> dict:
    """Read a campaign JSON document (path or dict) into normalized fields.

    Recognized keys: ``kernels`` (list of kernel configs, default: the six-workload
    suite), ``fields``, ``trials``, ``campaign_seed``, ``fault_kind``, ``modules``,
    ``flip_accumulator``, ``budget``.
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source) as fh:
            doc = json.load(fh)
    else:
        doc = dict(source)
    known = {"kernels", "kernel", "fields", "field", "trials", "campaign_seed", "seed",
             "fault_kind", "modules", "flip_accumulator", "budget"}
    extra = set(doc) - known
    if extra:
        raise ValueError(f"unknown campaign config keys: {sorted(extra)}")
    out = {}
    if "kernel" in doc:
        out["kernels"] = [KernelConfig.from_dict(doc["kernel"])]
    if "kernels" in doc:
        out["kernels"] = [KernelConfig.from_dict(k) for k in doc["kernels"]]
    fields = doc.get("fields", [doc["field"]] if "field" in doc else None)
    if fields is not None:
        out["fields"] = [FieldKind.parse(f) for f in fields]
    for key in ("trials", "budget"):
        if key in doc:
            out[key] = int(doc[key])
    seed = doc.get("campaign_seed", doc.get("seed"))
    if seed is not None:
        out["campaign_seed"] = parse_int(seed)
    if "fault_kind" in doc:
        out["fault_kind"] = FaultKind.parse(doc["fault_kind"])
    if "modules" in doc:
        out["modules"] = [Module.parse(m) for m in doc["modules"]]
    if "flip_accumulator" in doc:
        out["flip_accumulator"] = bool(doc["flip_accumulator"])
    return out


__all__ = [
    "SdcCampaignConfig", "ModuleCampaignConfig", "TrialRecord", "OutcomeClass",
    "sample_operand_fault", "sample_module_fault", "run_sdc_campaign", "run_module_campaign",
    "run_sdc_suite", "run_module_suite", "module_tallies", "severity", "trial_rng",
    "records_to_csv", "records_from_csv", "load_campaign_config", "split_budget",
]
