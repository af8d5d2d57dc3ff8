"""Transient-fault injection campaigns on a vector matrix-multiply datapath."""

from .fpcodec import BP16, FP8, FP16, FP32, FieldKind, FloatFormat, decode, encode, get_format
from .kernel import KernelConfig, KernelKind, default_suite, gen_inputs, reference_matmul
from .machine import (
    FaultKind,
    FaultSite,
    FaultSpec,
    Module,
    OutcomeClass,
    SignalClass,
    TrialOutcome,
    classify,
    detect_deadlock,
    run_faulty,
    run_golden,
    site_registry,
)
from .severity import SeverityRecord, severity

__version__ = "0.1.0"
