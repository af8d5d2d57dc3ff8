"""Command-line entry point.

Exit codes: 0 success, 2 configuration or usage error, 3 internal invariant violation.
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .campaign import (
    ALL_FIELDS,
    ModuleCampaignConfig,
    default_workers,
    golden_for,
    load_campaign_config,
    module_tallies,
    records_from_csv,
    records_to_csv,
    run_module_suite,
    run_sdc_suite,
    sample_operand_fault,
    trial_json,
    trial_rng,
)
from .fpcodec import FieldKind, decode, field_bounds, get_format
from .kernel import DEFAULT_DIMS, DEFAULT_SEED, KernelConfig, KernelKind, default_suite, parse_int
from .machine import FaultKind, FaultSpec, Module, SignalClass, UnsupportedModuleError, run_faulty
from .report import aggregate, emit, module_shares, scatter_filename, shares_to_csv

log = logging.getLogger("vecfi")


class UsageError(Exception):
    pass


def _dims(text):
    try:
        parts = [int(x) for x in text.lower().replace("x", ",").split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad dims {text!r}, expected MxNxD") from None
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"bad dims {text!r}, expected MxNxD")
    return tuple(parts)


def _add_kernel_flags(p, multi=False):
    nargs = "+" if multi else None
    p.add_argument("--precision", nargs=nargs, help="FP32, FP16, BP16 or FP8")
    p.add_argument("--kernel", nargs=nargs, help="MatMul or WideningMatMul")
    p.add_argument("--dims", type=_dims, help=f"MxNxD (default {'x'.join(map(str, DEFAULT_DIMS))})")
    p.add_argument("--lanes", type=int, help="VFU lanes (default 8)")
    p.add_argument("--seed", type=parse_int,
                   help=f"seed for inputs and fault sampling (default {DEFAULT_SEED:#x})")


def _add_run_flags(p):
    p.add_argument("--config", help="JSON campaign config; flags override its values")
    p.add_argument("--trials", type=int, help="trials per campaign group")
    p.add_argument("--out-dir", default="out", help="output directory (default ./out)")
    p.add_argument("--workers", type=int, default=None,
                   help="worker processes (default: all CPUs; never changes results)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vecfi",
        description="Transient-fault injection on a vector MatMul datapath model.",
        epilog=f"The default seed is {DEFAULT_SEED:#x}; runs never depend on wall-clock time.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("codec", help="decode one bit pattern")
    p.add_argument("pattern", help="hex bit pattern, e.g. 0x3c")
    p.add_argument("fmt", help="FP32, FP16, BP16 or FP8")

    p = sub.add_parser("trial", help="run a single faulty-machine trial, print a JSON record")
    _add_kernel_flags(p)
    p.add_argument("--site", help="site id, e.g. tcdm.state or vfu.lane3.operand_b")
    p.add_argument("--bit", type=int)
    p.add_argument("--cycle", type=int)
    p.add_argument("--field", help="sample an operand fault in this field instead")
    p.add_argument("--trial-index", type=int, default=0)
    p.add_argument("--observe", choices=("all", "writeout"), default=None)

    p = sub.add_parser("sdc", help="operand-targeted SDC campaign over precisions and fields")
    _add_kernel_flags(p, multi=True)
    _add_run_flags(p)
    p.add_argument("--field", nargs="+", help="sign, exponent and/or mantissa (default all)")
    p.add_argument("--flip-accumulator", action="store_true",
                   help="also sample the accumulator input of the MAC")

    p = sub.add_parser("modules", help="module-level SET/SEU campaign")
    _add_kernel_flags(p, multi=True)
    _add_run_flags(p)
    p.add_argument("--fault-kind", nargs="+", help="set and/or seu (default both)")
    p.add_argument("--modules", nargs="+", help="restrict to these modules")
    p.add_argument("--budget", type=int, help="total trials spread over all workloads and kinds")

    p = sub.add_parser("report", help="aggregate a per-trial CSV")
    p.add_argument("input", help="per-trial CSV written by sdc or modules")
    p.add_argument("--out-dir", default="out")
    p.add_argument("--format", choices=("csv", "json", "scatter", "all"), default="all")
    p.add_argument("--seed", type=parse_int, default=DEFAULT_SEED, help="seed tag for file names")
    return parser


# ---------------------------------------------------------------------------

def cmd_codec(args) -> int:
    fmt = get_format(args.fmt)
    try:
        bits = int(args.pattern, 16)
    except ValueError:
        raise UsageError(f"cannot parse bit pattern {args.pattern!r}") from None
    if not 0 <= bits <= fmt.mask:
        raise UsageError(f"{args.pattern} does not fit in {fmt.total_bits} bits")
    value, cls = decode(bits, fmt)
    if cls == "inf":
        text = "+Inf" if value > 0 else "-Inf"
    elif cls == "nan":
        text = "NaN"
    else:
        text = repr(value)
    s_hi, _ = field_bounds(fmt, FieldKind.SIGN)
    e_hi, e_lo = field_bounds(fmt, FieldKind.EXPONENT)
    s = bits >> s_hi
    e = (bits >> e_lo) & ((1 << (e_hi - e_lo + 1)) - 1)
    m = bits & ((1 << fmt.man_bits) - 1)
    print(f"{text} {cls} s={s} e={e:0{fmt.exp_bits}b} m={m:0{fmt.man_bits}b}")
    return 0


def _kernels(args, cfg_doc):
    seed = args.seed if args.seed is not None else None
    kernels = cfg_doc.get("kernels") or default_suite()
    precisions = [get_format(p).name for p in args.precision] if args.precision else None
    kinds = [KernelKind.parse(k) for k in args.kernel] if args.kernel else None
    out = []
    for k in kernels:
        if precisions is not None and k.precision.name not in precisions:
            continue
        if kinds is not None and k.kind not in kinds:
            continue
        out.append(KernelConfig(k.kind, k.precision, args.dims or k.dims,
                                args.lanes or k.lanes, seed if seed is not None else k.seed))
    if not out:
        raise UsageError("no workload matches the requested precision/kernel")
    return out


def _write(out_dir: Path, name: str, text: str):
    path = out_dir / name
    path.write_text(text)
    log.info("wrote %s", path)


def _check_records(records):
    for r in records:
        if r.sdc and r.cls != "FD":
            raise AssertionError(f"trial {r.trial_index}: SDC reported with class {r.cls}")
        if r.cls == "Masked" and (r.sdc or r.K):
            raise AssertionError(f"trial {r.trial_index}: Masked trial carries corruption")


def _scatter_kernel_tag(records) -> str:
    kinds = sorted({r.kernel for r in records})
    if len(kinds) == 1:
        return KernelKind.parse(kinds[0]).short
    return "suite"


def cmd_trial(args) -> int:
    cfg = KernelConfig(
        KernelKind.parse(args.kernel or "MatMul"), get_format(args.precision or "FP32"),
        args.dims or DEFAULT_DIMS, args.lanes or 8,
        args.seed if args.seed is not None else DEFAULT_SEED)
    golden = golden_for(cfg)
    if args.field:
        fault = sample_operand_fault(golden, FieldKind.parse(args.field),
                                     trial_rng(cfg.seed, args.trial_index))
        observe = args.observe or "writeout"
    else:
        if args.site is None or args.bit is None or args.cycle is None:
            raise UsageError("trial needs either --field or all of --site, --bit, --cycle")
        try:
            site = golden.site(args.site)
        except KeyError:
            raise UsageError(f"unknown site {args.site!r}") from None
        kind = FaultKind.SEU if site.signal_class is SignalClass.STATE else FaultKind.SET
        fault = FaultSpec(kind, site, args.bit, args.cycle)
        observe = args.observe or "all"
    outcome = run_faulty(golden, fault, observe=observe)
    print(json.dumps(trial_json(fault, outcome), sort_keys=True))
    return 0


def cmd_sdc(args) -> int:
    doc = load_campaign_config(args.config) if args.config else {}
    kernels = _kernels(args, doc)
    fields = ([FieldKind.parse(f) for f in args.field] if args.field
              else doc.get("fields", list(ALL_FIELDS)))
    trials = args.trials if args.trials is not None else doc.get("trials", 1000)
    seed = args.seed if args.seed is not None else doc.get("campaign_seed", DEFAULT_SEED)
    flip_acc = args.flip_accumulator or doc.get("flip_accumulator", False)
    workers = args.workers or default_workers()
    if trials < 1:
        raise UsageError("--trials must be >= 1")
    log.info("SDC campaign: %d workloads x %d fields x %d trials", len(kernels), len(fields), trials)
    records = run_sdc_suite(kernels, fields, trials, seed, workers, flip_acc)
    _check_records(records)
    results = aggregate(records)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write(out_dir, "sdc_trials.csv", records_to_csv(records))
    _write(out_dir, "sdc_results.csv", emit(results, "csv"))
    _write(out_dir, "sdc_results.json", emit(results, "json"))
    points, svg = emit(results, "scatter")
    _write(out_dir, "sdc_scatter_points.csv", points)
    _write(out_dir, scatter_filename(_scatter_kernel_tag(records), seed), svg)
    for r in results:
        print(f"{r.label:32s} sdc={r.sdc:5d}/{r.total:<5d} fs={r.fs} "
              f"avg_K={r.avg_K if r.avg_K is not None else float('nan'):.3f} "
              f"rmse_mean={r.rmse_mean if r.rmse_mean is not None else float('nan'):.4g}")
    return 0


def cmd_modules(args) -> int:
    doc = load_campaign_config(args.config) if args.config else {}
    kernels = _kernels(args, doc)
    if args.fault_kind:
        kinds = [FaultKind.parse(k) for k in args.fault_kind]
    elif "fault_kind" in doc:
        kinds = [doc["fault_kind"]]
    else:
        kinds = [FaultKind.SET, FaultKind.SEU]
    modules = [Module.parse(m) for m in args.modules] if args.modules else doc.get("modules")
    seed = args.seed if args.seed is not None else doc.get("campaign_seed", DEFAULT_SEED)
    workers = args.workers or default_workers()
    if modules is not None:
        # validates the module list before any work starts
        ModuleCampaignConfig(kernels[0], kinds[0], 1, seed, frozenset(modules))
    trials = args.trials if args.trials is not None else doc.get("trials")
    budget = args.budget if args.budget is not None else doc.get("budget")
    if budget is None:
        budget = (trials or 1000) * len(kernels) * len(kinds)
    if budget < 1:
        raise UsageError("trial budget must be >= 1")
    records = run_module_suite(budget, kernels, kinds, seed, workers,
                               frozenset(modules) if modules else None)
    _check_records(records)
    results = aggregate(records)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write(out_dir, "module_trials.csv", records_to_csv(records))
    _write(out_dir, "module_results.csv", emit(results, "csv"))
    _write(out_dir, "module_results.json", emit(results, "json"))
    _write(out_dir, "module_shares.csv", shares_to_csv(module_shares(results)))
    for kind in kinds:
        tallies = module_tallies(r for r in records if r.fault_kind == kind.value)
        print(f"{kind.value}:")
        for mod, t in sorted(tallies.items()):
            print(f"  {mod:10s} Masked={t['Masked']:6d} FS={t['FS']:5d} FD={t['FD']:6d} SDC={t['SDC']:6d}")
    return 0


def cmd_report(args) -> int:
    try:
        text = Path(args.input).read_text()
    except OSError as exc:
        raise UsageError(str(exc)) from None
    records = records_from_csv(text)
    results = aggregate(records)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = Path(args.input).stem.replace("_trials", "")
    if args.format in ("csv", "all"):
        _write(out_dir, f"{stem}_results.csv", emit(results, "csv"))
    if args.format in ("json", "all"):
        _write(out_dir, f"{stem}_results.json", emit(results, "json"))
    if args.format in ("scatter", "all"):
        points, svg = emit(results, "scatter")
        _write(out_dir, f"{stem}_scatter_points.csv", points)
        _write(out_dir, scatter_filename(_scatter_kernel_tag(records), args.seed), svg)
    return 0


COMMANDS = {"codec": cmd_codec, "trial": cmd_trial, "sdc": cmd_sdc,
            "modules": cmd_modules, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, UnsupportedModuleError, ValueError, KeyError) as exc:
        print(f"vecfi {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except AssertionError as exc:
        print(f"vecfi {args.command}: invariant violated: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
