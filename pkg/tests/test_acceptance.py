"""Acceptance criteria, each at its stated tolerance.

Every test prints one ``[PASS]`` / ``[FAIL]`` line; the lines are repeated in
the pytest terminal summary.  The distributional checks (5 to 7) are repeated
at 5,000 trials per field when they fail at the default 1,000.
"""

import itertools
import math
import os
import random
import time

import pytest

from acceptance_log import verdict
from oracles import TUPLES, oracle_matmul, oracle_rmse
from vecfi.campaign import records_to_csv, run_module_suite, run_sdc_suite
from vecfi.fpcodec import BP16, FP8, FP16, FP32, decode, decode_value, encode
from vecfi.kernel import DEFAULT_SEED, KernelConfig, KernelKind, gen_inputs
from vecfi.machine import OutcomeClass, classify, run_faulty, run_golden
from vecfi.report import aggregate, emit
from vecfi.severity import severity

RERUN_TRIALS = 5000
_suites = {}


def suite(trials=1000, workers=1):
    key = (trials, workers)
    if key not in _suites:
        _suites[key] = run_sdc_suite(trials=trials, campaign_seed=DEFAULT_SEED, workers=workers)
    return _suites[key]


def pooled(records):
    """Per-workload statistics pooled over the three fields."""
    return {(r.precision, r.kernel): r
            for r in aggregate(records, lambda t: (t.precision, t.kernel, "*", t.fault_kind))}


def by_field(records):
    return {(r.precision, r.kernel, r.target): r for r in aggregate(records)}


def with_rerun(number, check, describe):
    ok, info = check(suite())
    if ok:
        verdict(number, True, describe(info) + " (1,000 trials/field)")
        return True
    verdict(number, False, describe(info) + " (1,000 trials/field), rerunning at 5,000")
    ok, info = check(suite(RERUN_TRIALS))
    verdict(number, ok, describe(info) + " (5,000 trials/field)")
    return ok


def test_criterion_01_codec_round_trip():
    t0 = time.perf_counter()
    bad = 0
    for fmt in (FP8, FP16, BP16):
        for b in range(1 << fmt.total_bits):
            v, cls = decode(b, fmt)
            expect = fmt.canonical_nan if cls == "nan" else b
            bad += encode(v, fmt) != expect
    elapsed = time.perf_counter() - t0
    ok = bad == 0 and elapsed < 1.0
    verdict(1, ok, f"{bad} round-trip failures over FP8/FP16/BP16 in {elapsed:.3f} s (limit 1 s)")
    assert ok


def test_criterion_02_golden_oracle():
    rng = random.Random(2024)
    workloads = [(FP32, KernelKind.MATMUL), (FP16, KernelKind.MATMUL), (BP16, KernelKind.MATMUL),
                 (FP8, KernelKind.MATMUL), (FP16, KernelKind.WIDENING), (FP8, KernelKind.WIDENING)]
    cases, mismatches, golden_time = 0, 0, 0.0
    t0 = time.perf_counter()
    for prec, kind in workloads:
        for _ in range(50):
            cfg = KernelConfig(kind, prec, (rng.randint(1, 12), rng.randint(1, 12), rng.randint(1, 12)),
                               rng.choice([1, 2, 4, 8]), rng.getrandbits(32))
            t = time.perf_counter()
            out = run_golden(cfg).output_bits
            golden_time += time.perf_counter() - t
            A, B = gen_inputs(cfg)
            mismatches += out != oracle_matmul(A, B, TUPLES[prec.name], TUPLES[cfg.acc_fmt.name])
            cases += 1
    total = time.perf_counter() - t0
    ok = cases == 300 and mismatches == 0 and golden_time < 10.0
    verdict(2, ok, f"{mismatches}/{cases} mismatches; golden runs {golden_time:.2f} s "
                   f"(limit 10 s), {total:.2f} s including the rational oracle")
    assert ok


def test_criterion_03_severity_oracle():
    rng = random.Random(3)
    worst = 0.0
    for _ in range(1000):
        fmt = rng.choice([FP32, FP16, BP16, FP8])
        m, n = rng.randint(1, 8), rng.randint(1, 8)
        g = [[rng.getrandbits(fmt.total_bits) for _ in range(n)] for _ in range(m)]
        f = [[x if rng.random() < 0.5 else rng.getrandbits(fmt.total_bits) for x in row] for row in g]
        pairs = [(decode_value(a, fmt), decode_value(b, fmt))
                 for ga, fa in zip(g, f) for a, b in zip(ga, fa) if a != b]
        ref = oracle_rmse([p[0] for p in pairs], [p[1] for p in pairs])
        got = severity(g, f, fmt).rmse
        if ref is None or got is None:
            worst = max(worst, 0.0 if ref is got else math.inf)
        else:
            worst = max(worst, abs(got - ref) / math.ulp(ref))
    ok = worst <= 1.0
    verdict(3, ok, f"max deviation {worst:.3f} ulp over 1,000 matrix pairs (limit 1 ulp)")
    assert ok


def test_criterion_04_no_fs():
    recs = suite()
    fs = sum(r.cls == "FS" for r in recs)
    ok = len(recs) == 18_000 and fs == 0
    verdict(4, ok, f"FS = {fs} over {len(recs)} operand-targeted trials")
    assert ok


def test_criterion_05_exponent_dominance():
    def check(recs):
        f = by_field(recs)
        rows = []
        for prec, kind in sorted({(p, k) for p, k, _ in f}):
            e, m = f[(prec, kind, "exponent")].rmse_mean, f[(prec, kind, "mantissa")].rmse_mean
            rows.append((f"{prec} {kind}", e, m, e is not None and m is not None and e > m))
        return len(rows) == 6 and all(r[3] for r in rows), rows

    def describe(rows):
        return "; ".join(f"{n}: exp {e:.3g} > man {m:.3g}" if ok else f"{n}: exp {e} vs man {m} VIOLATED"
                         for n, e, m, ok in rows)

    assert with_rerun(5, check, describe)


def test_criterion_06_precision_ordering():
    def check(recs):
        p = pooled(recs)
        fp8, fp16, fp32 = (p[(x, "MatMul")].rmse_mean for x in ("FP8", "FP16", "FP32"))
        worst = max((r for r in recs if r.rmse is not None), key=lambda r: r.rmse)
        order_ok = fp8 < fp16 < fp32
        outlier_ok = worst.precision in ("FP32", "BP16")
        return order_ok and outlier_ok, (fp8, fp16, fp32, order_ok, worst, outlier_ok)

    def describe(info):
        fp8, fp16, fp32, order_ok, worst, outlier_ok = info
        return (f"mean RMSE FP8 {fp8:.4g} < FP16 {fp16:.4g} < FP32 {fp32:.4g}: {'holds' if order_ok else 'VIOLATED'}; "
                f"max outlier {worst.rmse:.4g} in {worst.precision} {worst.kernel}: "
                f"{'holds' if outlier_ok else 'VIOLATED'}")

    assert with_rerun(6, check, describe)


def test_criterion_07_widening_benefit():
    def check(recs):
        p = pooled(recs)
        mm16, w16 = p[("FP16", "MatMul")], p[("FP16", "WideningMatMul")]
        mm8, w8 = p[("FP8", "MatMul")], p[("FP8", "WideningMatMul")]
        gain16 = (mm16.rmse_mean - w16.rmse_mean) / mm16.rmse_mean
        gain8 = (mm8.rmse_mean - w8.rmse_mean) / mm8.rmse_mean
        k_ok = w16.avg_K < mm16.avg_K
        rmse_ok = w16.rmse_mean < mm16.rmse_mean
        gain_ok = gain8 < gain16
        return k_ok and rmse_ok and gain_ok, (w16, mm16, k_ok, rmse_ok, gain8, gain16, gain_ok)

    def describe(info):
        w16, mm16, k_ok, rmse_ok, gain8, gain16, gain_ok = info
        tag = lambda ok: "holds" if ok else "VIOLATED"
        return (f"FP16 avg_K widening {w16.avg_K:.3f} < matmul {mm16.avg_K:.3f}: {tag(k_ok)}; "
                f"FP16 RMSE widening {w16.rmse_mean:.4g} < matmul {mm16.rmse_mean:.4g}: {tag(rmse_ok)}; "
                f"relative gain FP8 {gain8:.3f} < FP16 {gain16:.3f}: {tag(gain_ok)}")

    assert with_rerun(7, check, describe)


def test_criterion_08_classification():
    combos_ok = True
    for hs, dl, dm, om in itertools.product([False, True], repeat=4):
        cls, sdc = classify(hs, dl, dm, om)
        want = (OutcomeClass.FS, False) if hs or dl else \
            (OutcomeClass.FD, om) if dm or om else (OutcomeClass.MASKED, False)
        combos_ok &= (cls, sdc) == want
    rng = random.Random(8)
    null_masked = 0
    for _ in range(100):
        prec = rng.choice([FP32, FP16, BP16, FP8])
        kind = KernelKind.WIDENING if prec in (FP16, FP8) and rng.random() < 0.5 else KernelKind.MATMUL
        cfg = KernelConfig(kind, prec, (rng.randint(1, 8), rng.randint(1, 8), rng.randint(1, 8)),
                           rng.choice([1, 4, 8]), rng.getrandbits(32))
        null_masked += run_faulty(run_golden(cfg), None).cls is OutcomeClass.MASKED
    recs = suite()
    sdc_bad = sum(1 for r in recs if r.sdc and r.cls != "FD")
    ok = combos_ok and null_masked == 100 and sdc_bad == 0
    verdict(8, ok, f"16/16 precedence combos {'correct' if combos_ok else 'WRONG'}; "
                   f"{null_masked}/100 null runs Masked; {sdc_bad} SDC records not FD")
    assert ok


def test_criterion_09_parallel_determinism():
    many = max(2, os.cpu_count() or 1)
    one = suite(workers=1)
    par = suite(workers=many)
    files_one = (records_to_csv(one), emit(aggregate(one), "csv"), emit(aggregate(one), "json"))
    files_par = (records_to_csv(par), emit(aggregate(par), "csv"), emit(aggregate(par), "json"))
    ok = files_one == files_par
    verdict(9, ok, f"per-trial CSV, results CSV and JSON {'byte-identical' if ok else 'DIFFER'} "
                   f"between 1 and {many} workers")
    assert ok


def test_criterion_10_runtime():
    workers = os.cpu_count() or 1
    t0 = time.perf_counter()
    recs = run_sdc_suite(trials=1000, campaign_seed=DEFAULT_SEED + 1, workers=workers)
    mods = run_module_suite(10_000, campaign_seed=DEFAULT_SEED, workers=workers)
    elapsed = time.perf_counter() - t0
    ok = len(recs) == 18_000 and len(mods) == 10_000 and elapsed < 120.0
    verdict(10, ok, f"18,000 SDC + 10,000 module trials in {elapsed:.1f} s on {workers} core(s) (limit 120 s)")
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
