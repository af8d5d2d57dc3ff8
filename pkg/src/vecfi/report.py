"""Aggregation of trial records into per-group results, tables and scatter plots."""

import csv
import io
import json
import math
from dataclasses import asdict, dataclass
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

from .campaign import TrialRecord
from .fpcodec import FORMATS
from .machine import Module

GROUP_FIELDS = ("precision", "kernel", "target", "fault_kind")
RESULT_COLUMNS = GROUP_FIELDS + (
    "total", "masked", "fs", "fd", "sdc", "avg_K",
    "rmse_mean", "rmse_median", "rmse_max", "nonfinite_trials",
)
SCATTER_COLUMNS = ("label", "precision", "kernel", "target", "avg_K", "rmse_mean")

_PRECISION_ORDER = {name: k for k, name in enumerate(FORMATS)}
_KERNEL_ORDER = {"MatMul": 0, "WideningMatMul": 1}
_TARGET_ORDER = {name: k for k, name in enumerate(
    ["sign", "exponent", "mantissa"] + [m.value for m in Module])}
_KIND_ORDER = {"SET": 0, "SEU": 1}


@dataclass(frozen=True)
class CampaignResult:
    precision: str
    kernel: str
    target: str
    fault_kind: str
    total: int
    masked: int
    fs: int
    fd: int
    sdc: int
    avg_K: Optional[float]
    rmse_mean: Optional[float]
    rmse_median: Optional[float]
    rmse_max: Optional[float]
    nonfinite_trials: int

    @property
    def key(self) -> Tuple[str, str, str, str]:
        return self.precision, self.kernel, self.target, self.fault_kind

    @property
    def label(self) -> str:
        kind = "Widening" if self.kernel == "WideningMatMul" else "MatMul"
        return f"{self.precision} {kind} {self.target}"


def _sort_key(key: Tuple[str, ...]):
    p, k, t, f = key
    return (_PRECISION_ORDER.get(p, 99), p, _KERNEL_ORDER.get(k, 99), k,
            _TARGET_ORDER.get(t, 99), t, _KIND_ORDER.get(f, 99), f)


def default_grouping(r: TrialRecord) -> Tuple[str, str, str, str]:
    return r.precision, r.kernel, r.target, r.fault_kind


def aggregate(records: Iterable[TrialRecord],
              grouping: Callable[[TrialRecord], Sequence[str]] = default_grouping
              ) -> List[CampaignResult]:
    """Fold records into one result per group; independent of record order.

    ``grouping`` maps a record to a ``(precision, kernel, target, fault_kind)``
    tuple; collapse a component by returning ``"*"`` for it.
    """
    groups: Dict[tuple, List[TrialRecord]] = {}
    for r in records:
        groups.setdefault(tuple(grouping(r)), []).append(r)
    out = []
    for key in sorted(groups, key=_sort_key):
        recs = groups[key]
        counts = {"Masked": 0, "FS": 0, "FD": 0}
        for r in recs:
            counts[r.cls] += 1
        sdc = [r for r in recs if r.sdc]
        rmses = sorted(r.rmse for r in sdc if r.rmse is not None)
        out.append(CampaignResult(
            *key,
            total=len(recs),
            masked=counts["Masked"],
            fs=counts["FS"],
            fd=counts["FD"],
            sdc=len(sdc),
            avg_K=sum(r.K for r in sdc) / len(sdc) if sdc else None,
            rmse_mean=math.fsum(rmses) / len(rmses) if rmses else None,
            # lower-middle element for even counts
            rmse_median=rmses[(len(rmses) - 1) // 2] if rmses else None,
            rmse_max=rmses[-1] if rmses else None,
            nonfinite_trials=sum(1 for r in sdc if r.nonfinite_count > 0),
        ))
    return out


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def results_to_csv(results: Iterable[CampaignResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for r in results:
        w.writerow([_fmt(getattr(r, c)) for c in RESULT_COLUMNS])
    return buf.getvalue()


def results_to_json(results: Iterable[CampaignResult]) -> str:
    doc = {"columns": list(RESULT_COLUMNS), "results": [asdict(r) for r in results]}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def scatter_points(results: Iterable[CampaignResult]) -> List[CampaignResult]:
    return [r for r in results if r.avg_K is not None and r.rmse_mean is not None]


def scatter_csv(results: Iterable[CampaignResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SCATTER_COLUMNS)
    for r in scatter_points(results):
        w.writerow([r.label, r.precision, r.kernel, r.target, _fmt(r.avg_K), _fmt(r.rmse_mean)])
    return buf.getvalue()


_COLORS = {
    ("FP32", "MatMul"): "#1f77b4",
    ("FP16", "MatMul"): "#ff7f0e",
    ("BP16", "MatMul"): "#2ca02c",
    ("FP16", "WideningMatMul"): "#d62728",
    ("FP8", "MatMul"): "#9467bd",
    ("FP8", "WideningMatMul"): "#8c564b",
}
_MARKERS = {"sign": "o", "exponent": "^", "mantissa": "s"}


def scatter_svg(results: Iterable[CampaignResult], title: str = "SDC severity") -> str:
    """RMSE against average corrupted outputs, one point per group, as SVG text."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    points = scatter_points(results)
    with matplotlib.rc_context({"svg.hashsalt": "vecfi", "svg.fonttype": "path"}):
        fig, ax = plt.subplots(figsize=(7, 4.5))
        seen = set()
        for r in points:
            series = (r.precision, r.kernel)
            name = f"{r.precision} {'Widening ' if r.kernel == 'WideningMatMul' else ''}MatMul"
            ax.scatter([r.avg_K], [r.rmse_mean], c=_COLORS.get(series, "#7f7f7f"),
                       marker=_MARKERS.get(r.target, "D"), s=40,
                       label=None if series in seen else name)
            seen.add(series)
        if points and min(r.rmse_mean for r in points) > 0:
            ax.set_yscale("log")
        ax.set_xlabel("average number of corrupted outputs")
        ax.set_ylabel("RMSE")
        ax.set_title(title)
        ax.grid(True, which="major", alpha=0.3)
        if seen:
            ax.legend(fontsize=7, loc="best", title="o sign  ^ exponent  s mantissa",
                      title_fontsize=7)
        fig.tight_layout()
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
        plt.close(fig)
    return buf.getvalue()


def emit(results: Sequence[CampaignResult], fmt: str):
    """Serialize results: ``csv`` / ``json`` give text, ``scatter`` gives ``(points_csv, svg)``."""
    results = list(results)
    if fmt == "csv":
        return results_to_csv(results)
    if fmt == "json":
        return results_to_json(results)
    if fmt == "scatter":
        return scatter_csv(results), scatter_svg(results)
    raise ValueError(f"unknown output format {fmt!r} (expected csv, json or scatter)")


def scatter_filename(kernel: str, seed: int) -> str:
    return f"sdc_scatter_{kernel}_{seed}.svg"


def module_shares(results: Iterable[CampaignResult]) -> List[dict]:
    """Per-module share of trials and of manifesting (FS + FD) errors.

    Shares are normalized within each ``(precision, kernel, fault_kind)`` group.
    """
    buckets: Dict[tuple, List[CampaignResult]] = {}
    for r in results:
        buckets.setdefault((r.precision, r.kernel, r.fault_kind), []).append(r)
    rows = []
    for (prec, kern, kind), rs in buckets.items():
        total = sum(r.total for r in rs)
        manifest = sum(r.fs + r.fd for r in rs)
        for r in rs:
            rows.append({
                "precision": prec, "kernel": kern, "fault_kind": kind, "module": r.target,
                "trials": r.total, "masked": r.masked, "fs": r.fs, "fd": r.fd, "sdc": r.sdc,
                "trial_share": r.total / total if total else 0.0,
                "manifest_share": (r.fs + r.fd) / manifest if manifest else 0.0,
                "fd_share_of_manifest": r.fd / (r.fs + r.fd) if (r.fs + r.fd) else 0.0,
            })
    return rows


def shares_to_csv(rows: List[dict]) -> str:
    cols = ("precision", "kernel", "fault_kind", "module", "trials", "masked", "fs", "fd",
            "sdc", "trial_share", "manifest_share", "fd_share_of_manifest")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in cols])
    return buf.getvalue()
