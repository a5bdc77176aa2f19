"""Velocity-profile metrics, signed-rank testing, classification and latency
reports.

Conventions: ``C`` is the positive class; ratios with a zero denominator
are ``None``; the velocity peak index takes the first maximum.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from .errors import InputError, InsufficientDataError

EXACT_MAX_N = 25


@dataclass(frozen=True)
class KinematicMetrics:
    MD: float
    AD: float
    AD_over_MD: float
    v_max: float
    index_vmax: int
    K: int


def kinematic_metrics(segment, rate: float = 15.0) -> KinematicMetrics:
    """Movement duration and acceleration-phase fraction of one segment."""
    values = np.asarray(getattr(segment, "values", segment), dtype=np.float64)
    K = values.size
    if K < 2:
        raise InputError(f"kinematic metrics need K >= 2, got {K}")
    idx = int(np.argmax(values))
    return KinematicMetrics(K / rate, idx / rate, idx / K, float(values[idx]), idx, K)


# -- Wilcoxon signed-rank ---------------------------------------------------------

@dataclass(frozen=True)
class WilcoxonResult:
    W: float
    w_plus: float
    w_minus: float
    p_value: float
    n: int
    method: str

    @property
    def significant_at_0_05(self) -> bool:
        return self.p_value < 0.05

    @property
    def significant_at_0_01(self) -> bool:
        return self.p_value < 0.01


def average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks; tied values share the mean of their positions."""
    order = np.argsort(values, kind="mergesort")
    sorted_vals = values[order]
    ranks = np.empty(values.size)
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _exact_null_counts(doubled_ranks: Sequence[int]) -> List[int]:
    """Number of sign patterns giving each doubled positive-rank sum."""
    total = int(sum(doubled_ranks))
    counts = [0] * (total + 1)
    counts[0] = 1
    reach = 0
    for r in doubled_ranks:
        for s in range(reach, -1, -1):
            if counts[s]:
                counts[s + r] += counts[s]
        reach += r
    return counts


def wilcoxon_signed_rank(x, y=None, exact_max_n: int = EXACT_MAX_N) -> WilcoxonResult:
    """Two-sided signed-rank test of the paired differences ``x - y``.

    Zero differences are dropped and tied magnitudes get average ranks.
    For ``n <= exact_max_n`` the p-value comes from the exact sign-flip
    distribution of the (tied) ranks; above that a normal approximation
    with tie-corrected variance and continuity correction is used.
    ``W`` is ``min(W+, W-)``.
    """
    x = np.asarray(x, dtype=np.float64)
    if y is not None and np.shape(y) != x.shape:
        raise InputError("paired samples must have equal length")
    d = x if y is None else x - np.asarray(y, dtype=np.float64)
    d = d[d != 0]
    n = d.size
    if n < 5:
        raise InsufficientDataError(f"need at least 5 non-zero differences, got {n}")
    ranks = average_ranks(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    total = n * (n + 1) / 2.0
    w_minus = total - w_plus
    W = min(w_plus, w_minus)

    if n <= exact_max_n:
        doubled = [int(round(2 * r)) for r in ranks]
        counts = _exact_null_counts(doubled)
        obs = int(round(2 * w_plus))
        lower = sum(counts[:obs + 1])
        upper = sum(counts[obs:])
        p = min(1.0, 2 * min(lower, upper) / 2 ** n)
        method = "exact"
    else:
        _, tie_counts = np.unique(np.abs(d), return_counts=True)
        var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(tie_counts ** 3 - tie_counts) / 48.0
        diff = w_plus - total / 2.0
        z = (abs(diff) - 0.5) / math.sqrt(var) if var > 0 else 0.0
        p = min(1.0, math.erfc(max(z, 0.0) / math.sqrt(2.0)))
        method = "normal"
    return WilcoxonResult(W, w_plus, w_minus, p, n, method)


def pair_by_subject(values, labels, subjects, reduce=np.median):
    """Per-subject summary of each class, paired across subjects.

    Returns ``(c_values, nc_values, subject_ids)`` for subjects that have
    both classes.
    """
    groups: Dict[object, Dict[str, list]] = defaultdict(lambda: {"C": [], "NC": []})
    for v, lab, subj in zip(values, labels, subjects):
        groups[subj][lab].append(v)
    ids = [s for s in sorted(groups, key=str) if groups[s]["C"] and groups[s]["NC"]]
    c = np.array([reduce(groups[s]["C"]) for s in ids], dtype=np.float64)
    nc = np.array([reduce(groups[s]["NC"]) for s in ids], dtype=np.float64)
    return c, nc, ids


def pair_by_trial(values, labels, subjects=None):
    """Pair the k-th C trial with the k-th NC trial within each subject."""
    if subjects is None:
        subjects = [0] * len(values)
    groups: Dict[object, Dict[str, list]] = defaultdict(lambda: {"C": [], "NC": []})
    for v, lab, subj in zip(values, labels, subjects):
        groups[subj][lab].append(v)
    c, nc = [], []
    for s in sorted(groups, key=str):
        k = min(len(groups[s]["C"]), len(groups[s]["NC"]))
        c.extend(groups[s]["C"][:k])
        nc.extend(groups[s]["NC"][:k])
    return np.array(c, dtype=np.float64), np.array(nc, dtype=np.float64)


# -- classification -----------------------------------------------------------------

@dataclass(frozen=True)
class ClassificationReport:
    TP: int
    FP: int
    TN: int
    FN: int
    accuracy: Optional[float]
    precision: Optional[float]
    recall: Optional[float]
    f1: Optional[float]
    support_c: int
    support_nc: int

    @property
    def n(self) -> int:
        return self.TP + self.FP + self.TN + self.FN

    def confusion(self) -> np.ndarray:
        """Rows = true (C, NC), columns = predicted (C, NC)."""
        return np.array([[self.TP, self.FN], [self.FP, self.TN]])


def _ratio(num, den):
    return num / den if den else None


def f1_score(precision: Optional[float], recall: Optional[float]) -> Optional[float]:
    if precision is None or recall is None or precision + recall == 0:
        return None
    return 2 * precision * recall / (precision + recall)


def classification_report(predictions: Sequence[str], ground_truth: Sequence[str]) -> ClassificationReport:
    if len(predictions) != len(ground_truth):
        raise InputError(f"{len(predictions)} predictions vs {len(ground_truth)} labels")
    tp = fp = tn = fn = 0
    for p, t in zip(predictions, ground_truth):
        if p not in ("C", "NC") or t not in ("C", "NC"):
            raise InputError(f"labels must be C or NC, got {p!r}/{t!r}")
        if t == "C":
            if p == "C":
                tp += 1
            else:
                fn += 1
        elif p == "C":
            fp += 1
        else:
            tn += 1
    n = tp + fp + tn + fn
    precision = _ratio(tp, tp + fp)
    recall = _ratio(tp, tp + fn)
    return ClassificationReport(tp, fp, tn, fn, _ratio(tp + tn, n), precision, recall,
                                f1_score(precision, recall), tp + fn, fp + tn)


# -- latency ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LatencyStats:
    median: float
    median_absolute_deviation: float
    n: int


def latency_stats(times_ms) -> LatencyStats:
    t = np.asarray(list(times_ms), dtype=np.float64)
    if t.size == 0:
        raise InputError("latency statistics need at least one measurement")
    med = float(np.median(t))
    return LatencyStats(med, float(np.median(np.abs(t - med))), int(t.size))


# -- box-plot summary ---------------------------------------------------------------------

@dataclass(frozen=True)
class BoxSummary:
    label: str
    n: int
    median: float
    q1: float
    q3: float
    whisker_low: float
    whisker_high: float


def box_summary(values, label: str) -> BoxSummary:
    """Quartiles with whiskers at the furthest points within 1.5 IQR."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    if v.size == 0:
        raise InputError(f"no values for class {label}")
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    iqr = q3 - q1
    lo = v[v >= q1 - 1.5 * iqr].min()
    hi = v[v <= q3 + 1.5 * iqr].max()
    return BoxSummary(label, int(v.size), float(med), float(q1), float(q3), float(lo), float(hi))


# -- emission --------------------------------------------------------------------------------

def _fmt(x):
    return "" if x is None else f"{x:.6g}"


def format_report_text(report: ClassificationReport, latency: Optional[LatencyStats] = None,
                       title: str = "", latency_name: str = "recognition time") -> str:
    def pct(x):
        return "n/a" if x is None else f"{100 * x:.2f}%"

    lines = []
    if title:
        lines += [title, "=" * len(title)]
    lines += [
        "              pred C   pred NC",
        f"true C     {report.TP:9d} {report.FN:9d}   support {report.support_c}",
        f"true NC    {report.FP:9d} {report.TN:9d}   support {report.support_nc}",
        "",
        f"accuracy   {pct(report.accuracy)}",
        f"precision  {pct(report.precision)}",
        f"recall     {pct(report.recall)}",
        f"F1         {pct(report.f1)}",
    ]
    if latency is not None:
        lines.append(f"{latency_name} {latency.median:.1f} +- {latency.median_absolute_deviation:.1f} ms "
                     f"(median +- MAD, n={latency.n})")
    return "\n".join(lines) + "\n"


def write_report_csv(path, report: ClassificationReport, latency: Optional[LatencyStats] = None) -> None:
    rows = [("TP", report.TP), ("FP", report.FP), ("TN", report.TN), ("FN", report.FN),
            ("accuracy", _fmt(report.accuracy)), ("precision", _fmt(report.precision)),
            ("recall", _fmt(report.recall)), ("f1", _fmt(report.f1)),
            ("support_c", report.support_c), ("support_nc", report.support_nc)]
    if latency is not None:
        rows += [("latency_median_ms", _fmt(latency.median)),
                 ("latency_mad_ms", _fmt(latency.median_absolute_deviation)),
                 ("latency_n", latency.n)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("metric", "value"))
        w.writerows(rows)


def write_box_csv(path, summaries: Sequence[BoxSummary]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("class", "n", "median", "q1", "q3", "whisker_low", "whisker_high"))
        for s in summaries:
            w.writerow((s.label, s.n, _fmt(s.median), _fmt(s.q1), _fmt(s.q3),
                        _fmt(s.whisker_low), _fmt(s.whisker_high)))
