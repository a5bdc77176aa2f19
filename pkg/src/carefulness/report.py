"""Evaluation bundle: classify labelled segments and write every report file.

The output directory receives ``report.txt``/``report.csv``,
``predictions.csv``, ``md_box.csv``, ``admd_box.csv``, ``wilcoxon.csv``
and, unless disabled, PNG figures rendered from the same numbers.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .errors import InsufficientDataError
from .evalstats import (BoxSummary, ClassificationReport, KinematicMetrics, LatencyStats,
                        WilcoxonResult, box_summary, classification_report, format_report_text,
                        kinematic_metrics, latency_stats, pair_by_subject, pair_by_trial,
                        wilcoxon_signed_rank, write_box_csv, write_report_csv)
from .seqnet import ModelParams, Prediction, predict

log = logging.getLogger(__name__)

METRICS = ("MD", "AD_over_MD")
PAIRINGS = ("subject", "trial")


@dataclass
class EvalResult:
    report: ClassificationReport
    latency: Optional[LatencyStats]
    predictions: List[Prediction]
    metrics: List[KinematicMetrics]
    labels: List[str]
    subjects: List[str]
    boxes: Dict[str, List[BoxSummary]] = field(default_factory=dict)
    wilcoxon: Dict[str, Optional[WilcoxonResult]] = field(default_factory=dict)
    extra: Dict[str, object] = field(default_factory=dict)
    latency_name: str = "inference time"


def metric_populations(metrics: Sequence[KinematicMetrics], labels: Sequence[str], name: str):
    values = np.array([getattr(m, name) for m in metrics], dtype=np.float64)
    labels = np.asarray(labels)
    return values[labels == "C"], values[labels == "NC"]


def compare_classes(metrics, labels, subjects, name: str, pairing: str = "subject"):
    """Wilcoxon test of one metric between classes; None if too few pairs."""
    values = [getattr(m, name) for m in metrics]
    if pairing == "subject":
        c, nc, _ = pair_by_subject(values, labels, subjects)
    elif pairing == "trial":
        c, nc = pair_by_trial(values, labels, subjects)
    else:
        raise ValueError(f"unknown pairing {pairing!r}")
    try:
        return wilcoxon_signed_rank(c, nc)
    except InsufficientDataError as exc:
        log.warning("%s: %s", name, exc)
        return None


def evaluate(params: ModelParams, segments, labels, subjects=None, pairing: str = "subject",
             latencies: Optional[Sequence[float]] = None, rate: float = 15.0,
             predictions: Optional[Sequence[Prediction]] = None) -> EvalResult:
    """Classify ``segments`` (unless ``predictions`` are given) and summarise.

    ``latencies`` overrides the per-prediction inference times used for the
    latency statistics, e.g. with pipeline recognition times.
    """
    subjects = list(subjects) if subjects is not None else [""] * len(segments)
    preds = list(predictions) if predictions is not None else [predict(params, s) for s in segments]
    report = classification_report([p.label for p in preds], labels)
    times = list(latencies) if latencies is not None else [p.inference_time for p in preds]
    latency = latency_stats(times) if times else None
    metrics = [kinematic_metrics(s, rate) for s in segments]
    res = EvalResult(report, latency, preds, metrics, list(labels), subjects)
    if latencies is not None:
        res.latency_name = "recognition time"
    for name in METRICS:
        c, nc = metric_populations(metrics, labels, name)
        res.boxes[name] = [box_summary(v, lab) for v, lab in ((c, "C"), (nc, "NC")) if v.size]
        res.wilcoxon[name] = compare_classes(metrics, labels, subjects, name, pairing)
    return res


def _g(x):
    return "" if x is None else f"{x:.9g}"


def write_predictions_csv(path, result: EvalResult, names=None) -> None:
    names = names if names is not None else [str(i) for i in range(len(result.predictions))]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("item", "subject", "true", "predicted", "score_c", "score_nc", "K",
                    "MD", "AD", "AD_over_MD", "inference_ms"))
        for name, subj, lab, p, m in zip(names, result.subjects, result.labels,
                                         result.predictions, result.metrics):
            w.writerow((name, subj, lab, p.label, _g(p.scores[0]), _g(p.scores[1]), m.K,
                        _g(m.MD), _g(m.AD), _g(m.AD_over_MD), f"{p.inference_time:.3f}"))


def write_wilcoxon_csv(path, result: EvalResult, pairing: str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("metric", "pairing", "n", "W", "w_plus", "w_minus", "p_value", "method",
                    "significant_0_05", "significant_0_01"))
        for name in METRICS:
            r = result.wilcoxon.get(name)
            if r is None:
                w.writerow((name, pairing, "", "", "", "", "", "insufficient", "", ""))
            else:
                w.writerow((name, pairing, r.n, _g(r.W), _g(r.w_plus), _g(r.w_minus), _g(r.p_value),
                            r.method, int(r.significant_at_0_05), int(r.significant_at_0_01)))


def write_outputs(out_dir, result: EvalResult, pairing: str = "subject", names=None,
                  figures: bool = True, title: str = "Evaluation") -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    text = format_report_text(result.report, result.latency, title, result.latency_name)
    for key, value in result.extra.items():
        text += f"{key}: {value}\n"
    for name in METRICS:
        r = result.wilcoxon.get(name)
        text += (f"Wilcoxon {name}: n/a\n" if r is None else
                 f"Wilcoxon {name}: W={r.W:g} p={r.p_value:.4g} (n={r.n}, {r.method})\n")
    (out / "report.txt").write_text(text)
    write_report_csv(out / "report.csv", result.report, result.latency)
    write_predictions_csv(out / "predictions.csv", result, names)
    write_box_csv(out / "md_box.csv", result.boxes["MD"])
    write_box_csv(out / "admd_box.csv", result.boxes["AD_over_MD"])
    write_wilcoxon_csv(out / "wilcoxon.csv", result, pairing)
    if figures:
        from . import plotting

        plotting.confusion_figure(result.report, out / "confusion.png", title)
        for name, fname, ylabel in (("MD", "md_box.png", "motion duration [s]"),
                                    ("AD_over_MD", "admd_box.png", "AD / MD")):
            c, nc = metric_populations(result.metrics, result.labels, name)
            if c.size and nc.size:
                r = result.wilcoxon.get(name)
                plotting.box_figure(c, nc, out / fname, ylabel, None if r is None else r.p_value)
    return out
