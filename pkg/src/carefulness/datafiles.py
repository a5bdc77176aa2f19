"""Labelled-segment datasets, motion ground truth and event CSVs.

Dataset layout: a directory with ``index.csv`` (``file,label,subject``)
next to one segment CSV per entry.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

from .errors import DataError
from .segmenter import Segment, read_segment_csv, write_segment_csv

INDEX_HEADER = ("file", "label", "subject")
TRUTH_HEADER = ("t_on_s", "t_off_s", "label", "subject")
EVENTS_HEADER = ("t_start_s", "t_end_s", "K", "label", "score_c", "score_nc", "recognition_ms")


@dataclass
class Dataset:
    segments: List[Segment]
    labels: List[str]
    subjects: List[str]
    files: List[str]


def write_dataset(directory, segments, labels, subjects=None) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    subjects = subjects if subjects is not None else [""] * len(segments)
    with open(directory / "index.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(INDEX_HEADER)
        for i, (seg, lab, subj) in enumerate(zip(segments, labels, subjects)):
            name = f"seg_{i:05d}.csv"
            write_segment_csv(directory / name, seg)
            w.writerow((name, lab, subj))


def read_dataset(directory) -> Dataset:
    directory = Path(directory)
    index = directory / "index.csv"
    if not index.exists():
        raise DataError(f"{index} not found")
    segments, labels, subjects, files = [], [], [], []
    with open(index, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0][:2]) != INDEX_HEADER[:2]:
        raise DataError(f"{index}: expected header {','.join(INDEX_HEADER)}", line=1)
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) < 2:
            raise DataError(f"{index}: expected file,label[,subject]", line=lineno)
        name, label = row[0], row[1]
        if label not in ("C", "NC"):
            raise DataError(f"{index}: label must be C or NC, got {label!r}", line=lineno)
        try:
            segments.append(read_segment_csv(directory / name))
        except OSError as exc:
            raise DataError(f"{index}: cannot read {name}: {exc}", line=lineno) from exc
        labels.append(label)
        subjects.append(row[2] if len(row) > 2 else "")
        files.append(name)
    return Dataset(segments, labels, subjects, files)


def write_truth_csv(path, truths, subjects=None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRUTH_HEADER)
        for i, m in enumerate(truths):
            subj = "" if subjects is None else subjects[i]
            w.writerow((f"{m.t_on:.9g}", f"{m.t_off:.9g}", m.label, subj))


@dataclass(frozen=True)
class TruthRow:
    t_on: float
    t_off: float
    label: str
    subject: str = ""


def read_truth_csv(path) -> List[TruthRow]:
    out = []
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0][:3]) != TRUTH_HEADER[:3]:
        raise DataError(f"{path}: expected header {','.join(TRUTH_HEADER)}", line=1)
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        try:
            out.append(TruthRow(float(row[0]), float(row[1]), row[2], row[3] if len(row) > 3 else ""))
        except (ValueError, IndexError) as exc:
            raise DataError(f"{path}: bad truth row {row!r}", line=lineno) from exc
        if out[-1].label not in ("C", "NC"):
            raise DataError(f"{path}: label must be C or NC", line=lineno)
    return out


def format_event_row(event, timing: bool = True):
    seg, pred = event.segment, event.prediction
    rec = f"{event.recognition_time:.3f}" if timing else ""
    return (f"{seg.t_start:.9g}", f"{seg.t_end:.9g}", str(seg.K), pred.label,
            f"{pred.scores[0]:.9g}", f"{pred.scores[1]:.9g}", rec)


def write_events_csv(path, events, timing: bool = True) -> int:
    n = 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EVENTS_HEADER)
        for ev in events:
            w.writerow(format_event_row(ev, timing))
            n += 1
    return n


@dataclass(frozen=True)
class EventRow:
    t_start: float
    t_end: float
    K: int
    label: str
    score_c: float
    score_nc: float
    recognition_ms: Optional[float]


def read_events_csv(path) -> List[EventRow]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != EVENTS_HEADER:
        raise DataError(f"{path}: expected header {','.join(EVENTS_HEADER)}", line=1)
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        try:
            out.append(EventRow(float(row[0]), float(row[1]), int(row[2]), row[3], float(row[4]),
                                float(row[5]), float(row[6]) if row[6] else None))
        except (ValueError, IndexError) as exc:
            raise DataError(f"{path}: bad event row {row!r}", line=lineno) from exc
    return out
