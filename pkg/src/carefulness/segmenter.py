"""Threshold segmentation of the velocity stream.

A motion starts at the first sample strictly above ``tau`` and ends at the
first sample strictly below it (or after ``bridge_gap + 1`` consecutive
such samples when gap bridging is enabled). The terminating sample is not
part of the segment; the segment runs from the first to the last
suprathreshold sample. Motions shorter than ``min_duration`` are dropped.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, List, Optional

import numpy as np

from .errors import ConfigError, DataError, StreamError
from .kinefeat import VelocitySample

SEGMENT_HEADER = ("t_start_s", "t_end_s", "K")


@dataclass(frozen=True)
class SegmenterConfig:
    tau: float = 5.25
    min_duration: float = 1.0
    max_duration: float = 30.0
    bridge_gap: int = 0
    rate: float = 15.0

    def __post_init__(self):
        if not self.tau > 0:
            raise ConfigError("tau must be positive")
        if not 0 < self.min_duration < self.max_duration:
            raise ConfigError("need 0 < min_duration < max_duration")
        if self.bridge_gap < 0:
            raise ConfigError("bridge_gap must be >= 0")
        if not self.rate > 0:
            raise ConfigError("rate must be positive")

    @property
    def min_samples(self) -> int:
        return int(math.ceil(self.min_duration * self.rate - 1e-9))

    @property
    def max_samples(self) -> int:
        return int(round(self.max_duration * self.rate))


@dataclass
class Segment:
    values: np.ndarray
    t_start: float
    t_end: float
    truncated: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)

    @property
    def K(self) -> int:
        return int(self.values.size)

    @classmethod
    def from_values(cls, values, rate: float = 15.0, t_start: float = 0.0) -> "Segment":
        values = np.asarray(values, dtype=np.float64)
        return cls(values, t_start, t_start + (values.size - 1) / rate)


class Segmenter:
    """Online segmenter for one velocity stream."""

    def __init__(self, cfg: SegmenterConfig | None = None):
        self.cfg = cfg or SegmenterConfig()
        self.discarded = 0
        self._last_t = None
        self.reset()

    @property
    def active(self) -> bool:
        return self._buf_v is not None

    def reset(self) -> None:
        """Drop any motion in progress. Timestamp ordering is still enforced."""
        self._buf_v = None
        self._buf_t = None
        self._last_above = -1
        self._below = 0

    def _close(self, truncated=False) -> Optional[Segment]:
        n = self._last_above + 1
        values = self._buf_v[:n]
        times = self._buf_t[:n]
        self.reset()
        if n < self.cfg.min_samples:
            self.discarded += 1
            return None
        return Segment(np.array(values), times[0], times[-1], truncated)

    def feed(self, sample: VelocitySample) -> Optional[Segment]:
        t, v = sample.t, sample.v
        if self._last_t is not None and not t > self._last_t:
            raise StreamError(f"sample at t={t} does not follow t={self._last_t}")
        self._last_t = t
        tau = self.cfg.tau

        if self._buf_v is None:
            if v > tau:
                self._buf_v = [v]
                self._buf_t = [t]
                self._last_above = 0
            return None

        if v < tau:
            self._below += 1
            if self._below > self.cfg.bridge_gap:
                return self._close()
        else:
            self._below = 0
        self._buf_v.append(v)
        self._buf_t.append(t)
        if v > tau:
            self._last_above = len(self._buf_v) - 1
        if len(self._buf_v) >= self.cfg.max_samples:
            return self._close(truncated=True)
        return None

    def flush(self) -> Optional[Segment]:
        """End of stream: close a motion still in progress."""
        if self._buf_v is None:
            return None
        return self._close()


def segment_stream(samples: Iterable[VelocitySample], cfg: SegmenterConfig | None = None,
                   flush: bool = True) -> List[Segment]:
    seg = Segmenter(cfg)
    out = []
    for s in samples:
        result = seg.feed(s)
        if result is not None:
            out.append(result)
    if flush:
        result = seg.flush()
        if result is not None:
            out.append(result)
    return out


def segment_offline(values, times=None, cfg: SegmenterConfig | None = None) -> List[Segment]:
    """Batch scan of a whole series with the same rules as :class:`Segmenter`.

    Works on index ranges over the full arrays instead of a running buffer.
    """
    cfg = cfg or SegmenterConfig()
    values = np.asarray(values, dtype=np.float64)
    n = values.size
    if times is None:
        times = np.arange(n) / cfg.rate
    times = np.asarray(times, dtype=np.float64)
    if n > 1 and not np.all(np.diff(times) > 0):
        raise StreamError("timestamps must be strictly increasing")
    above = values > cfg.tau
    below = values < cfg.tau
    segments = []
    i = 0
    while i < n:
        if not above[i]:
            i += 1
            continue
        start = i
        last_above = i
        run = 0
        j = i + 1
        end = None
        truncated = False
        while j < n:
            if below[j]:
                run += 1
                if run > cfg.bridge_gap:
                    end = j + 1
                    break
            else:
                run = 0
                if above[j]:
                    last_above = j
            if j - start + 1 >= cfg.max_samples:
                end = j + 1
                truncated = True
                break
            j += 1
        if end is None:
            end = n
        if last_above - start + 1 >= cfg.min_samples:
            segments.append(Segment(values[start:last_above + 1].copy(), times[start],
                                    times[last_above], truncated))
        i = end
    return segments


def write_segment_csv(path, segment: Segment) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SEGMENT_HEADER)
        w.writerow((f"{segment.t_start:.9g}", f"{segment.t_end:.9g}", segment.K))
        w.writerow([f"{x:.17g}" for x in segment.values])


def read_segment_csv(path) -> Segment:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh)]
    if not rows or tuple(rows[0]) != SEGMENT_HEADER:
        raise DataError(f"{path}: expected header {','.join(SEGMENT_HEADER)}", line=1)
    if len(rows) < 3:
        raise DataError(f"{path}: missing segment rows", line=len(rows) + 1)
    try:
        t_start, t_end, k = float(rows[1][0]), float(rows[1][1]), int(rows[1][2])
    except (ValueError, IndexError) as exc:
        raise DataError(f"{path}: bad segment metadata {rows[1]!r}", line=2) from exc
    try:
        values = np.array([float(x) for x in rows[2]], dtype=np.float64)
    except ValueError as exc:
        raise DataError(f"{path}: non-numeric velocity", line=3) from exc
    if values.size != k:
        raise DataError(f"{path}: K={k} but {values.size} values", line=3)
    return Segment(values, t_start, t_end)
