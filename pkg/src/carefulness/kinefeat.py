"""Tangential-velocity feature on a fixed output clock.

``V = sqrt(u'^2 + v'^2 + delta_t^2)`` where ``u'``, ``v'`` are the mean flow
components converted from px/frame to px/s by multiplying with the output
rate. ``delta_t`` acts as a constant floor; set it to 0 to drop it.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, List

import numpy as np

from .errors import ConfigError, DataError, InputError, StreamError

CSV_HEADER = ("t_s", "v_pxs", "active_px")


@dataclass(frozen=True)
class FeatureConfig:
    output_rate: float = 15.0
    delta_t: float = 1.0 / 15.0

    def __post_init__(self):
        if not self.output_rate > 0:
            raise ConfigError("output_rate must be positive")
        if not self.delta_t >= 0:
            raise ConfigError("delta_t must be >= 0")


@dataclass(frozen=True)
class VelocitySample:
    t: float
    v: float
    active_count: int = 0

    def __post_init__(self):
        if not math.isfinite(self.v) or self.v < 0:
            raise InputError(f"velocity must be finite and >= 0, got {self.v}")


@dataclass
class VelocitySeries:
    samples: List[VelocitySample] = field(default_factory=list)

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __getitem__(self, i):
        return self.samples[i]

    @property
    def values(self) -> np.ndarray:
        return np.array([s.v for s in self.samples], dtype=np.float64)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.samples], dtype=np.float64)

    @classmethod
    def from_values(cls, values, rate: float = 15.0, t0: float = 0.0) -> "VelocitySeries":
        return cls([VelocitySample(t0 + i / rate, float(x)) for i, x in enumerate(values)])


def tangential_velocity(u_mean: float, v_mean: float, cfg: FeatureConfig | None = None) -> float:
    """Velocity norm in px/s from mean flow components in px/frame."""
    cfg = cfg or FeatureConfig()
    if not (math.isfinite(u_mean) and math.isfinite(v_mean)):
        raise InputError(f"non-finite motion components ({u_mean}, {v_mean})")
    us = u_mean * cfg.output_rate
    vs = v_mean * cfg.output_rate
    return math.sqrt(us * us + vs * vs + cfg.delta_t * cfg.delta_t)


class Resampler:
    """Streaming mean-pooling from the camera rate onto the output grid.

    Values pushed may be scalars or fixed-length tuples (pooled
    component-wise). Output window ``k`` covers camera samples whose index
    ``i`` satisfies ``floor(i * output_rate / frames_rate) == k`` and is
    stamped ``t0 + k / output_rate``.
    """

    def __init__(self, frames_rate: float, cfg: FeatureConfig | None = None):
        self.cfg = cfg or FeatureConfig()
        if frames_rate < self.cfg.output_rate:
            raise ConfigError(
                f"input rate {frames_rate} Hz is below the output rate {self.cfg.output_rate} Hz"
            )
        self.frames_rate = float(frames_rate)
        self._i = 0
        self._window = 0
        self._acc = []
        self._t0 = None

    def _window_of(self, i):
        # the epsilon absorbs representation error of ratios like 15/30
        return int(math.floor(i * self.cfg.output_rate / self.frames_rate + 1e-9))

    def _emit(self):
        pooled = np.mean(np.asarray(self._acc, dtype=np.float64), axis=0)
        t = self._t0 + self._window / self.cfg.output_rate
        self._acc = []
        return t, pooled

    def push(self, value, t: float = None):
        """Add one camera-rate value; returns ``(t, pooled)`` when a window closes."""
        if self._t0 is None:
            self._t0 = 0.0 if t is None else float(t)
        k = self._window_of(self._i)
        self._i += 1
        out = None
        if k != self._window and self._acc:
            out = self._emit()
        self._window = k
        self._acc.append(value)
        return out

    def flush(self):
        if not self._acc:
            return None
        return self._emit()


def resample(frames_rate: float, raw: Iterable[float], cfg: FeatureConfig | None = None,
             t0: float = 0.0) -> VelocitySeries:
    """Pool a camera-rate stream of non-negative scalars onto the output grid."""
    cfg = cfg or FeatureConfig()
    rs = Resampler(frames_rate, cfg)
    samples = []
    for x in raw:
        out = rs.push(float(x), t0)
        if out is not None:
            samples.append(VelocitySample(out[0], float(out[1])))
    out = rs.flush()
    if out is not None:
        samples.append(VelocitySample(out[0], float(out[1])))
    return VelocitySeries(samples)


def write_series_csv(path, series: VelocitySeries) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for s in series:
            w.writerow((f"{s.t:.9g}", f"{s.v:.9g}", str(int(s.active_count))))


def read_series_csv(path) -> VelocitySeries:
    samples = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != CSV_HEADER:
            raise DataError(f"expected header {','.join(CSV_HEADER)}", line=1)
        last = None
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                t, v, n = float(row[0]), float(row[1]), int(row[2])
            except (ValueError, IndexError) as exc:
                raise DataError(f"bad sample row {row!r}", line=lineno) from exc
            if last is not None and t <= last:
                raise StreamError(f"line {lineno}: timestamp {t} not after {last}")
            last = t
            samples.append(VelocitySample(t, v, n))
    return VelocitySeries(samples)

