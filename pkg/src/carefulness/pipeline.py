"""Streaming recognition chain: frames -> flow -> velocity -> segments -> labels.

``run_stream`` is a generator of :class:`RecognitionEvent`. In batch mode
frames are processed as fast as possible; in realtime mode frame ``i`` is
not consumed before ``i / fps`` seconds of wall-clock time have elapsed.
With ``parallel`` set, flow estimation and the feature/segment/classify
stage run in separate threads joined by bounded queues; a full queue
blocks the producer, so no frame is ever dropped.
"""

from __future__ import annotations

import logging
import queue
import threading
import time
from dataclasses import dataclass
from typing import Iterator, List, Optional

import numpy as np

from .config import PipelineConfig
from .errors import ConfigError
from .flowcore import FlowEstimator, mean_motion
from .frames import FrameStream
from .kinefeat import Resampler, VelocitySample, VelocitySeries, tangential_velocity
from .segmenter import Segment, Segmenter
from .seqnet import ModelParams, Prediction, load_model, predict

log = logging.getLogger(__name__)

_DONE = object()


@dataclass
class RecognitionEvent:
    segment: Segment
    prediction: Prediction
    recognition_time: float  # ms, terminating sample arrival -> label
    frame_latency: Optional[float] = None  # ms, realtime only: frame due time -> label
    samples_after_end: int = 0


class _FeatureStage:
    """Pools per-frame mean motion onto the output clock and converts to px/s."""

    def __init__(self, frames_rate: float, cfg: PipelineConfig):
        self.cfg = cfg
        self.resampler = Resampler(frames_rate, cfg.feature)
        # pooled px/camera-frame -> px per output tick
        self.scale = frames_rate / cfg.feature.output_rate

    def _sample(self, out) -> VelocitySample:
        t, (u, v, n) = out
        speed = tangential_velocity(u * self.scale, v * self.scale, self.cfg.feature)
        return VelocitySample(float(t), speed, int(round(n)))

    def push(self, t, motion) -> Optional[VelocitySample]:
        out = self.resampler.push(motion, t)
        return None if out is None else self._sample(out)

    def flush(self) -> Optional[VelocitySample]:
        out = self.resampler.flush()
        return None if out is None else self._sample(out)


class _Classifier:
    def __init__(self, params: ModelParams, cfg: PipelineConfig):
        self.params = params
        self.segmenter = Segmenter(cfg.segmenter)
        self.series = VelocitySeries()

    def feed(self, sample: VelocitySample, due: Optional[float]) -> Optional[RecognitionEvent]:
        arrival = time.perf_counter()
        self.series.samples.append(sample)
        segment = self.segmenter.feed(sample)
        if segment is None:
            return None
        event = self._classify(segment, arrival, due)
        rate = self.segmenter.cfg.rate
        event.samples_after_end = max(0, int(round((sample.t - segment.t_end) * rate)) - 1)
        return event

    def flush(self, due: Optional[float]) -> Optional[RecognitionEvent]:
        arrival = time.perf_counter()
        segment = self.segmenter.flush()
        return None if segment is None else self._classify(segment, arrival, due)

    def _classify(self, segment, arrival, due):
        pred = predict(self.params, segment)
        done = time.perf_counter()
        latency = None if due is None else (done - due) * 1000.0
        return RecognitionEvent(segment, pred, (done - arrival) * 1000.0, latency)


def resolve_model(params: Optional[ModelParams], cfg: PipelineConfig) -> ModelParams:
    if params is not None:
        return params
    if cfg.model_path is None:
        raise ConfigError("no model given (pipeline.model_path)")
    try:
        return load_model(cfg.model_path)
    except OSError as exc:
        raise ConfigError(f"cannot load model {cfg.model_path}: {exc}") from exc


def _check_rates(source: FrameStream, cfg: PipelineConfig):
    if source.fps < cfg.feature.output_rate:
        raise ConfigError(f"input fps {source.fps} is below the feature rate {cfg.feature.output_rate}")


def run_stream(source: FrameStream, cfg: PipelineConfig | None = None,
               params: ModelParams | None = None,
               series_out: Optional[VelocitySeries] = None) -> Iterator[RecognitionEvent]:
    """Yield one event per detected motion, ordered by segment end time.

    ``series_out``, if given, receives every velocity sample produced.
    """
    cfg = cfg or PipelineConfig()
    params = resolve_model(params, cfg)
    _check_rates(source, cfg)
    if cfg.parallel:
        yield from _run_parallel(source, cfg, params, series_out)
        return

    flow = FlowEstimator(cfg.flow)
    features = _FeatureStage(source.fps, cfg)
    clf = _Classifier(params, cfg)
    if series_out is not None:
        clf.series = series_out
    start = time.perf_counter()
    due = None
    for i, frame in enumerate(source):
        if cfg.realtime:
            due = start + i / source.fps
            delay = due - time.perf_counter()
            if delay > 0:
                time.sleep(delay)
        field = flow.push(frame)
        if field is None:
            continue
        sample = features.push(frame.timestamp, mean_motion(field, cfg.flow))
        if sample is not None:
            event = clf.feed(sample, due)
            if event is not None:
                yield event
    tail = features.flush()
    if tail is not None:
        event = clf.feed(tail, due)
        if event is not None:
            yield event
    event = clf.flush(due)
    if event is not None:
        yield event


def _run_parallel(source, cfg, params, series_out):
    frames_q: queue.Queue = queue.Queue(maxsize=cfg.queue_size)
    motion_q: queue.Queue = queue.Queue(maxsize=cfg.queue_size)
    errors: List[BaseException] = []
    stop = threading.Event()

    def put(q, item):
        while not stop.is_set():
            try:
                q.put(item, timeout=0.1)
                return True
            except queue.Full:
                continue
        return False

    def reader():
        try:
            start = time.perf_counter()
            for i, frame in enumerate(source):
                due = None
                if cfg.realtime:
                    due = start + i / source.fps
                    delay = due - time.perf_counter()
                    if delay > 0:
                        time.sleep(delay)
                if not put(frames_q, (frame, due)):
                    return
        except BaseException as exc:  # surfaced in the consumer thread
            errors.append(exc)
        finally:
            put(frames_q, _DONE)

    def flower():
        est = FlowEstimator(cfg.flow)
        try:
            while True:
                item = frames_q.get()
                if item is _DONE:
                    break
                frame, due = item
                field = est.push(frame)
                if field is not None:
                    if not put(motion_q, (frame.timestamp, mean_motion(field, cfg.flow), due)):
                        return
        except BaseException as exc:
            errors.append(exc)
        finally:
            put(motion_q, _DONE)

    threads = [threading.Thread(target=reader, daemon=True), threading.Thread(target=flower, daemon=True)]
    for th in threads:
        th.start()
    features = _FeatureStage(source.fps, cfg)
    clf = _Classifier(params, cfg)
    if series_out is not None:
        clf.series = series_out
    due = None
    try:
        while True:
            item = motion_q.get()
            if item is _DONE:
                break
            t, motion, due = item
            sample = features.push(t, motion)
            if sample is not None:
                event = clf.feed(sample, due)
                if event is not None:
                    yield event
        if errors:
            raise errors[0]
        tail = features.flush()
        if tail is not None:
            event = clf.feed(tail, due)
            if event is not None:
                yield event
        event = clf.flush(due)
        if event is not None:
            yield event
    finally:
        stop.set()
        for th in threads:
            th.join(timeout=5.0)


def velocity_series(source: FrameStream, cfg: PipelineConfig | None = None) -> VelocitySeries:
    """Feature extraction only: the 15 Hz velocity series of a stream."""
    cfg = cfg or PipelineConfig()
    _check_rates(source, cfg)
    flow = FlowEstimator(cfg.flow)
    features = _FeatureStage(source.fps, cfg)
    samples = []
    for frame in source:
        field = flow.push(frame)
        if field is None:
            continue
        s = features.push(frame.timestamp, mean_motion(field, cfg.flow))
        if s is not None:
            samples.append(s)
    tail = features.flush()
    if tail is not None:
        samples.append(tail)
    return VelocitySeries(samples)


def match_events(events, truths, rate: float = 15.0):
    """Assign each ground-truth motion the event overlapping it most.

    Returns ``(matches, unmatched_events)`` where ``matches[k]`` is the event
    index for truth ``k`` or ``None``.
    """
    matches: List[Optional[int]] = []
    used = set()
    half = 0.5 / rate
    for tr in truths:
        best, best_overlap = None, 0.0
        for j, ev in enumerate(events):
            if j in used:
                continue
            seg = getattr(ev, "segment", ev)
            lo = max(seg.t_start - half, tr.t_on)
            hi = min(seg.t_end + half, tr.t_off + 1.0 / rate)
            overlap = hi - lo
            if overlap > best_overlap:
                best, best_overlap = j, overlap
        matches.append(best)
        if best is not None:
            used.add(best)
    unmatched = [j for j in range(len(events)) if j not in used]
    return matches, unmatched


def boundary_errors(segment: Segment, truth, rate: float = 15.0):
    """Start/end offsets in samples between a segment and its ground truth.

    The velocity sample stamped ``t`` measures motion over ``(t - 1/rate, t]``,
    so the first moving sample is the first grid time after ``t_on`` and the
    last is the first grid time at or after ``t_off``.
    """
    first = np.floor(truth.t_on * rate + 1e-9) + 1
    last = np.ceil(truth.t_off * rate - 1e-9)
    return int(round(segment.t_start * rate - first)), int(round(segment.t_end * rate - last))
