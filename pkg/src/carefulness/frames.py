"""Grayscale frames and the two on-disk frame-stream containers.

CFVID: one ASCII header line ``CFVID <width> <height> <fps>`` followed by
raw 8-bit frames, row-major, back to back. Frame ``i`` has timestamp
``i / fps``.

PGM directory: binary (P5) portable graymaps plus ``index.txt`` whose
lines are ``<timestamp_s> <filename>``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Iterator

import numpy as np

from .errors import InputError, StreamError, StreamIOError

MIN_STREAM_SIDE = 16


@dataclass(frozen=True)
class Frame:
    """One 8-bit grayscale image. ``pixels`` has shape ``(height, width)``."""

    width: int
    height: int
    pixels: np.ndarray
    timestamp: float = 0.0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise InputError(f"frame dimensions must be positive, got {self.width}x{self.height}")
        px = np.asarray(self.pixels)
        if px.size != self.width * self.height:
            raise InputError(
                f"pixel count {px.size} does not match {self.width}x{self.height}"
            )
        if px.dtype != np.uint8:
            raise InputError(f"pixels must be uint8, got {px.dtype}")
        object.__setattr__(self, "pixels", px.reshape(self.height, self.width))

    @classmethod
    def from_array(cls, array, timestamp: float = 0.0) -> "Frame":
        array = np.asarray(array)
        if array.ndim != 2:
            raise InputError(f"expected a 2-D array, got shape {array.shape}")
        return cls(array.shape[1], array.shape[0], array, timestamp)

    def mirrored(self) -> "Frame":
        return Frame(self.width, self.height, self.pixels[:, ::-1].copy(), self.timestamp)


class FrameStream:
    """A re-iterable, timestamp-ordered sequence of equally sized frames."""

    def __init__(self, width: int, height: int, fps: float,
                 frames: Iterable[Frame] | Callable[[], Iterator[Frame]]):
        self.width = int(width)
        self.height = int(height)
        self.fps = float(fps)
        if self.fps <= 0:
            raise InputError(f"fps must be positive, got {fps}")
        self._frames = frames

    @classmethod
    def from_arrays(cls, arrays, fps: float) -> "FrameStream":
        arrays = [np.asarray(a, dtype=np.uint8) for a in arrays]
        if arrays:
            h, w = arrays[0].shape
        else:
            h = w = MIN_STREAM_SIDE
        frames = [Frame.from_array(a, i / fps) for i, a in enumerate(arrays)]
        return cls(w, h, fps, frames)

    def __iter__(self) -> Iterator[Frame]:
        source = self._frames() if callable(self._frames) else iter(self._frames)
        last_t = None
        for i, frame in enumerate(source):
            if frame.width != self.width or frame.height != self.height:
                raise StreamIOError(
                    f"frame is {frame.width}x{frame.height}, stream is {self.width}x{self.height}",
                    frame_index=i,
                )
            if last_t is not None and frame.timestamp <= last_t:
                raise StreamError(f"frame {i}: timestamp {frame.timestamp} not after {last_t}")
            last_t = frame.timestamp
            yield frame


def _check_side(width, height):
    if width < MIN_STREAM_SIDE or height < MIN_STREAM_SIDE:
        raise InputError(
            f"stream frames must be at least {MIN_STREAM_SIDE}x{MIN_STREAM_SIDE}, got {width}x{height}"
        )


def write_cfvid(path, stream: FrameStream) -> int:
    """Write ``stream`` to ``path``; returns the number of frames written."""
    n = 0
    with open(path, "wb") as fh:
        fh.write(f"CFVID {stream.width} {stream.height} {stream.fps:g}\n".encode("ascii"))
        for frame in stream:
            fh.write(np.ascontiguousarray(frame.pixels).tobytes())
            n += 1
    return n


def read_cfvid(path) -> FrameStream:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            header = fh.readline(256)
            offset = fh.tell()
    except OSError as exc:
        raise StreamIOError(f"cannot open {path}: {exc}") from exc
    parts = header.decode("ascii", errors="replace").split()
    if len(parts) != 4 or parts[0] != "CFVID":
        raise StreamIOError(f"{path}: bad CFVID header {header[:40]!r}")
    try:
        width, height, fps = int(parts[1]), int(parts[2]), float(parts[3])
    except ValueError as exc:
        raise StreamIOError(f"{path}: bad CFVID header values") from exc
    _check_side(width, height)
    frame_bytes = width * height

    def frames():
        with open(path, "rb") as fh:
            fh.seek(offset)
            i = 0
            while True:
                buf = fh.read(frame_bytes)
                if not buf:
                    return
                if len(buf) != frame_bytes:
                    raise StreamIOError(
                        f"truncated frame ({len(buf)} of {frame_bytes} bytes)", frame_index=i
                    )
                px = np.frombuffer(buf, dtype=np.uint8).reshape(height, width)
                yield Frame(width, height, px, i / fps)
                i += 1

    return FrameStream(width, height, fps, frames)


def write_pgm(path, pixels: np.ndarray) -> None:
    h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(pixels, dtype=np.uint8).tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    tokens = []
    pos = 0
    # header: magic, width, height, maxval; '#' comments allowed
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise StreamIOError(f"{path}: truncated PGM header")
        tokens.append(data[start:pos])
    pos += 1
    if tokens[0] != b"P5" or int(tokens[3]) != 255:
        raise StreamIOError(f"{path}: only 8-bit binary PGM (P5) is supported")
    w, h = int(tokens[1]), int(tokens[2])
    body = data[pos:pos + w * h]
    if len(body) != w * h:
        raise StreamIOError(f"{path}: truncated PGM body")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w)


def write_pgm_dir(directory, stream: FrameStream) -> int:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = []
    for i, frame in enumerate(stream):
        name = f"frame_{i:06d}.pgm"
        write_pgm(directory / name, frame.pixels)
        lines.append(f"{frame.timestamp:.9g} {name}\n")
    with open(directory / "index.txt", "w") as fh:
        fh.write(f"# fps {stream.fps:g}\n")
        fh.writelines(lines)
    return len(lines)


def read_pgm_dir(directory) -> FrameStream:
    directory = Path(directory)
    index = directory / "index.txt"
    try:
        text = index.read_text()
    except OSError as exc:
        raise StreamIOError(f"cannot read {index}: {exc}") from exc
    fps = None
    entries = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if len(parts) == 2 and parts[0] == "fps":
                fps = float(parts[1])
            continue
        try:
            t, name = line.split(maxsplit=1)
            entries.append((float(t), name))
        except ValueError as exc:
            raise StreamIOError(f"{index} line {lineno}: expected '<t> <file>', got {line!r}") from exc
    if fps is None:
        if len(entries) < 2:
            raise StreamIOError(f"{index}: fps missing and cannot be inferred")
        fps = 1.0 / (entries[1][0] - entries[0][0])
    if entries:
        first = read_pgm(directory / entries[0][1])
        height, width = first.shape
    else:
        width = height = MIN_STREAM_SIDE
    _check_side(width, height)

    def frames():
        for i, (t, name) in enumerate(entries):
            try:
                px = read_pgm(directory / name)
            except OSError as exc:
                raise StreamIOError(str(exc), frame_index=i) from exc
            yield Frame(px.shape[1], px.shape[0], px, t)

    return FrameStream(width, height, fps, frames)


def open_stream(path) -> FrameStream:
    """Open either container, chosen by whether ``path`` is a directory."""
    if os.path.isdir(path):
        return read_pgm_dir(path)
    return read_cfvid(path)
