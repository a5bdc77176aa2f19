"""Synthetic ground truth: labelled velocity profiles and rendered scenes.

Profiles are single-peak bells on the 15 Hz grid. The peak position is set
by a piecewise-linear time warp so that the acceleration phase occupies the
requested fraction of the movement. Scenes render a textured disc gliding
over a static textured background with the profile as its speed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from .errors import GenerationError
from .evalstats import KinematicMetrics, kinematic_metrics
from .frames import FrameStream
from .segmenter import Segment

RATE = 15.0
TAU = 5.25
FAMILIES = ("raised_cosine", "minimum_jerk")


@dataclass(frozen=True)
class ProfileSpec:
    class_label: str
    duration: float
    peak_velocity: float
    asymmetry: float
    noise_std: float = 0.0
    seed: int = 0
    base_velocity: Optional[float] = None  # default: 2 * tau
    family: str = "raised_cosine"
    tau: float = TAU
    rate: float = RATE

    def validate(self) -> None:
        if self.class_label not in ("C", "NC"):
            raise GenerationError(f"class_label must be C or NC, got {self.class_label!r}")
        if self.duration < 1.0:
            raise GenerationError(f"duration {self.duration} s is below the 1 s segmentation minimum")
        if not self.peak_velocity > self.tau:
            raise GenerationError(f"peak_velocity {self.peak_velocity} must exceed tau {self.tau}")
        if not 0.0 < self.asymmetry < 1.0:
            raise GenerationError(f"asymmetry {self.asymmetry} outside (0, 1)")
        if self.noise_std < 0:
            raise GenerationError("noise_std must be >= 0")
        if self.family not in FAMILIES:
            raise GenerationError(f"unknown profile family {self.family!r}")
        base = self.base
        if not self.tau < base <= self.peak_velocity:
            raise GenerationError(f"base velocity {base} must lie in (tau, peak_velocity]")

    @property
    def base(self) -> float:
        return 2.0 * self.tau if self.base_velocity is None else self.base_velocity

    @property
    def K(self) -> int:
        return max(2, int(round(self.duration * self.rate)))


def _warp(s: np.ndarray, a: float) -> np.ndarray:
    return np.where(s <= a, 0.5 * s / a, 0.5 + 0.5 * (s - a) / (1.0 - a))


def bell(s, asymmetry: float, family: str = "raised_cosine") -> np.ndarray:
    """Unit-peak bell on ``s`` in [0, 1] with its maximum at ``s = asymmetry``."""
    w = _warp(np.asarray(s, dtype=np.float64), asymmetry)
    if family == "minimum_jerk":
        return 16.0 * w * w * (1.0 - w) * (1.0 - w)
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * w))


def speed_at(spec: ProfileSpec, t) -> np.ndarray:
    """Continuous speed (px/s) at times ``t`` measured from motion onset."""
    t = np.asarray(t, dtype=np.float64)
    T = spec.K / spec.rate
    s = np.clip(t / T, 0.0, 1.0)
    v = spec.base + (spec.peak_velocity - spec.base) * bell(s, spec.asymmetry, spec.family)
    return np.where((t >= 0) & (t <= T), v, 0.0)


def distance_at(spec: ProfileSpec, t) -> np.ndarray:
    """Arc length travelled by time ``t`` (integral of :func:`speed_at`)."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    T = spec.K / spec.rate
    fine = np.linspace(0.0, T, 2001)
    v = speed_at(spec, fine)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (v[1:] + v[:-1]) * np.diff(fine))])
    return np.interp(np.clip(t, 0.0, T), fine, cum)


def generate_profile(spec: ProfileSpec) -> Tuple[Segment, KinematicMetrics]:
    """Sampled profile as a :class:`Segment` plus metrics of its noiseless shape."""
    spec.validate()
    K = spec.K
    s = (np.arange(K) + 0.5) / K
    clean = spec.base + (spec.peak_velocity - spec.base) * bell(s, spec.asymmetry, spec.family)
    values = clean
    if spec.noise_std > 0:
        rng = np.random.default_rng(spec.seed)
        floor = 0.5 * (spec.tau + spec.base)
        values = np.maximum(clean + rng.normal(0.0, spec.noise_std, K), floor)
    return Segment.from_values(values, spec.rate), kinematic_metrics(clean, spec.rate)


@dataclass(frozen=True)
class ClassDistribution:
    duration: Tuple[float, float]
    asymmetry: Tuple[float, float]
    peak_velocity: Tuple[float, float] = (30.0, 60.0)


DEFAULT_DISTRIBUTIONS = {
    "C": ClassDistribution(duration=(2.5, 4.0), asymmetry=(0.30, 0.45)),
    "NC": ClassDistribution(duration=(1.2, 2.5), asymmetry=(0.45, 0.60)),
}


def identical_distributions(dist: ClassDistribution | None = None):
    """Both classes drawn from one distribution (leakage control)."""
    dist = dist or ClassDistribution(duration=(1.2, 4.0), asymmetry=(0.30, 0.60))
    return {"C": dist, "NC": dist}


def sample_profile_specs(n_per_class: int, seed: int = 0, distributions=None,
                         noise_std: float = 1.0, family: str = "raised_cosine") -> List[ProfileSpec]:
    """Draw ``n_per_class`` specs per class, interleaved C, NC, C, NC, ..."""
    distributions = distributions or DEFAULT_DISTRIBUTIONS
    rng = np.random.default_rng(seed)
    specs = []
    for i in range(n_per_class):
        for label in ("C", "NC"):
            d = distributions[label]
            specs.append(ProfileSpec(
                class_label=label,
                duration=float(rng.uniform(*d.duration)),
                peak_velocity=float(rng.uniform(*d.peak_velocity)),
                asymmetry=float(rng.uniform(*d.asymmetry)),
                noise_std=noise_std,
                seed=int(rng.integers(0, 2 ** 31 - 1)),
                family=family,
            ))
    return specs


@dataclass
class Corpus:
    segments: List[Segment]
    labels: List[str]
    subjects: List[int]
    specs: List[ProfileSpec]


def generate_corpus(n_per_class: int = 400, seed: int = 0, distributions=None,
                    noise_std: float = 1.0, n_subjects: int = 11,
                    family: str = "raised_cosine") -> Corpus:
    specs = sample_profile_specs(n_per_class, seed, distributions, noise_std, family)
    segments = [generate_profile(s)[0] for s in specs]
    labels = [s.class_label for s in specs]
    subjects = [(i // 2) % n_subjects for i in range(len(specs))]
    return Corpus(segments, labels, subjects, specs)


# -- rendering ----------------------------------------------------------------

@dataclass(frozen=True)
class SceneSpec:
    width: int = 320
    height: int = 240
    blob_radius: float = 20.0
    texture_seed: int = 0
    path: Tuple[Tuple[float, float], ...] = ((80.0, 120.0), (240.0, 120.0))
    profile: Optional[ProfileSpec] = None
    fps: float = 15.0
    lead_in: float = 1.0
    lead_out: float = 1.0
    sensor_noise: float = 0.0


@dataclass(frozen=True)
class MotionTruth:
    t_on: float
    t_off: float
    label: str
    profile: ProfileSpec = field(compare=False, default=None)

    def samples(self, rate: float = RATE) -> Tuple[int, int]:
        """First and last 15 Hz sample index whose flow interval overlaps the motion."""
        return int(math.floor(self.t_on * rate)) + 1, int(math.ceil(self.t_off * rate))


def _texture(shape, seed, sigma=2.0, lo=30.0, hi=225.0):
    rng = np.random.default_rng(seed)
    a = ndimage.gaussian_filter(rng.normal(size=shape), sigma, mode="wrap")
    a = (a - a.min()) / (a.max() - a.min())
    return lo + (hi - lo) * a


class _Renderer:
    def __init__(self, width, height, radius, seed, noise, noise_seed):
        self.width, self.height, self.radius = width, height, radius
        self.background = _texture((height, width), seed)
        pad = int(math.ceil(radius)) + 3
        self.pad = pad
        self.blob_tex = _texture((2 * pad + 1, 2 * pad + 1), seed + 7919, sigma=2.5, lo=0.0, hi=255.0)
        self.noise = noise
        self.rng = np.random.default_rng(noise_seed)

    def frame(self, cx, cy) -> np.ndarray:
        img = self.background.copy()
        pad = self.pad
        x0 = max(int(math.floor(cx)) - pad, 0)
        x1 = min(int(math.floor(cx)) + pad + 1, self.width)
        y0 = max(int(math.floor(cy)) - pad, 0)
        y1 = min(int(math.floor(cy)) + pad + 1, self.height)
        yy, xx = np.mgrid[y0:y1, x0:x1].astype(np.float64)
        dx, dy = xx - cx, yy - cy
        alpha = np.clip(self.radius + 0.5 - np.hypot(dx, dy), 0.0, 1.0)
        # texture moves rigidly with the blob centre
        tex = ndimage.map_coordinates(self.blob_tex, [dy + pad, dx + pad], order=1, mode="nearest")
        img[y0:y1, x0:x1] = (1.0 - alpha) * img[y0:y1, x0:x1] + alpha * tex
        if self.noise > 0:
            img = img + self.rng.normal(0.0, self.noise, img.shape)
        return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def _polyline(path):
    pts = np.asarray(path, dtype=np.float64).reshape(-1, 2)
    seg = np.hypot(*np.diff(pts, axis=0).T) if len(pts) > 1 else np.zeros(0)
    return pts, np.concatenate([[0.0], np.cumsum(seg)])


def _point_at(pts, cum, s):
    if cum[-1] == 0:
        return pts[0]
    s = min(max(s, 0.0), cum[-1])
    k = min(int(np.searchsorted(cum, s, side="right")) - 1, len(pts) - 2)
    frac = (s - cum[k]) / (cum[k + 1] - cum[k]) if cum[k + 1] > cum[k] else 0.0
    return pts[k] + frac * (pts[k + 1] - pts[k])


def _check_path(spec: SceneSpec):
    margin = spec.blob_radius + 2
    for x, y in spec.path:
        if not (margin <= x <= spec.width - 1 - margin and margin <= y <= spec.height - 1 - margin):
            raise GenerationError(f"path point ({x}, {y}) leaves the frame (blob margin {margin} px)")
    if spec.fps < RATE:
        raise GenerationError(f"fps must be >= {RATE}")


def render_session(scenes: Sequence[SceneSpec], seed: int = 0):
    """Render consecutive motions into one stream over a shared background.

    Size, texture, radius and fps come from the first scene. Each scene
    contributes ``lead_in`` rest, its motion, and ``lead_out`` rest. Returns
    ``(FrameStream, [MotionTruth])``.
    """
    if not scenes:
        raise GenerationError("no scenes to render")
    first = scenes[0]
    for sc in scenes:
        _check_path(sc)
        if sc.profile is not None:
            sc.profile.validate()
    r = _Renderer(first.width, first.height, first.blob_radius, first.texture_seed,
                  first.sensor_noise, seed)
    fps = first.fps

    # timeline: (start time, duration, scene, rest position)
    timeline = []
    truth = []
    t = 0.0
    for sc in scenes:
        pts, cum = _polyline(sc.path)
        t += sc.lead_in
        if sc.profile is not None and cum[-1] > 0:
            T = sc.profile.K / sc.profile.rate
            travel = float(distance_at(sc.profile, T)[0])
            t_off = T
            if travel > cum[-1]:
                fine = np.linspace(0, T, 4001)
                t_off = float(fine[np.searchsorted(distance_at(sc.profile, fine), cum[-1])])
            truth.append(MotionTruth(t, t + t_off, sc.profile.class_label, sc.profile))
        timeline.append((t, sc, pts, cum))
        dur = sc.profile.K / sc.profile.rate if sc.profile is not None else 0.0
        t += dur + sc.lead_out
    total = t
    n_frames = int(math.floor(total * fps + 1e-9)) + 1

    def position(time):
        current = timeline[0]
        for entry in timeline:
            if time >= entry[0] or entry is timeline[0]:
                current = entry
        start, sc, pts, cum = current
        if time < start:
            return pts[0]
        if sc.profile is None:
            return pts[0]
        return _point_at(pts, cum, float(distance_at(sc.profile, time - start)[0]))

    arrays = [r.frame(*position(i / fps)) for i in range(n_frames)]
    return FrameStream.from_arrays(arrays, fps), truth


def render_scene(spec: SceneSpec, seed: int = 0):
    """Single-motion scene. Returns ``(FrameStream, [MotionTruth])``."""
    return render_session([spec], seed)


def straight_path(profile: ProfileSpec, width=320, height=240, radius=20.0, direction=1,
                  y=None, slack=4.0):
    """Horizontal path long enough for ``profile``, centred in the frame."""
    length = float(distance_at(profile, profile.K / profile.rate)[0]) + slack
    margin = radius + 3
    if length > width - 2 * margin:
        raise GenerationError(f"profile travels {length:.0f} px, frame allows {width - 2 * margin:.0f}")
    y = height / 2.0 if y is None else y
    x0 = (width - length) / 2.0
    xs = (x0, x0 + length) if direction > 0 else (x0 + length, x0)
    return ((xs[0], y), (xs[1], y))


def session_scenes(profiles: Sequence[ProfileSpec], width=320, height=240, radius=20.0,
                   texture_seed=0, fps=15.0, rest=1.0, sensor_noise=0.0) -> List[SceneSpec]:
    """Back-and-forth scenes: each motion returns to the same horizontal line."""
    scenes = []
    x_rest = None
    for k, p in enumerate(profiles):
        length = float(distance_at(p, p.K / p.rate)[0]) + 4.0
        margin = radius + 3
        if length > width - 1 - 2 * margin:
            raise GenerationError(f"profile {k} travels {length:.0f} px, frame allows {width - 1 - 2 * margin:.0f}")
        if x_rest is None:
            x_rest = margin
        room_right = width - 1 - margin - x_rest
        room_left = x_rest - margin
        direction = 1 if room_right >= room_left else -1
        if max(room_right, room_left) < length:
            raise GenerationError(f"profile {k} does not fit from x={x_rest:.0f}")
        end = x_rest + direction * length
        path = ((x_rest, height / 2.0), (end, height / 2.0))
        travel = float(distance_at(p, p.K / p.rate)[0])
        x_rest = x_rest + direction * travel
        scenes.append(SceneSpec(width, height, radius, texture_seed, path, p, fps,
                                lead_in=rest if k == 0 else 0.0, lead_out=rest,
                                sensor_noise=sensor_noise))
    return scenes


def with_seed(spec: ProfileSpec, seed: int) -> ProfileSpec:
    return replace(spec, seed=seed)
