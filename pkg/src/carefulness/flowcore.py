"""Two-frame dense optical flow by polynomial expansion, and its reduction
to a per-frame mean motion vector.

Each neighbourhood of both images is approximated by a quadratic
``f(x) ~ x^T A x + b^T x + c`` (Gaussian-weighted least squares). A pure
translation ``d`` between the frames leaves ``A`` unchanged and moves the
linear term to ``b - 2 A d``, so ``d`` is recovered from locally pooled
normal equations. A coarse-to-fine pyramid extends the range of
displacements, and a few iterations per level re-linearize around the
current estimate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ConfigError, InputError
from .frames import Frame


@dataclass(frozen=True)
class FlowConfig:
    pyramid_levels: int = 3
    pyramid_scale: float = 0.5
    window_size: int = 15
    polynomial_neighborhood: int = 7
    polynomial_sigma: float = 1.5
    iterations: int = 3
    magnitude_threshold: float = 0.2

    def __post_init__(self):
        if self.pyramid_levels < 1:
            raise ConfigError("pyramid_levels must be >= 1")
        if not 0.0 < self.pyramid_scale < 1.0:
            raise ConfigError("pyramid_scale must lie in (0, 1)")
        for name in ("window_size", "polynomial_neighborhood"):
            value = getattr(self, name)
            if value < 3 or value % 2 == 0:
                raise ConfigError(f"{name} must be odd and >= 3, got {value}")
        if self.polynomial_sigma <= 0:
            raise ConfigError("polynomial_sigma must be positive")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if not self.magnitude_threshold >= 0:
            raise ConfigError("magnitude_threshold must be >= 0")


@dataclass(frozen=True)
class FlowField:
    """Per-pixel displacement in px/frame; ``u`` is horizontal, ``v`` vertical,
    both shaped ``(height, width)``."""

    width: int
    height: int
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        for name in ("u", "v"):
            arr = getattr(self, name)
            if arr.shape != (self.height, self.width):
                raise InputError(f"{name} has shape {arr.shape}, expected {(self.height, self.width)}")
            if not np.all(np.isfinite(arr)):
                raise InputError(f"{name} contains non-finite values")

    @property
    def magnitude(self) -> np.ndarray:
        return np.sqrt(self.u * self.u + self.v * self.v)


# -- polynomial expansion ----------------------------------------------------

def _expansion_kernels(n: int, sigma: float):
    r = n // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    g = np.exp(-x * x / (2.0 * sigma * sigma))
    g /= g.sum()
    # basis order 1, x, y, x^2, y^2, xy as exponents of x and y
    px = [0, 1, 0, 2, 0, 1]
    py = [0, 0, 1, 0, 2, 1]
    gram = np.empty((6, 6))
    for i in range(6):
        for j in range(6):
            gram[i, j] = np.sum(g * x ** (px[i] + px[j])) * np.sum(g * x ** (py[i] + py[j]))
    return g, x, px, py, np.linalg.inv(gram)


def polynomial_expansion(image: np.ndarray, n: int, sigma: float) -> np.ndarray:
    """Fit ``r0 + r1 x + r2 y + r3 x^2 + r4 y^2 + r5 xy`` around every pixel.

    Returns an array of shape ``(6, H, W)``. Edges are replicated.
    """
    g, x, px, py, gram_inv = _expansion_kernels(n, sigma)
    kx = {p: g * x ** p for p in (0, 1, 2)}
    # correlate rows (axis 1, x) first, cache by exponent
    rows = {p: ndimage.correlate1d(image, kx[p], axis=1, mode="nearest") for p in (0, 1, 2)}
    proj = np.empty((6,) + image.shape)
    for k in range(6):
        proj[k] = ndimage.correlate1d(rows[px[k]], kx[py[k]], axis=0, mode="nearest")
    return np.tensordot(gram_inv, proj, axes=1)


# -- pyramid helpers ---------------------------------------------------------

def _resize(image: np.ndarray, shape) -> np.ndarray:
    h, w = image.shape
    nh, nw = shape
    ys = (np.arange(nh) + 0.5) * (h / nh) - 0.5
    xs = (np.arange(nw) + 0.5) * (w / nw) - 0.5
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return ndimage.map_coordinates(image, [yy, xx], order=1, mode="nearest")


def _level_shapes(shape, cfg: FlowConfig):
    shapes = [shape]
    for k in range(1, cfg.pyramid_levels):
        scale = cfg.pyramid_scale ** k
        nh, nw = int(round(shape[0] * scale)), int(round(shape[1] * scale))
        if min(nh, nw) < 2 * cfg.polynomial_neighborhood:
            break
        shapes.append((nh, nw))
    return shapes


def _pyramid(image: np.ndarray, shapes):
    levels = [image]
    for nh, nw in shapes[1:]:
        scale = nh / image.shape[0]
        sigma = (1.0 / scale - 1.0) * 0.5
        levels.append(_resize(ndimage.gaussian_filter(image, sigma, mode="nearest"), (nh, nw)))
    return levels


# -- displacement estimation -------------------------------------------------

def _bilinear(stack: np.ndarray, yy: np.ndarray, xx: np.ndarray) -> np.ndarray:
    """Sample every channel of ``stack`` (C, H, W) at ``(yy, xx)``, edges replicated."""
    c, h, w = stack.shape
    yy = np.clip(yy, 0.0, h - 1.0).ravel()
    xx = np.clip(xx, 0.0, w - 1.0).ravel()
    y0 = np.minimum(yy.astype(np.intp), max(h - 2, 0))
    x0 = np.minimum(xx.astype(np.intp), max(w - 2, 0))
    fy = yy - y0
    fx = xx - x0
    dx = 1 if w > 1 else 0
    dy = w if h > 1 else 0
    base = y0 * w + x0
    corners = np.take(stack.reshape(c, -1), np.concatenate([base, base + dx, base + dy, base + dy + dx]),
                      axis=1).reshape(c, 4, -1)
    weights = np.stack([(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy])
    return np.einsum("ckn,kn->cn", corners, weights).reshape(c, h, w)


def _update_flow(r1, r2, u, v, window_size):
    h, w = u.shape
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    # sample the second expansion at the displaced positions
    b2x, b2y, a2xx, a2yy, a2xy = _bilinear(r2[1:], yy + v, xx + u)

    a11 = 0.5 * (r1[3] + a2xx)
    a22 = 0.5 * (r1[4] + a2yy)
    a12 = 0.25 * (r1[5] + a2xy)
    db1 = -0.5 * (b2x - r1[1]) + a11 * u + a12 * v
    db2 = -0.5 * (b2y - r1[2]) + a12 * u + a22 * v

    g11 = a11 * a11 + a12 * a12
    g12 = a12 * (a11 + a22)
    g22 = a12 * a12 + a22 * a22
    h1 = a11 * db1 + a12 * db2
    h2 = a12 * db1 + a22 * db2
    pooled = ndimage.uniform_filter(np.stack([g11, g12, g22, h1, h2]), size=(1, window_size, window_size),
                                    mode="nearest")
    g11, g12, g22, h1, h2 = pooled
    # small Tikhonov term keeps textureless regions at zero displacement
    lam = 1e-4 * (g11 + g22) + 1e-15
    g11 = g11 + lam
    g22 = g22 + lam
    det = g11 * g22 - g12 * g12
    return (g22 * h1 - g12 * h2) / det, (g11 * h2 - g12 * h1) / det


def _as_float(frame) -> np.ndarray:
    if isinstance(frame, Frame):
        return frame.pixels.astype(np.float64) / 255.0
    return np.asarray(frame, dtype=np.float64) / 255.0


def _check_size(shape, cfg: FlowConfig):
    if len(shape) != 2:
        raise InputError(f"expected a 2-D frame, got shape {shape}")
    if min(shape) < cfg.polynomial_neighborhood:
        raise ConfigError(
            f"frame {shape[1]}x{shape[0]} smaller than "
            f"polynomial_neighborhood {cfg.polynomial_neighborhood}"
        )


def expand_frame(frame, cfg: FlowConfig):
    """Pyramid of polynomial expansions for one frame, finest level first."""
    img = _as_float(frame)
    _check_size(img.shape, cfg)
    shapes = _level_shapes(img.shape, cfg)
    return [polynomial_expansion(level, cfg.polynomial_neighborhood, cfg.polynomial_sigma)
            for level in _pyramid(img, shapes)]


def flow_from_expansions(exp1, exp2, cfg: FlowConfig) -> FlowField:
    if len(exp1) != len(exp2) or exp1[0].shape != exp2[0].shape:
        raise InputError(f"frame dimensions differ: {exp1[0].shape[1:]} vs {exp2[0].shape[1:]}")
    u = v = None
    for r1, r2 in zip(reversed(exp1), reversed(exp2)):
        _, h, w = r1.shape
        if u is None:
            u = np.zeros((h, w))
            v = np.zeros((h, w))
        else:
            ph, pw = u.shape
            u = _resize(u, (h, w)) * (w / pw)
            v = _resize(v, (h, w)) * (h / ph)
        for _ in range(cfg.iterations):
            u, v = _update_flow(r1, r2, u, v, cfg.window_size)
    h, w = u.shape
    return FlowField(w, h, u, v)


def compute_flow(prev, next, cfg: FlowConfig | None = None) -> FlowField:
    """Dense flow mapping ``prev`` onto ``next`` (``next(x + d) ~ prev(x)``).

    ``prev``/``next`` are :class:`Frame` objects or 2-D uint8 arrays.
    """
    cfg = cfg or FlowConfig()
    a, b = np.shape(getattr(prev, "pixels", prev)), np.shape(getattr(next, "pixels", next))
    if a != b:
        raise InputError(f"frame dimensions differ: {a} vs {b}")
    return flow_from_expansions(expand_frame(prev, cfg), expand_frame(next, cfg), cfg)


class FlowEstimator:
    """Streaming flow: each frame is expanded once and reused as the next
    pair's reference. Results equal :func:`compute_flow` on each pair."""

    def __init__(self, cfg: FlowConfig | None = None):
        self.cfg = cfg or FlowConfig()
        self._prev = None

    def push(self, frame):
        """Returns the flow from the previous frame, ``None`` for the first."""
        exp = expand_frame(frame, self.cfg)
        prev, self._prev = self._prev, exp
        if prev is None:
            return None
        return flow_from_expansions(prev, exp, self.cfg)

    def reset(self):
        self._prev = None


def mean_motion(flow: FlowField, cfg: FlowConfig | None = None):
    """Mean ``(u, v)`` over pixels whose flow magnitude exceeds the threshold.

    Returns ``(u_mean, v_mean, active_count)``; ``(0.0, 0.0, 0)`` when no pixel
    passes. Sums accumulate sequentially in row-major order.
    """
    cfg = cfg or FlowConfig()
    u = flow.u.ravel()
    v = flow.v.ravel()
    active = np.sqrt(u * u + v * v) > cfg.magnitude_threshold
    count = int(np.count_nonzero(active))
    if count == 0:
        return 0.0, 0.0, 0
    u_sum = float(np.cumsum(u[active])[-1])
    v_sum = float(np.cumsum(v[active])[-1])
    return u_sum / count, v_sum / count, count
