import time

import numpy as np
import pytest

from carefulness.errors import ConfigError, InputError
from carefulness.flowcore import (FlowConfig, FlowEstimator, FlowField, compute_flow, mean_motion,
                                  polynomial_expansion)
from carefulness.frames import Frame

from conftest import textured

H, W = 240, 320
MARGIN = 15


def shifted_pair(dx, dy, seed=0, h=H, w=W):
    tex = textured((h + 16, w + 16), seed)
    a = tex[8:8 + h, 8:8 + w]
    b = tex[8 - dy:8 - dy + h, 8 - dx:8 - dx + w]
    return (Frame.from_array(np.round(a).astype(np.uint8)),
            Frame.from_array(np.round(b).astype(np.uint8)))


def interior_rms(field, dx, dy, m=MARGIN):
    eu = field.u[m:-m, m:-m] - dx
    ev = field.v[m:-m, m:-m] - dy
    return float(np.sqrt(np.mean(eu ** 2 + ev ** 2)))


def test_zero_motion_is_exactly_zero():
    a, _ = shifted_pair(0, 0)
    f = compute_flow(a, a)
    assert np.max(np.abs(f.u)) < 1e-6 and np.max(np.abs(f.v)) < 1e-6


@pytest.mark.parametrize("dx,dy", [(2, 0), (-2, 0), (0, 2), (0, -2), (1, -1)])
def test_small_translation(dx, dy):
    a, b = shifted_pair(dx, dy, seed=3)
    f = compute_flow(a, b)
    assert interior_rms(f, dx, dy) <= 0.25
    assert np.median(f.u[MARGIN:-MARGIN, MARGIN:-MARGIN]) == pytest.approx(dx, abs=0.05)
    assert np.median(f.v[MARGIN:-MARGIN, MARGIN:-MARGIN]) == pytest.approx(dy, abs=0.05)


def test_frame_narrower_than_neighborhood_is_config_error():
    f = Frame(8, 8, np.zeros((8, 8), dtype=np.uint8))
    with pytest.raises(ConfigError):
        compute_flow(f, f, FlowConfig(polynomial_neighborhood=9))
    with pytest.raises(ConfigError):
        compute_flow(Frame(8, 20, np.zeros((20, 8), dtype=np.uint8)),
                     Frame(8, 20, np.zeros((20, 8), dtype=np.uint8)),
                     FlowConfig(polynomial_neighborhood=9))


def test_mismatched_sizes_rejected():
    a, _ = shifted_pair(0, 0, h=60, w=80)
    b, _ = shifted_pair(0, 0, h=64, w=80)
    with pytest.raises(InputError):
        compute_flow(a, b)


@pytest.mark.parametrize("kwargs", [dict(pyramid_levels=0), dict(pyramid_scale=1.0),
                                    dict(window_size=0), dict(polynomial_neighborhood=4),
                                    dict(polynomial_sigma=0), dict(iterations=0),
                                    dict(magnitude_threshold=-1)])
def test_config_validation(kwargs):
    with pytest.raises(ConfigError):
        FlowConfig(**kwargs)


def test_mirror_symmetry():
    a, b = shifted_pair(2, 1, seed=5, h=96, w=128)
    f = compute_flow(a, b)
    g = compute_flow(a.mirrored(), b.mirrored())
    np.testing.assert_allclose(g.u, -f.u[:, ::-1], atol=1e-9)
    np.testing.assert_allclose(g.v, f.v[:, ::-1], atol=1e-9)


def test_polynomial_expansion_recovers_quadratic():
    yy, xx = np.mgrid[0:40, 0:40].astype(np.float64)
    img = 3.0 + 0.5 * xx - 0.25 * yy + 0.01 * xx ** 2 + 0.02 * yy ** 2 - 0.015 * xx * yy
    r = polynomial_expansion(img, 7, 1.5)
    y0, x0 = 20, 17
    # local coefficients about (x0, y0)
    expect = [img[y0, x0], 0.5 + 0.02 * x0 - 0.015 * y0, -0.25 + 0.04 * y0 - 0.015 * x0,
              0.01, 0.02, -0.015]
    np.testing.assert_allclose(r[:, y0, x0], expect, atol=1e-9)


def test_mean_motion_matches_naive_loop():
    rng = np.random.default_rng(11)
    u = rng.normal(scale=0.5, size=(30, 40))
    v = rng.normal(scale=0.5, size=(30, 40))
    cfg = FlowConfig()
    su = sv = 0.0
    n = 0
    for y in range(30):
        for x in range(40):
            if (u[y, x] ** 2 + v[y, x] ** 2) ** 0.5 > cfg.magnitude_threshold:
                su += u[y, x]
                sv += v[y, x]
                n += 1
    mu, mv, count = mean_motion(FlowField(40, 30, u, v), cfg)
    assert count == n
    assert mu == pytest.approx(su / n, abs=1e-15) and mv == pytest.approx(sv / n, abs=1e-15)


def test_mean_motion_empty_is_zero():
    z = np.zeros((10, 12))
    assert mean_motion(FlowField(12, 10, z, z), FlowConfig()) == (0.0, 0.0, 0)


def test_estimator_reuses_expansions():
    a, b = shifted_pair(1, 0, seed=2, h=64, w=80)
    est = FlowEstimator()
    assert est.push(a) is None
    f1 = est.push(b)
    f2 = compute_flow(a, b)
    np.testing.assert_array_equal(f1.u, f2.u)
    np.testing.assert_array_equal(f1.v, f2.v)
    est.reset()
    assert est.push(b) is None


def test_runtime_per_pair():
    a, b = shifted_pair(3, -2, seed=9)
    t0 = time.perf_counter()
    compute_flow(a, b)
    assert time.perf_counter() - t0 < 5.0


def test_flowfield_rejects_nan():
    u = np.zeros((4, 4))
    u[1, 1] = np.nan
    with pytest.raises(InputError):
        FlowField(4, 4, u, np.zeros((4, 4)))
