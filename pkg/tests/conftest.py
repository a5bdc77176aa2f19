"""Shared, expensive fixtures: trained models and rendered sessions are built once."""

from __future__ import annotations

import re
import time

import numpy as np
import pytest
from scipy import ndimage

from carefulness import pipeline, seqnet, synthgen
from carefulness.config import PipelineConfig


def textured(shape, seed=0, sigma=1.5):
    """Smooth random texture in [0, 255], large enough for shifted crops."""
    rng = np.random.default_rng(seed)
    a = ndimage.gaussian_filter(rng.normal(size=shape), sigma, mode="wrap")
    a = (a - a.min()) / (a.max() - a.min())
    return 255.0 * a


@pytest.fixture(scope="session")
def default_corpus():
    return synthgen.generate_corpus(400, seed=1)


@pytest.fixture(scope="session")
def timed_default_model(default_corpus):
    t0 = time.perf_counter()
    params, log = seqnet.train(default_corpus.segments, default_corpus.labels, seqnet.TrainConfig(seed=0))
    return params, log, time.perf_counter() - t0


@pytest.fixture(scope="session")
def default_model(timed_default_model):
    return timed_default_model[:2]


@pytest.fixture(scope="session")
def session_32(default_model):
    """32-motion rendered session (16 C / 16 NC) and its pipeline events."""
    params, _ = default_model
    specs = synthgen.sample_profile_specs(16, seed=2024)
    scenes = synthgen.session_scenes(specs, texture_seed=7, sensor_noise=1.0)
    stream, truths = synthgen.render_session(scenes, seed=7)
    series = pipeline.VelocitySeries()
    events = list(pipeline.run_stream(stream, PipelineConfig(), params, series_out=series))
    return stream, truths, events, series


@pytest.fixture(scope="session")
def small_session():
    """Four motions on 160x120 frames, cheap enough to run several times."""
    specs = [synthgen.ProfileSpec(lab, dur, peak, asym, noise_std=0.5, seed=k)
             for k, (lab, dur, peak, asym) in enumerate(
                 [("C", 3.0, 24.0, 0.35), ("NC", 1.6, 30.0, 0.55),
                  ("C", 2.6, 22.0, 0.40), ("NC", 1.4, 28.0, 0.50)])]
    scenes = synthgen.session_scenes(specs, 160, 120, radius=12.0, texture_seed=3, sensor_noise=1.0)
    return synthgen.render_session(scenes, seed=3)


# -- acceptance summary ------------------------------------------------------------

ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    for rep in terminalreporter.stats.get("failed", []) + terminalreporter.stats.get("error", []):
        m = re.search(r"test_acceptance.py::test_criterion_(\d+)", rep.nodeid)
        if m and int(m.group(1)) not in ACCEPTANCE:
            ACCEPTANCE[int(m.group(1))] = f"criterion {int(m.group(1)):2d} FAIL  raised before a verdict"
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
