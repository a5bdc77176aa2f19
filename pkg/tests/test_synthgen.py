import numpy as np
import pytest

from carefulness.errors import GenerationError
from carefulness.evalstats import kinematic_metrics, pair_by_trial, wilcoxon_signed_rank
from carefulness.segmenter import segment_offline
from carefulness.synthgen import (ProfileSpec, SceneSpec, bell, distance_at, generate_corpus, generate_profile,
                                  identical_distributions, render_scene, sample_profile_specs, speed_at,
                                  straight_path)


def test_symmetric_profile_peaks_mid():
    for K_dur in (1.0, 2.0, 3.4):
        seg, m = generate_profile(ProfileSpec("C", K_dur, 40.0, 0.5))
        assert abs(kinematic_metrics(seg).AD_over_MD - 0.5) <= 1 / seg.K


@pytest.mark.parametrize("asym", [0.3, 0.37, 0.45, 0.6])
def test_asymmetry_within_one_sample(asym):
    seg, _ = generate_profile(ProfileSpec("NC", 2.5, 50.0, asym))
    assert abs(kinematic_metrics(seg).AD_over_MD - asym) <= 1 / seg.K


def test_duration_grid():
    seg, _ = generate_profile(ProfileSpec("C", 2.0, 30.0, 0.4))
    assert abs(seg.K - 30) <= 1


def test_peak_and_floor():
    seg, _ = generate_profile(ProfileSpec("C", 3.0, 45.0, 0.4))
    assert seg.values.max() == pytest.approx(45.0, rel=0.01)
    noisy, _ = generate_profile(ProfileSpec("C", 3.0, 45.0, 0.4, noise_std=8.0, seed=2))
    assert noisy.values.min() > 5.25


def test_bell_shape():
    s = np.linspace(0, 1, 1001)
    for fam in ("raised_cosine", "minimum_jerk"):
        b = bell(s, 0.3, fam)
        assert b[0] == pytest.approx(0) and b[-1] == pytest.approx(0)
        assert s[np.argmax(b)] == pytest.approx(0.3, abs=1e-3)
        assert b.max() == pytest.approx(1.0)


def test_distance_is_integral_of_speed():
    spec = ProfileSpec("C", 3.0, 40.0, 0.35)
    t = np.linspace(0, 3.0, 30001)
    v = speed_at(spec, t)
    want = np.sum(0.5 * (v[1:] + v[:-1]) * np.diff(t))
    assert distance_at(spec, 3.0)[0] == pytest.approx(want, rel=1e-4)


@pytest.mark.parametrize("kwargs", [dict(class_label="X"), dict(duration=0.8), dict(peak_velocity=5.0),
                                    dict(asymmetry=1.0), dict(noise_std=-1), dict(family="other"),
                                    dict(base_velocity=70.0)])
def test_invalid_specs(kwargs):
    base = dict(class_label="C", duration=2.0, peak_velocity=40.0, asymmetry=0.4)
    base.update(kwargs)
    with pytest.raises(GenerationError):
        generate_profile(ProfileSpec(**base))


def test_seed_determinism():
    a = generate_corpus(20, seed=5)
    b = generate_corpus(20, seed=5)
    c = generate_corpus(20, seed=6)
    assert all(np.array_equal(x.values, y.values) for x, y in zip(a.segments, b.segments))
    assert not all(np.array_equal(x.values, y.values) for x, y in zip(a.segments, c.segments))


def test_profiles_segment_into_exactly_one():
    for spec in sample_profile_specs(200, seed=7, noise_std=2.0):
        seg, _ = generate_profile(spec)
        padded = np.concatenate([np.zeros(5), seg.values, np.zeros(5)])
        (s,) = segment_offline(padded)
        assert s.K == seg.K


def test_default_distributions_separate_md():
    corpus = generate_corpus(500, seed=8)
    md = [kinematic_metrics(s).MD for s in corpus.segments]
    c, nc = pair_by_trial(md, corpus.labels)
    assert wilcoxon_signed_rank(c, nc).p_value < 0.01
    c_admd = np.mean([kinematic_metrics(s).AD_over_MD for s, lab in zip(corpus.segments, corpus.labels)
                      if lab == "C"])
    nc_admd = np.mean([kinematic_metrics(s).AD_over_MD for s, lab in zip(corpus.segments, corpus.labels)
                       if lab == "NC"])
    assert c_admd < nc_admd


def test_identical_distributions_share_parameters():
    specs = sample_profile_specs(300, seed=9, distributions=identical_distributions())
    c = np.array([s.duration for s in specs if s.class_label == "C"])
    nc = np.array([s.duration for s in specs if s.class_label == "NC"])
    assert abs(c.mean() - nc.mean()) < 0.15


def test_scene_path_must_fit():
    spec = ProfileSpec("C", 4.0, 200.0, 0.4)
    with pytest.raises(GenerationError):
        straight_path(spec, width=160)
    with pytest.raises(GenerationError):
        render_scene(SceneSpec(path=((0.0, 120.0), (300.0, 120.0)), profile=ProfileSpec("C", 2.0, 30.0, 0.4)))


def test_zero_length_path_renders_identical_frames():
    spec = ProfileSpec("C", 2.0, 30.0, 0.4)
    stream, truths = render_scene(SceneSpec(64, 48, 8.0, path=((30.0, 24.0),), profile=spec))
    frames = [f.pixels for f in stream]
    assert truths == []
    assert all(np.array_equal(frames[0], f) for f in frames[1:])


def test_rendering_is_deterministic():
    spec = ProfileSpec("NC", 1.5, 30.0, 0.5)
    scene = SceneSpec(80, 60, 8.0, 1, ((20.0, 30.0), (60.0, 30.0)), spec, sensor_noise=1.0)
    a = [f.pixels for f in render_scene(scene, seed=4)[0]]
    b = [f.pixels for f in render_scene(scene, seed=4)[0]]
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
