import itertools

import numpy as np
import pytest
from scipy import stats

from carefulness.errors import InputError, InsufficientDataError
from carefulness.evalstats import (average_ranks, box_summary, classification_report, f1_score,
                                   format_report_text, kinematic_metrics, latency_stats,
                                   wilcoxon_signed_rank, write_box_csv, write_report_csv)


def brute_force_p(d):
    """Two-sided p by enumerating every sign assignment of the tied ranks."""
    d = np.asarray(d, dtype=np.float64)
    d = d[d != 0]
    a = np.abs(d)
    # ranks by counting: 1 + #smaller + (#equal - 1) / 2
    ranks = np.array([1 + np.sum(a < v) + (np.sum(a == v) - 1) / 2 for v in a])
    obs = ranks[d > 0].sum()
    signs = np.array(list(itertools.product([0, 1], repeat=d.size)), dtype=np.float64)
    w = signs @ ranks
    lower = np.mean(w <= obs + 1e-9)
    upper = np.mean(w >= obs - 1e-9)
    return min(1.0, 2 * min(lower, upper))


# -- kinematic metrics ----------------------------------------------------------------

def test_flat_segment():
    m = kinematic_metrics(np.full(30, 8.0))
    assert (m.MD, m.index_vmax, m.AD, m.AD_over_MD) == (2.0, 0, 0.0, 0.0)


def test_symmetric_triangle():
    v = np.concatenate([np.arange(16), np.arange(14, -1, -1)]) + 6.0
    m = kinematic_metrics(v)
    assert m.K == 31 and m.index_vmax == 15
    assert m.AD_over_MD == pytest.approx(15 / 31, abs=1e-15)


def test_metrics_match_linear_scan_and_scale_invariance():
    rng = np.random.default_rng(0)
    for _ in range(300):
        K = int(rng.integers(2, 200))
        v = rng.uniform(5, 60, K)
        best, idx = -1.0, -1
        for k, x in enumerate(v):
            if x > best:
                best, idx = x, k
        m = kinematic_metrics(v)
        assert m.index_vmax == idx and m.v_max == best
        assert m.AD_over_MD == idx / K and m.MD == K / 15.0 and m.AD == idx / 15.0
        assert 0 <= m.AD_over_MD <= (K - 1) / K
        c = rng.uniform(0.1, 10)
        assert kinematic_metrics(c * v).index_vmax == idx


def test_too_short_segment():
    with pytest.raises(InputError):
        kinematic_metrics([3.0])


# -- Wilcoxon -----------------------------------------------------------------------

def test_all_zero_differences_insufficient():
    x = np.arange(8.0)
    with pytest.raises(InsufficientDataError):
        wilcoxon_signed_rank(x, x)


def test_shift_by_ten():
    x = np.arange(1.0, 7.0)
    r = wilcoxon_signed_rank(x, x + 10)
    assert r.W == 0 and r.method == "exact"
    assert r.p_value == pytest.approx(2 / 64, abs=1e-15)
    assert r.significant_at_0_05 and not r.significant_at_0_01


def test_exact_matches_brute_force_up_to_12():
    rng = np.random.default_rng(1)
    for n in range(5, 13):
        for trial in range(100):
            x = rng.normal(size=n)
            y = x + rng.normal(loc=rng.uniform(-1, 1), size=n)
            if trial % 2:
                # introduce ties and occasional zero differences
                x, y = np.round(x, 1), np.round(y, 1)
            d = x - y
            if np.count_nonzero(d) < 5:
                with pytest.raises(InsufficientDataError):
                    wilcoxon_signed_rank(x, y)
                continue
            assert abs(wilcoxon_signed_rank(x, y).p_value - brute_force_p(d)) <= 1e-12


def test_symmetry_under_swap():
    rng = np.random.default_rng(2)
    for n in (6, 15, 40):
        x, y = rng.normal(size=n), rng.normal(size=n)
        a, b = wilcoxon_signed_rank(x, y), wilcoxon_signed_rank(y, x)
        assert a.p_value == pytest.approx(b.p_value, abs=1e-15)
        assert a.W == b.W and a.w_plus == b.w_minus


def test_exact_against_scipy_without_ties():
    rng = np.random.default_rng(3)
    for n in (8, 17, 25):
        x, y = rng.normal(size=n), rng.normal(0.3, size=n)
        ref = stats.wilcoxon(x, y, method="exact")
        assert wilcoxon_signed_rank(x, y).p_value == pytest.approx(ref.pvalue, abs=1e-12)


def test_normal_approximation_against_scipy():
    rng = np.random.default_rng(4)
    for n in (26, 60, 200):
        x = np.round(rng.normal(size=n), 1)
        y = np.round(rng.normal(0.2, size=n), 1)
        r = wilcoxon_signed_rank(x, y)
        ref = stats.wilcoxon(x, y, zero_method="wilcox", correction=True, method="approx")
        assert r.method == "normal"
        assert r.W == ref.statistic
        assert r.p_value == pytest.approx(ref.pvalue, rel=1e-9)


def test_length_mismatch_rejected():
    with pytest.raises(InputError):
        wilcoxon_signed_rank(np.zeros(6), np.zeros(7))


def test_average_ranks():
    np.testing.assert_array_equal(average_ranks(np.array([3.0, 1.0, 3.0, 2.0])), [3.5, 1, 3.5, 2])


# -- classification ---------------------------------------------------------------------

def test_perfect_report():
    truth = ["C"] * 10 + ["NC"] * 10
    r = classification_report(truth, truth)
    assert r.accuracy == 1.0 and r.f1 == 1.0 and r.n == 20


def test_f1_identity_from_published_rates():
    # recall 96.25 % and precision 50.33 % reported together with F1 66.09 %
    assert 100 * f1_score(0.5033, 0.9625) == pytest.approx(66.09, abs=0.05)


def test_counting_oracle():
    rng = np.random.default_rng(5)
    for _ in range(200):
        n = int(rng.integers(1, 50))
        pred = rng.choice(["C", "NC"], n).tolist()
        true = rng.choice(["C", "NC"], n).tolist()
        r = classification_report(pred, true)
        counts = {}
        for p, t in zip(pred, true):
            counts[(t, p)] = counts.get((t, p), 0) + 1
        assert r.TP == counts.get(("C", "C"), 0) and r.FN == counts.get(("C", "NC"), 0)
        assert r.FP == counts.get(("NC", "C"), 0) and r.TN == counts.get(("NC", "NC"), 0)
        assert r.accuracy == (r.TP + r.TN) / n
        assert r.support_c + r.support_nc == n


def test_zero_denominators_are_absent():
    r = classification_report(["NC", "NC"], ["NC", "NC"])
    assert r.precision is None and r.recall is None and r.f1 is None and r.accuracy == 1.0
    with pytest.raises(InputError):
        classification_report(["C"], ["C", "NC"])


# -- latency and summaries -------------------------------------------------------------------

def test_latency_examples():
    assert latency_stats([100]).median == 100 and latency_stats([100]).median_absolute_deviation == 0
    s = latency_stats([1, 2, 3, 4])
    assert (s.median, s.median_absolute_deviation) == (2.5, 1.0)
    with pytest.raises(InputError):
        latency_stats([])


def test_latency_matches_sort_oracle():
    rng = np.random.default_rng(6)

    def med(xs):
        xs = sorted(xs)
        n = len(xs)
        return xs[n // 2] if n % 2 else 0.5 * (xs[n // 2 - 1] + xs[n // 2])

    for _ in range(100):
        t = rng.exponential(50, int(rng.integers(1, 40))).tolist()
        m = med(t)
        s = latency_stats(t)
        assert s.median == pytest.approx(m, abs=1e-12)
        assert s.median_absolute_deviation == pytest.approx(med([abs(x - m) for x in t]), abs=1e-12)


def test_box_summary_whiskers():
    v = np.array([1, 2, 3, 4, 5, 6, 7, 8, 100.0])
    b = box_summary(v, "C")
    assert (b.q1, b.median, b.q3) == (3.0, 5.0, 7.0)
    assert b.whisker_low == 1.0 and b.whisker_high == 8.0


def test_report_outputs(tmp_path):
    r = classification_report(["C", "NC", "C"], ["C", "NC", "NC"])
    text = format_report_text(r, latency_stats([1.0, 3.0]), "t")
    assert "accuracy   66.67%" in text
    write_report_csv(tmp_path / "r.csv", r)
    write_box_csv(tmp_path / "b.csv", [box_summary([1, 2, 3], "C")])
    assert (tmp_path / "r.csv").read_text().startswith("metric,value")
