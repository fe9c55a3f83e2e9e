import math
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from regime_insurance.harness import histogram
from regime_insurance.metrics import (
    TerminalSample,
    compute_report,
    kappa,
    omega,
    sharpe,
    shortfall_stats,
    threshold_levels,
)


def sample(values, v0=100.0, floor=100.0, r=0.04, T=1.0):
    return TerminalSample(np.asarray(values, dtype=float), v0, floor, r, T)


values_st = st.lists(st.floats(50, 150), min_size=2, max_size=200)


class TestOmega:
    def test_enumeration(self):
        assert omega(sample([98, 100, 102, 104]), 100.0) == 3.0

    def test_below_min_is_inf(self):
        assert omega(sample([98, 100]), 90.0) == math.inf

    def test_constant_at_threshold_is_nan(self):
        assert math.isnan(omega(sample([100, 100]), 100.0))

    @settings(max_examples=100, deadline=None)
    @given(values_st)
    def test_mean_threshold_is_one(self, v):
        s = sample(v)
        o = omega(s, float(s.values.mean()))
        if np.isfinite(o):
            assert abs(o - 1) < 1e-9


    @settings(max_examples=60, deadline=None)
    @given(values_st)
    def test_nonincreasing_in_threshold(self, v):
        s = sample(v)
        o = [omega(s, L) for L in np.linspace(min(v) - 1, max(v) + 1, 40)]
        o = np.array([x for x in o if not np.isnan(x)])
        finite = o[np.isfinite(o)]
        n_inf = int(np.sum(np.isinf(o)))
        assert np.all(np.isinf(o[:n_inf]))  # infinities only below the sample minimum
        assert np.all(np.diff(finite) <= 1e-12 * np.maximum(1, finite[:-1]))

    @settings(max_examples=60, deadline=None)
    @given(values_st, st.floats(60, 140), st.sampled_from([-8.0, 0.5, 16.0]))
    def test_translation(self, v, L, c):
        # dyadic shifts keep the arithmetic exact
        a, b = sample(v), sample(np.asarray(v) + c, floor=100.0 + c)
        assert omega(b, L + c) == pytest.approx(omega(a, L), rel=1e-9, nan_ok=True)
        pa, ea = shortfall_stats(a)
        pb, eb = shortfall_stats(b)
        assert pa == pb
        assert eb == pytest.approx(ea, rel=1e-9, nan_ok=True)


class TestKappa:
    def test_enumeration(self):
        assert kappa(sample([98, 100, 102, 104]), 2, 100.0) == 1.0

    def test_kappa1_example(self):
        s = sample([98, 100, 102, 104])
        assert kappa(s, 1, 100.0) == 2.0 == omega(s, 100.0) - 1

    @settings(max_examples=100, deadline=None)
    @given(values_st, st.floats(50, 150))
    def test_kappa1_is_omega_minus_one(self, v, L):
        s = sample(v)
        o, k = omega(s, L), kappa(s, 1, L)
        if np.isfinite(o) and np.isfinite(k):
            assert k == pytest.approx(o - 1, rel=1e-12, abs=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(values_st, st.sampled_from([1, 2, 3]))
    def test_mean_threshold_is_zero(self, v, n):
        s = sample(v)
        k = kappa(s, n, float(s.values.mean()))
        if np.isfinite(k):
            assert abs(k) < 1e-9

    def test_order(self):
        with pytest.raises(ValueError):
            kappa(sample([1, 2]), 0, 1.0)


class TestSharpe:
    def test_example(self):
        assert sharpe(sample([105, 115])) == pytest.approx(0.8371, abs=1e-4)

    def test_riskless_sample_undefined(self):
        assert math.isnan(sharpe(sample(np.full(5, 100 * math.exp(0.04)))))


class TestShortfall:
    def test_examples(self):
        p, es = shortfall_stats(sample([99, 101, 103]))
        assert p == pytest.approx(1 / 3) and es == 1.0
        p, es = shortfall_stats(sample([100, 101]))
        assert p == 0.0 and math.isnan(es)
        p, es = shortfall_stats(sample([95, 95, 95]))
        assert p == 1.0 and es == 5.0


class TestHistogram:
    def test_example(self):
        h = histogram(sample([1, 2, 3, 4]), 2)
        np.testing.assert_array_equal(h.edges, [1, 2.5, 4])
        np.testing.assert_array_equal(h.counts, [2, 2])

    def test_constant(self):
        h = histogram(sample([3.0] * 7), 10)
        assert h.counts.sum() == 7

    @settings(max_examples=100, deadline=None)
    @given(values_st, st.integers(1, 60))
    def test_conserves_count(self, v, bins):
        assert histogram(sample(v), bins).counts.sum() == len(v)


def test_report_fields():
    r = compute_report(sample([98, 100, 102, 104, 106]), (0.01, 0.02), (2, 3))
    assert list(r.omega) == threshold_levels(100.0, (0.01, 0.02))
    assert set(r.kappa) == {(n, L) for n in (2, 3) for L in r.omega}
    assert r.shortfall_prob == 0.2


def test_sample_validation():
    with pytest.raises(ValueError):
        sample([1.0, np.nan])
    with pytest.raises(ValueError):
        sample([])


def test_metric_suite_fast():
    v = np.random.default_rng(0).normal(104, 5, 10_000)
    tic = time.perf_counter()
    for _ in range(20):
        compute_report(sample(v))
    assert time.perf_counter() - tic < 1.0
