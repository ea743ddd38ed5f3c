import math
import warnings

import numpy as np
import pytest
import scipy.stats
from hypothesis import given, settings, strategies as st

from ordfri import lp
from ordfri.data import Relevance
from ordfri.datagen import generate, preset
from ordfri.relevance import RelevanceInterval, RelevanceParams
from ordfri.thresholding import (NoisePopulations, PredictionIntervals, betainc_reg, classify,
                                 classify_one, draw_seed, noise_populations, permute_feature,
                                 prediction_interval, prediction_intervals, t_ppf)


@given(st.floats(0.501, 0.99999), st.floats(1.0, 500.0))
@settings(max_examples=200)
def test_t_ppf_matches_reference(q, df):
    assert t_ppf(q, df) == pytest.approx(scipy.stats.t.ppf(q, df), rel=1e-8, abs=1e-9)


@given(st.floats(0.001, 0.999), st.floats(0.1, 50.0), st.floats(0.1, 50.0))
@settings(max_examples=200)
def test_betainc_matches_reference(x, a, b):
    assert betainc_reg(a, b, x) == pytest.approx(scipy.special.betainc(a, b, x), rel=1e-9, abs=1e-12)


def test_t_ppf_known_values():
    assert t_ppf(0.9995, 49) == pytest.approx(3.50, abs=5e-3)
    assert t_ppf(0.975, 1) == pytest.approx(12.7062047, rel=1e-7)
    assert t_ppf(0.5, 7) == 0.0
    assert t_ppf(0.05, 10) == pytest.approx(-t_ppf(0.95, 10))
    for q, df in ((0.0, 3), (1.0, 3), (0.9, 0)):
        with pytest.raises(ValueError):
            t_ppf(q, df)


def test_prediction_interval_formula():
    rng = np.random.default_rng(0)
    pop = rng.gamma(2.0, 0.1, size=50)
    n = pop.size
    expected = pop.mean() + scipy.stats.t.ppf(0.9995, n - 1) * pop.std(ddof=1) * math.sqrt(1 + 1 / n)
    assert prediction_interval(pop, 0.999) == pytest.approx(expected, rel=1e-9)


def test_prediction_interval_degenerate_populations():
    assert prediction_interval(np.zeros(10)) == 0.0
    assert prediction_interval(np.full(10, 0.3)) == pytest.approx(0.3, abs=1e-12)
    # clamped at zero
    assert prediction_interval([-5.0, -5.1, -4.9], 0.5) == 0.0
    with pytest.raises(ValueError):
        prediction_interval([1.0])
    with pytest.raises(ValueError):
        prediction_interval([1.0, 2.0], 1.0)


@given(st.lists(st.floats(0.0, 10.0), min_size=3, max_size=40), st.floats(0.5, 0.999))
def test_prediction_interval_above_mean_and_monotone_in_p(pop, p):
    lo = prediction_interval(pop, p)
    assert lo >= np.mean(pop) - 1e-12
    assert prediction_interval(pop, min(0.9999, p + 0.0005)) >= lo - 1e-12


PIS = PredictionIntervals(upper_minrel=0.1, upper_maxrel=0.2)


def test_classify_examples():
    assert classify_one(0.5, 0.9, PIS) is Relevance.STRONG
    assert classify_one(0.0, 0.9, PIS) is Relevance.WEAK
    assert classify_one(0.1, 0.2, PIS) is Relevance.IRRELEVANT  # ties are not above
    assert classify_one(0.0, 0.0, PIS) is Relevance.IRRELEVANT


def test_classify_warns_on_inconsistent_interval():
    with pytest.warns(RuntimeWarning, match="classified Weak"):
        assert classify_one(0.15, 0.18, PIS) is Relevance.WEAK


def test_classify_failed_intervals_are_irrelevant():
    ivs = [RelevanceInterval(0, 0.5, 0.9), RelevanceInterval(1, math.nan, math.nan, error="boom")]
    assert classify(ivs, PIS) == [Relevance.STRONG, Relevance.IRRELEVANT]


RANK = {Relevance.IRRELEVANT: 0, Relevance.WEAK: 1, Relevance.STRONG: 2}


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_classify_monotone_in_bounds(lo, width, dlo, dhi):
    hi = lo + width
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        a = classify_one(lo, hi, PIS)
        b = classify_one(lo + dlo, hi + dlo + dhi, PIS)
    assert RANK[b] >= RANK[a]


def test_draw_seed_stable_and_distinct():
    seeds = [draw_seed(7, k) for k in range(100)]
    assert len(set(seeds)) == 100
    assert seeds == [draw_seed(7, k) for k in range(100)]
    assert draw_seed(8, 0) != draw_seed(7, 0)


@given(st.integers(0, 2 ** 32))
@settings(max_examples=20)
def test_permute_feature_properties(seed):
    data, _ = generate(preset("set1", seed=0))
    out = permute_feature(data, 3, seed)
    assert np.array_equal(np.delete(out.X, 3, axis=1), np.delete(data.X, 3, axis=1))
    assert np.array_equal(np.sort(out.X[:, 3]), np.sort(data.X[:, 3]))
    assert np.array_equal(out.y, data.y)
    assert np.array_equal(out.X, permute_feature(data, 3, seed).X)
    with pytest.raises(IndexError):
        permute_feature(data, data.n, seed)


def test_populations_size_reproducible_and_counted():
    data, _ = generate(preset("set3", seed=2))
    params = RelevanceParams(C=1.0)
    before = lp.solve_count()
    a = noise_populations(data, params, n_perm=8, seed=5)
    assert lp.solve_count() - before == a.lp_count == 8 * 4
    assert a.n_perm == 8 and len(a.features) == 8 and a.failures == 0
    b = noise_populations(data, params, n_perm=8, seed=5, workers=2)
    assert np.array_equal(a.maxrel_samples, b.maxrel_samples)
    assert np.array_equal(a.minrel_samples, b.minrel_samples)
    assert a.features == b.features
    c = noise_populations(data, params, n_perm=8, seed=6)
    assert not np.array_equal(a.maxrel_samples, c.maxrel_samples)
    assert np.all(a.minrel_samples <= a.maxrel_samples + 1e-9)
    pis = prediction_intervals(a)
    assert pis.p == 0.999 and pis.upper_maxrel > 0


def test_populations_json_roundtrip():
    pops = NoisePopulations(np.array([0.0, 0.1]), np.array([0.2, 0.3]), 4, (1, 2), 0, 8)
    back = NoisePopulations.from_json(pops.to_json())
    assert np.array_equal(back.maxrel_samples, pops.maxrel_samples) and back.features == (1, 2)


def test_populations_need_two_draws():
    data, _ = generate(preset("set1", seed=0))
    with pytest.raises(ValueError):
        noise_populations(data, n_perm=1)
