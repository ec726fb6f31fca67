import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from exchangeable import (JitterConfig, PredictionRegion, RegionSpec, conformal_index, cross_section, extract_interval,
                          full_conformal_general, full_conformal_real, split_conformal)
from exchangeable.conformal import ONE_SIDED_REAL, SCORE_THRESHOLDED, grid_runs, threshold_region
from exchangeable.ranks import rank_of_jittered
from exchangeable.transforms import (Recipe, UserDefinedTransform, fit_abs_deviation, fit_density_levelset,
                                     fit_norm_ball)

ABS_MEAN = Recipe("abs-deviation-mean")


def uniforms(seed, size):
    # independent re-derivation of the jitter draws
    return JitterConfig(seed=seed).rng().uniform(-1.0, 1.0, size)


class TestIndex:
    @pytest.mark.parametrize("m,alpha,expected", [(5, 0.5, 3), (20, 0.1, 18), (6, 0.4, 4), (10, 0.1, 9),
                                                  (26, 0.1, 24), (10, 0.0, 10), (10, 1.0, 0)])
    def test_values(self, m, alpha, expected):
        assert conformal_index(m, alpha) == expected

    @given(st.integers(1, 500), st.floats(0, 1))
    def test_matches_rational_ceiling(self, m, alpha):
        from fractions import Fraction
        x = m * (1 - Fraction(alpha))
        exact = math.ceil(x)
        assert conformal_index(m, alpha) in (exact, exact - 1)
        frac = x - math.floor(x)
        if frac == 0 or frac > Fraction(1, 10**6):
            assert conformal_index(m, alpha) == exact

    def test_bad_alpha(self):
        with pytest.raises(ValueError):
            conformal_index(5, 1.5)
        with pytest.raises(ValueError):
            RegionSpec(-0.1)


class TestFullReal:
    def test_order_statistic(self):
        data = [0.3, -1.2, 2.5, 0.9]
        r = full_conformal_real(data, RegionSpec(0.5, jitter=JitterConfig(seed=7)))
        u = uniforms(7, 5)
        w = np.sort(np.array(data) + 1e-8 * u[:4])
        assert r.order_index == 3 and r.mode == ONE_SIDED_REAL
        assert r.threshold == w[2] - 1e-8 * u[4]
        assert r.jitter_offset == 1e-8 * u[4]

    def test_alpha_zero_whole_line(self):
        r = full_conformal_real([1.0, 2.0, 3.0], RegionSpec(0.0))
        assert r.vacuous and r.threshold == math.inf and r.contains(1e300)

    def test_alpha_one_empty(self):
        r = full_conformal_real([1.0, 2.0, 3.0], RegionSpec(1.0))
        assert r.empty and not r.contains(-1e300)

    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=25), st.floats(0.01, 0.99), st.integers(0, 2**32))
    def test_membership_equals_rank_condition(self, data, alpha, seed):
        # z is kept iff its jittered rank among the n + 1 values is at most I
        cfg = JitterConfig(seed=seed)
        r = full_conformal_real(data, RegionSpec(alpha, jitter=cfg))
        u = uniforms(seed, len(data) + 1)
        for z in np.linspace(-60, 60, 41):
            rank = rank_of_jittered(np.append(data, z) + 1e-8 * u)[-1]
            assert r.contains(z) == (rank <= r.order_index)

    def test_empty_data(self):
        with pytest.raises(ValueError):
            full_conformal_real([], RegionSpec(0.1))


class TestSplit:
    def test_index_and_threshold(self):
        data = np.array([5.0, 1.0, 2.0, 3.0, 4.0, 0.5, 2.2, 9.0, -3.0])
        r = split_conformal(data, RegionSpec(0.4, n1=4, jitter=JitterConfig(seed=3)), ABS_MEAN)
        assert r.order_index == 4 and r.n_scores == 5
        centre = data[:4].mean()
        u = uniforms(3, 6)
        w = np.sort(np.abs(data[4:] - centre) + 1e-8 * u[:5])
        assert r.threshold == w[3] - 1e-8 * u[5]

    def test_two_sided_mean_interval(self, rng):
        data = rng.normal(size=40)
        r = split_conformal(data, RegionSpec(0.1, n1=20), ABS_MEAN)
        centre = data[:20].mean()
        z = np.linspace(-5, 5, 1001)
        assert np.array_equal(r.contains(z), np.abs(z - centre) <= r.threshold)
        (lo, hi), = extract_interval(r, z)
        assert lo == pytest.approx(centre - r.threshold, abs=0.011)
        assert hi == pytest.approx(centre + r.threshold, abs=0.011)

    def test_vacuous_flag(self):
        r = split_conformal(np.arange(6.0), RegionSpec(0.1, n1=3), ABS_MEAN)
        assert r.vacuous and r.threshold == math.inf and r.to_dict()["flags"]["vacuous"]

    def test_fit_uses_training_slice_only(self, rng):
        data = rng.normal(size=30)
        other = data.copy()
        other[15:] = rng.normal(size=15) * 10
        a = split_conformal(data, RegionSpec(0.2, n1=15), Recipe("density-levelset"))
        b = split_conformal(other, RegionSpec(0.2, n1=15), Recipe("density-levelset"))
        z = np.linspace(-3, 3, 50)
        assert np.array_equal(a.transform.scores(z), b.transform.scores(z))

    @pytest.mark.parametrize("n1", [None, 10, 12])
    def test_bad_n1(self, n1):
        with pytest.raises(ValueError):
            split_conformal(np.arange(10.0), RegionSpec(0.1, n1=n1), ABS_MEAN)
        with pytest.raises(ValueError):
            RegionSpec(0.1, n1=0)

    @given(st.integers(0, 2**32), st.floats(0.01, 0.98), st.floats(0.01, 0.98))
    def test_monotone_in_alpha(self, seed, a1, a2):
        lo, hi = sorted((a1, a2))
        data = np.random.default_rng(seed).normal(size=40)
        cfg = JitterConfig(seed=seed)
        r_lo = split_conformal(data, RegionSpec(lo, 20, cfg), ABS_MEAN)
        r_hi = split_conformal(data, RegionSpec(hi, 20, cfg), ABS_MEAN)
        z = np.linspace(-4, 4, 81)
        assert np.all(r_lo.contains(z) >= r_hi.contains(z))

    def test_reproducible(self, rng):
        data = rng.normal(size=(30, 2))
        spec = RegionSpec(0.1, 15, JitterConfig(seed=11))
        a = split_conformal(data, spec, Recipe("norm-ball"))
        b = split_conformal(data, spec, Recipe("norm-ball"))
        assert a.to_dict() == b.to_dict()


class TestSerialization:
    def test_round_trip(self, rng):
        data = rng.normal(size=(30, 2))
        r = split_conformal(data, RegionSpec(0.1, 15, JitterConfig(seed=4)), Recipe("norm-ball"))
        doc = json.loads(json.dumps(r.to_dict()))
        assert doc["schema_version"] == 1 and doc["type"] == "prediction-region"
        q = PredictionRegion.from_dict(doc)
        z = rng.normal(size=(50, 2)) * 2
        assert np.array_equal(q.contains(z), r.contains(z))
        assert q.threshold == r.threshold and q.jitter == r.jitter

    def test_infinite_threshold(self):
        r = full_conformal_real([1.0, 2.0], RegionSpec(0.0))
        doc = json.loads(json.dumps(r.to_dict()))
        assert PredictionRegion.from_dict(doc).threshold == math.inf

    def test_version_check(self):
        doc = full_conformal_real([1.0, 2.0], RegionSpec(0.5)).to_dict()
        doc["schema_version"] = 2
        with pytest.raises(ValueError):
            PredictionRegion.from_dict(doc)


def brute_force_full(data, candidates, alpha, seed):
    u = uniforms(seed, len(data) + 1)
    idx = math.ceil((len(data) + 1) * (1 - alpha) - 1e-9)
    keep = []
    for z in candidates:
        aug = np.append(data, z)
        w = np.abs(aug - aug.mean())
        jit = w + 1e-8 * u
        keep.append(np.sum(jit <= jit[-1]) <= idx)
    return np.array(keep)


class TestFullGeneral:
    def test_brute_force_abs_mean(self, rng):
        data = rng.normal(size=15)
        grid = np.linspace(-4, 4, 200)
        m = full_conformal_general(data, grid, ABS_MEAN, RegionSpec(0.2, jitter=JitterConfig(seed=9)))
        assert np.array_equal(m.included, brute_force_full(data, grid, 0.2, 9))
        assert 0 < m.included.sum() < 200

    def test_deepest_point_included(self, rng):
        data = rng.normal(size=12)
        f = fit_density_levelset(data)
        deepest = data[np.argmin(f.scores(data))]
        for alpha in (0.1, 0.5, 0.9):
            m = full_conformal_general(data, [deepest], Recipe("density-levelset"), RegionSpec(alpha))
            assert m.included[0]

    def test_alpha_zero_all(self, rng):
        m = full_conformal_general(rng.normal(size=5), np.linspace(-100, 100, 9), ABS_MEAN, RegionSpec(0.0))
        assert m.included.all()

    def test_order_free(self, rng):
        data = rng.normal(size=10)
        grid = np.linspace(-3, 3, 30)
        spec = RegionSpec(0.3, jitter=JitterConfig(seed=2))
        a = full_conformal_general(data, grid, ABS_MEAN, spec)
        b = full_conformal_general(data, grid[::-1], ABS_MEAN, spec)
        assert np.array_equal(a.included, b.included[::-1])

    def test_requires_invariance(self):
        bad = lambda d: UserDefinedTransform(lambda p: p[:, 0])
        with pytest.raises(ValueError, match="full conformal requires permutation invariance"):
            full_conformal_general([1.0, 2.0], [0.0], bad, RegionSpec(0.1))


class TestIntervals:
    def test_abs_deviation_tau_two(self):
        r = PredictionRegion(fit_abs_deviation([0.0]), 2.0, 1, 1, 0.0, 0.5, JitterConfig())
        grid = np.round(np.arange(-500, 501) * 0.01, 10)
        (lo, hi), = extract_interval(r, grid)
        assert lo == pytest.approx(-2) and hi == pytest.approx(2)

    def test_bimodal_two_intervals(self, rng):
        data = np.r_[rng.normal(3, 1, 150), rng.normal(7, 1, 150)]
        data = data[rng.permutation(300)]
        r = split_conformal(data, RegionSpec(0.2, n1=150), Recipe("density-levelset", {"bandwidth": 0.4}))
        runs = extract_interval(r, np.linspace(-2, 12, 1401))
        assert len(runs) == 2
        assert runs[0][0] < 3 < runs[0][1] < 5 < runs[1][0] < 7 < runs[1][1]

    def test_vacuous_spans_grid(self):
        r = full_conformal_real([1.0], RegionSpec(0.0))
        assert extract_interval(r, np.linspace(-1, 1, 5)) == [(-1.0, 1.0)]

    def test_unsorted_grid(self):
        r = full_conformal_real([1.0], RegionSpec(0.0))
        with pytest.raises(ValueError):
            extract_interval(r, [1.0, 0.0])

    def test_grid_runs(self):
        g = np.arange(6.0)
        assert grid_runs(g, [True, True, False, True, False, True]) == [(0, 1), (3, 3), (5, 5)]
        assert grid_runs(g, [False] * 6) == []


class TestCrossSection:
    def test_whole_space(self):
        r = PredictionRegion(fit_norm_ball(np.eye(2)), math.inf, 5, 4, 0.0, 0.0, JitterConfig())
        cs = cross_section(r, 0.0, np.linspace(-1, 1, 11))
        assert cs.intervals == [(-1.0, 1.0)] and not cs.extrapolation

    def test_regression_residual_symmetric(self, rng):
        x = rng.uniform(-2, 2, 80)
        pairs = np.column_stack([x, np.sin(2 * x) + rng.normal(0, 0.3, 80)])
        r = split_conformal(pairs, RegionSpec(0.1, n1=40), Recipe("regression-residual"))
        grid = np.linspace(-4, 4, 8001)
        for q in (-1.5, 0.0, 1.0, 10.0):
            cs = cross_section(r, q, grid)
            mu = r.transform.model.predict([q])[0]
            (lo, hi), = cs.intervals
            assert lo == pytest.approx(mu - r.threshold, abs=2e-3)
            assert hi == pytest.approx(mu + r.threshold, abs=2e-3)

    def test_far_x_extrapolates(self, rng):
        pts = rng.normal(size=(100, 2))
        r = split_conformal(pts, RegionSpec(0.1, n1=50), Recipe("norm-ball", {"whiten": "full-covariance"}))
        cs = cross_section(r, 10.0, np.linspace(-5, 5, 501))
        assert cs.intervals == [] and cs.extrapolation


def test_threshold_region_mode():
    r = threshold_region([1.0, 2.0], fit_abs_deviation([0.0]), 0.5, JitterConfig())
    assert r.mode == SCORE_THRESHOLDED
