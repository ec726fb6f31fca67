"""Acceptance criteria 1-12 at their stated scales and tolerances.

Each test records one PASS/FAIL line, collected in the ``acceptance
criteria`` section of the pytest terminal summary.
"""

from fractions import Fraction

import numpy as np
import pytest

from exchangeable import JitterConfig, RegionSpec, full_conformal_real, split_conformal
from exchangeable.aggregate import (AggregationSpec, bonferroni_splits, comparison_counts, jackknife_plus,
                                    offending_points, split_permutation)
from exchangeable.harness import (Generator, binomial_report, estimate_coverage, estimate_power, estimate_type1,
                                  full_band, pvalue_superuniformity, rank_cdf_check, rank_uniformity_chi2,
                                  split_coverage)
from exchangeable.rank_tests import (independence_test, independence_test_split, spearman_null, two_sample_test,
                                     two_sample_test_split, wilcoxon_null)
from exchangeable.ranks import check_permutation_condition, stream
from exchangeable.transforms import JointRecipe, Recipe

pytestmark = pytest.mark.slow


def _fmt(rep):
    return f"{rep.estimate:.4f} (se {rep.se:.4f}, band [{rep.band[0]:.4f}, {rep.band[1]:.4f}])"


def test_criterion_01_rank_uniformity(acceptance_log):
    iid = rank_uniformity_chi2(Generator("iid-normal"), 3, 60_000, seed=1)
    shock = rank_uniformity_chi2(Generator("common-shock"), 3, 60_000, seed=2)
    trend = rank_uniformity_chi2(Generator("trending"), 3, 60_000, seed=3)
    ok = iid.passed and shock.passed and not trend.passed
    acceptance_log(1, ok, f"chi2 p iid={iid.estimate:.3g}, common-shock={shock.estimate:.3g} (> 0.001); "
                          f"trending={trend.estimate:.3g} (fails)")
    assert ok


def test_criterion_02_rank_cdf(acceptance_log):
    reps = rank_cdf_check(Generator("iid-normal"), 5, [1.5, 2.0, 3.7], 50_000, seed=4)
    ok = all(r.passed for r in reps)
    detail = "; ".join(f"t={r.extra['t']}: {r.estimate:.4f} vs {r.band[0]:.1f} (3se {3 * r.se:.4f})" for r in reps)
    acceptance_log(2, ok, detail)
    assert ok


def test_criterion_03_full_conformal(acceptance_log):
    rep = estimate_coverage(Generator("iid-normal"),
                            lambda d, a, cfg: full_conformal_real(d, RegionSpec(a, jitter=cfg)),
                            19, 0.1, 20_000, full_band(0.1, 19), seed=5)
    acceptance_log(3, rep.passed, f"coverage {_fmt(rep)}")
    assert rep.passed


SPLIT_TRANSFORMS = {
    "abs-mean": (Recipe("abs-deviation-mean"), 1),
    "norm-ball": (Recipe("norm-ball"), 2),
    "density-levelset": (Recipe("density-levelset"), 1),
    "bad-regression-residual": (Recipe("regression-residual", {"bandwidth": 1e6}), 2),
}


def test_criterion_04_split_coverage(acceptance_log):
    failures, worst = [], None
    count = 0
    for gi, kind in enumerate(("iid-normal", "gaussian-mixture", "common-shock")):
        for ti, (name, (recipe, dim)) in enumerate(SPLIT_TRANSFORMS.items()):
            reps = split_coverage(Generator(kind, dim=dim), recipe, 49, 24, [0.05, 0.1, 0.2], 20_000,
                                  seed=100 + 10 * gi + ti)
            for r in reps:
                count += 1
                lo, hi = r.band
                slack = max(lo - r.estimate, r.estimate - hi, 0.0) / r.se if r.se else 0.0
                worst = slack if worst is None else max(worst, slack)
                if not r.passed:
                    failures.append(f"{kind}/{name}/alpha={r.extra['alpha']}: {_fmt(r)}")
    ok = not failures
    acceptance_log(4, ok, f"{count - len(failures)}/{count} (generator, transform, alpha) cells inside band; "
                          f"largest excursion {worst:.2f} se" + ("; " + "; ".join(failures) if failures else ""))
    assert ok


def test_criterion_05_jackknife_plus(acceptance_log):
    recipe = Recipe("regression-residual")
    rep = estimate_coverage(
        Generator("regression"),
        lambda d, a, cfg: jackknife_plus(d, recipe, AggregationSpec("jackknife-plus", a, cfg)),
        30, 0.1, 5_000, (0.8, 1.0), seed=6)
    rng = stream(7)
    violations = 0
    for _ in range(10_000):
        N = int(rng.integers(2, 14))  # n + 1 points, n <= 12
        alpha = float(rng.uniform(0, 1))
        if rng.random() < 0.5:
            S = rng.integers(0, 4, size=(N, N)).astype(float)
        else:
            S = rng.normal(size=(N, N))
        w = comparison_counts(S)
        bad = int((w >= (1 - alpha) * N).sum())
        assert bad == offending_points(S, alpha)
        violations += bad > 2 * alpha * N + 1e-9
    ok = rep.passed and violations == 0
    acceptance_log(5, ok, f"coverage {_fmt(rep)}; counting bound violations {violations}/10000")
    assert ok


def test_criterion_06_bonferroni(acceptance_log):
    recipe = Recipe("abs-deviation-mean")

    def build(d, a, cfg):
        return bonferroni_splits(d, 5, AggregationSpec("bonferroni", a, cfg, K=5), recipe)

    rep = estimate_coverage(Generator("iid-normal"), build, 60, 0.1, 10_000, (0.9, 1.0), seed=8)
    sample = Generator("iid-normal").sample(stream(9), 60)
    nonvacuous = not any(r.vacuous for r in build(sample, 0.1, JitterConfig(seed=9)).splits)

    data = Generator("gaussian-mixture").sample(stream(10), 60)
    spec = AggregationSpec("bonferroni", 0.1, JitterConfig(seed=11), K=1, n1=30)
    one = bonferroni_splits(data, 1, spec, recipe)
    cfg = spec.jitter.spawn(0)
    ref = split_conformal(data[split_permutation(60, cfg.seed)], RegionSpec(0.1, 30, cfg), recipe)
    grid = np.linspace(-2, 12, 1401)
    identical = (one.splits[0].to_dict() == ref.to_dict()
                 and np.array_equal(one.contains(grid), ref.contains(grid)))
    ok = rep.passed and identical and nonvacuous
    acceptance_log(6, ok, f"coverage {_fmt(rep)}; per-split regions non-vacuous={nonvacuous}; "
                          f"K=1 bit-identical={identical}")
    assert ok


def test_criterion_07_pvalue_superuniformity(acceptance_log):
    levels = [k / 10 for k in range(1, 10)]
    reps = pvalue_superuniformity(Generator("iid-normal"), 9, levels, 50_000, seed=12)
    ok = all(r.passed for r in reps)
    worst = max(reps, key=lambda r: r.estimate - r.band[1])
    acceptance_log(7, ok, f"Pr(P <= k/10) <= k/10 + 3se for k=1..9; tightest level {worst.extra['level']}: "
                          f"{worst.estimate:.4f} (3se {3 * worst.se:.4f})")
    assert ok


def test_criterion_08_wilcoxon_null(acceptance_log):
    table = wilcoxon_null(2, 2).table()
    expected = {3: Fraction(1, 6), 4: Fraction(1, 6), 5: Fraction(2, 6), 6: Fraction(1, 6), 7: Fraction(1, 6)}
    means_ok = True
    for N in range(2, 31):
        for n in range(1, N):
            t = wilcoxon_null(n, N - n).table()
            means_ok &= sum(k * p for k, p in t.items()) == Fraction(n * (N + 1), 2)
    ok = table == expected and means_ok
    acceptance_log(8, ok, f"n=m=2 table exact={table == expected}; mean n(n+m+1)/2 exact for all n+m<=30={means_ok}")
    assert ok


def _normal_pair(dim, n, m):
    g = Generator("iid-normal", dim=dim)
    return lambda rng: (g.sample(rng, n), g.sample(rng, m))


def test_criterion_09_two_sample_type1(acceptance_log):
    sampler = _normal_pair(3, 25, 25)
    kmeans = Recipe("kmeans-cluster", {"k": 2})
    pooled, = estimate_type1(sampler, lambda x, y, cfg: two_sample_test(x, y, kmeans, 0.05, cfg),
                             [0.05], 20_000, seed=13)
    ratio = Recipe("density-ratio")
    split, = estimate_type1(sampler, lambda x, y, cfg: two_sample_test_split(x, y, 0.5, ratio, 0.05, cfg),
                            [0.05], 20_000, seed=14)
    ok = pooled.passed and split.passed
    acceptance_log(9, ok, f"pooled k-means {_fmt(pooled)}; split density-ratio {_fmt(split)}")
    assert ok


def test_criterion_10_spearman(acceptance_log):
    table = spearman_null(3).table()
    expected = {Fraction(-1): Fraction(1, 6), Fraction(-1, 2): Fraction(2, 6),
                Fraction(1, 2): Fraction(2, 6), Fraction(1): Fraction(1, 6)}
    sampler = _normal_pair(2, 20, 20)
    pca = Recipe("pca-norm-ball")
    alphas = [0.01, 0.05, 0.1]
    pooled = estimate_type1(sampler, lambda x, y, cfg: independence_test(x, y, pca, pca, 0.05, cfg),
                            alphas, 20_000, seed=15)
    joint = JointRecipe.from_marginals(pca, pca)
    split = estimate_type1(sampler, lambda x, y, cfg: independence_test_split(x, y, 0.5, joint, 0.05, cfg),
                           alphas, 20_000, seed=16)
    ok = table == expected and all(r.passed for r in pooled + split)
    rates = lambda reps: ", ".join(f"{r.estimate:.4f}@{r.extra['alpha']}" for r in reps)
    acceptance_log(10, ok, f"n=3 table exact={table == expected}; pooled type-I {rates(pooled)}; "
                           f"split type-I {rates(split)}")
    assert ok


def mean_centre(w):
    return w - w.mean()


def first_three(w):
    return w[:3] - w[3:].mean()


def leave_last_out(w):
    return w - w[:-1].mean()


def test_criterion_11_permutation_condition(acceptance_log):
    results = []
    for n in (4, 5, 6):
        cfg = JitterConfig(seed=20 + n)
        results.append(check_permutation_condition(mean_centre, n, n, 50, cfg).holds)
        results.append(check_permutation_condition(first_three, n, 3, 50, cfg).holds)
        results.append(not check_permutation_condition(leave_last_out, n, n, 50, cfg).holds)
    ok = all(results)
    acceptance_log(11, ok, f"full-mean holds, first-three holds, leave-last-out fails for n=4..6 "
                           f"({sum(results)}/9 outcomes as expected, 50 trials each)")
    assert ok


def test_criterion_12_power(acceptance_log):
    mix = Generator("gaussian-mixture", {"centers": (3.0, 7.0)})

    def separated(rng):
        # the two components of a well-separated mixture as the two samples
        z = mix.sample(rng, 200)
        low, high = z[z < 5], z[z >= 5]
        return low[:25], high[:25]

    kmeans = Recipe("kmeans-cluster", {"k": 2})
    pooled = estimate_power(separated, lambda x, y, cfg: two_sample_test(x, y, kmeans, 0.05, cfg), 0.05, 1000,
                            seed=30)

    def shifted(rng):
        return rng.normal(size=(50, 3)), rng.normal(size=(50, 3)) + [2.0, 0.0, 0.0]

    ratio = Recipe("density-ratio")
    split = estimate_power(shifted, lambda x, y, cfg: two_sample_test_split(x, y, 0.5, ratio, 0.05, cfg), 0.05,
                           1000, seed=31)
    ok = pooled.passed and split.passed
    acceptance_log(12, ok, f"rejection at alpha=0.05: separated mixture pooled {pooled.estimate:.3f}, "
                           f"shifted normals split {split.estimate:.3f} (both > alpha + 3se)")
    assert ok
