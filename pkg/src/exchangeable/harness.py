"""Exchangeable data generators and Monte Carlo checks of finite-sample guarantees.

Replication ``r`` of every check draws its data from ``stream(seed, r)``
and its jitter from ``derive_seed(seed, r, 1)``, so an estimate depends only
on the master seed and the set of replication indices. Running
replications ``0..R-1`` in pieces (``start=...``) and adding the counts
gives exactly the one-shot result.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .aggregate import conformal_pvalue
from .conformal import threshold_region
from .ranks import JitterConfig, derive_seed, ranks, stream

REPORT_SCHEMA_VERSION = 1
SE_MULTIPLIER = 3.0
CHI2_PASS = 1e-3
MIN_COVERAGE_REPLICATIONS = 1000

GENERATOR_KINDS = (
    "iid-normal", "iid-uniform", "iid-bernoulli", "gaussian-mixture", "common-shock",
    "equicorrelated-gaussian", "regression", "trending",
)
MEAN_FUNCTIONS = {
    "sin": lambda x: np.sin(2.0 * x),
    "linear": lambda x: x,
    "cubic": lambda x: x ** 3,
}


@dataclass(frozen=True)
class Generator:
    """A law for a sequence of ``n`` points.

    ``sample(rng, n)`` returns shape ``(n,)`` for scalar kinds with
    ``dim == 1`` and ``(n, dim)`` otherwise. The regression kind returns
    rows ``(x_1..x_dim, y)``. Every kind except ``trending`` is exchangeable
    (``equicorrelated-gaussian`` only when ``mu1 == mu2``).
    """

    kind: str
    params: dict = field(default_factory=dict)
    dim: int = 1

    def __post_init__(self):
        if self.kind not in GENERATOR_KINDS:
            raise ValueError(f"unknown generator {self.kind!r}; expected one of {GENERATOR_KINDS}")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")

    @property
    def exchangeable(self) -> bool:
        if self.kind == "trending":
            return False
        if self.kind == "equicorrelated-gaussian":
            return self.params.get("mu1", 0.0) == self.params.get("mu2", 0.0)
        return True

    def with_dim(self, dim: int) -> "Generator":
        return Generator(self.kind, dict(self.params), dim)

    def _shape(self, n: int) -> tuple:
        return (n,) if self.dim == 1 else (n, self.dim)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        p = self.params
        shape = self._shape(n)
        if self.kind == "iid-normal":
            return rng.normal(p.get("mu", 0.0), p.get("sigma", 1.0), size=shape)
        if self.kind == "iid-uniform":
            return rng.uniform(p.get("low", 0.0), p.get("high", 1.0), size=shape)
        if self.kind == "iid-bernoulli":
            return (rng.random(shape) < p.get("p", 0.5)).astype(float)
        if self.kind == "gaussian-mixture":
            centers = np.asarray(p.get("centers", (3.0, 7.0)), dtype=float)
            k = centers.shape[0]
            centers = np.broadcast_to(centers.reshape(k, -1), (k, self.dim))
            w = np.asarray(p.get("weights", np.full(k, 1.0 / k)), dtype=float)
            lab = rng.choice(k, size=n, p=w / w.sum())
            out = centers[lab] + rng.normal(0.0, p.get("sigma", 1.0), size=(n, self.dim))
            return out.reshape(shape)
        if self.kind == "common-shock":
            base = rng.normal(p.get("mu", 0.0), p.get("sigma", 1.0), size=(n, self.dim))
            shock = rng.normal(0.0, p.get("shock", 1.0), size=self.dim)
            return (base + shock).reshape(shape)
        if self.kind == "equicorrelated-gaussian":
            return self._equicorrelated(rng, n)
        if self.kind == "regression":
            x = rng.uniform(p.get("low", -2.0), p.get("high", 2.0), size=(n, self.dim))
            mu = MEAN_FUNCTIONS[p.get("mean_fn", "sin")](x).sum(axis=1)
            y = mu + rng.normal(0.0, p.get("noise", 0.5), size=n)
            return np.column_stack([x, y])
        # trending: position-dependent drift
        drift = p.get("drift", 0.5) * np.arange(n, dtype=float)
        noise = rng.normal(0.0, p.get("sigma", 1.0), size=shape)
        return noise + (drift if self.dim == 1 else drift[:, None])

    def _equicorrelated(self, rng, n: int) -> np.ndarray:
        p = self.params
        rho = float(p.get("rho", 0.5))
        if self.dim != 1:
            raise ValueError("equicorrelated-gaussian is scalar")
        if not -1.0 / max(n - 1, 1) <= rho <= 1.0:
            raise ValueError(f"rho={rho} is not a valid equicorrelation for n={n}")
        mean = np.full(n, float(p.get("mu2", 0.0)))
        mean[0] = float(p.get("mu1", 0.0))
        if rho >= 0:
            return mean + math.sqrt(rho) * rng.normal() + math.sqrt(1.0 - rho) * rng.normal(size=n)
        cov = np.full((n, n), rho) + (1.0 - rho) * np.eye(n)
        return mean + np.linalg.cholesky(cov) @ rng.normal(size=n)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params), "dim": self.dim}


@dataclass(frozen=True)
class MonteCarloReport:
    """Outcome of one check: ``passed`` iff the estimate lies within ``band`` widened by 3 se."""

    check: str
    replications: int
    estimate: float
    se: float
    band: tuple[float, float]
    passed: bool
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"schema_version": REPORT_SCHEMA_VERSION, "check": self.check, "replications": self.replications,
                "estimate": self.estimate, "se": self.se, "band": list(self.band), "passed": self.passed,
                "extra": self.extra}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    CSV_FIELDS = ("check", "replications", "estimate", "se", "band_lo", "band_hi", "passed")

    def csv_row(self) -> dict:
        return {"check": self.check, "replications": self.replications, "estimate": repr(self.estimate),
                "se": repr(self.se), "band_lo": repr(self.band[0]), "band_hi": repr(self.band[1]),
                "passed": int(self.passed)}


def reports_to_csv(reports: Sequence[MonteCarloReport]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=MonteCarloReport.CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in reports:
        w.writerow(r.csv_row())
    return buf.getvalue()


def binomial_report(check: str, hits: int, R: int, band: tuple[float, float], extra: dict | None = None) -> MonteCarloReport:
    """Proportion ``hits / R`` checked against ``band`` with a ``3 se`` tolerance."""
    if R < 1:
        raise ValueError("need at least one replication")
    est = hits / R
    se = math.sqrt(est * (1.0 - est) / R)
    lo, hi = float(band[0]), float(band[1])
    ok = lo - SE_MULTIPLIER * se <= est <= hi + SE_MULTIPLIER * se
    return MonteCarloReport(check, R, est, se, (lo, hi), bool(ok), dict(extra or {}, hits=int(hits)))


def _replications(seed: int, R: int, start: int):
    for r in range(start, start + R):
        yield stream(seed, r), JitterConfig(seed=derive_seed(seed, r, 1))


def split_band(alpha: float, n: int, n1: int) -> tuple[float, float]:
    """Exact coverage range of a split region with ``n - n1`` calibration points."""
    return 1.0 - alpha, 1.0 - alpha + 1.0 / (n - n1 + 1)


def full_band(alpha: float, n: int) -> tuple[float, float]:
    return 1.0 - alpha, 1.0 - alpha + 1.0 / (n + 1)


def estimate_coverage(generator: Generator, region_builder: Callable, n: int, alpha: float, R: int,
                      band: tuple[float, float] | None = None, seed: int = 0, start: int = 0,
                      check: str = "coverage") -> MonteCarloReport:
    """Fraction of replications whose region, built on ``n`` points, contains point ``n + 1``.

    ``region_builder(data, alpha, cfg)`` returns an object with ``contains``.
    ``band`` defaults to ``[1 - alpha, 1]``.
    """
    if R < MIN_COVERAGE_REPLICATIONS:
        raise ValueError(f"coverage checks need R >= {MIN_COVERAGE_REPLICATIONS}")
    hits = 0
    for rng, cfg in _replications(seed, R, start):
        z = generator.sample(rng, n + 1)
        hits += bool(region_builder(z[:n], alpha, cfg).contains(z[n]))
    return binomial_report(check, hits, R, band or (1.0 - alpha, 1.0),
                           {"generator": generator.to_dict(), "n": n, "alpha": alpha, "seed": seed, "start": start})


def split_coverage(generator: Generator, recipe, n: int, n1: int, alphas: Sequence[float], R: int,
                   seed: int = 0, start: int = 0, check: str = "coverage-split") -> list[MonteCarloReport]:
    """Split-region coverage at several levels, one transform fit per replication.

    Equivalent to calling :func:`estimate_coverage` with a
    :func:`split_conformal` builder for each level.
    """
    if R < MIN_COVERAGE_REPLICATIONS:
        raise ValueError(f"coverage checks need R >= {MIN_COVERAGE_REPLICATIONS}")
    hits = np.zeros(len(alphas), dtype=np.int64)
    for rng, cfg in _replications(seed, R, start):
        z = generator.sample(rng, n + 1)
        f = recipe(z[:n1])
        cal = f.scores(z[n1:n])
        test = f(z[n])
        for a, alpha in enumerate(alphas):
            hits[a] += test <= threshold_region(cal, f, alpha, cfg).threshold
    return [binomial_report(check, int(h), R, split_band(alpha, n, n1),
                            {"generator": generator.to_dict(), "n": n, "n1": n1, "alpha": alpha, "seed": seed,
                             "start": start})
            for h, alpha in zip(hits, alphas)]


def estimate_rejections(sampler: Callable, test_builder: Callable, alphas: Sequence[float], R: int,
                        seed: int = 0, start: int = 0) -> np.ndarray:
    """Rejection counts at each level; ``test_builder(*sampler(rng), cfg)`` returns a report with a p-value."""
    counts = np.zeros(len(alphas), dtype=np.int64)
    levels = np.asarray(alphas, dtype=float)
    for rng, cfg in _replications(seed, R, start):
        counts += test_builder(*sampler(rng), cfg).p_value <= levels
    return counts


def estimate_type1(sampler: Callable, test_builder: Callable, alphas: Sequence[float], R: int,
                   seed: int = 0, start: int = 0, check: str = "type1") -> list[MonteCarloReport]:
    """Rejection rate under a null sampler, against the band ``[0, alpha]``."""
    counts = estimate_rejections(sampler, test_builder, alphas, R, seed, start)
    return [binomial_report(check, int(c), R, (0.0, alpha), {"alpha": alpha, "seed": seed, "start": start})
            for c, alpha in zip(counts, alphas)]


def estimate_power(sampler: Callable, test_builder: Callable, alpha: float, R: int, seed: int = 0,
                   check: str = "power") -> MonteCarloReport:
    """Rejection rate under an alternative; passes iff it exceeds ``alpha`` by more than 3 se."""
    c = int(estimate_rejections(sampler, test_builder, [alpha], R, seed)[0])
    rep = binomial_report(check, c, R, (alpha, 1.0), {"alpha": alpha, "seed": seed})
    passed = rep.estimate > alpha + SE_MULTIPLIER * rep.se
    return MonteCarloReport(rep.check, R, rep.estimate, rep.se, rep.band, passed, rep.extra)


def permutation_index(r: Sequence[int]) -> int:
    """Lexicographic index of a permutation of ``1..n`` among all ``n!``."""
    r = list(r)
    n = len(r)
    idx = 0
    for i in range(n):
        smaller = sum(1 for j in range(i + 1, n) if r[j] < r[i])
        idx += smaller * math.factorial(n - 1 - i)
    return idx


def rank_uniformity_chi2(generator: Generator, n: int, R: int, seed: int = 0,
                         check: str = "rank-uniformity") -> MonteCarloReport:
    """Chi-square test of the jittered rank vector against uniform on the ``n!`` permutations.

    Passes iff the chi-square p-value exceeds 0.001. The report's
    ``estimate`` is that p-value.
    """
    cells = math.factorial(n)
    if n > 5:
        raise ValueError("rank uniformity check supports n <= 5")
    if R < 100 * cells:
        raise ValueError(f"need R >= 100 * n! = {100 * cells}")
    counts = np.zeros(cells, dtype=np.int64)
    for rng, cfg in _replications(seed, R, 0):
        w = np.asarray(generator.sample(rng, n), dtype=float)
        if w.ndim != 1:
            raise ValueError("rank uniformity needs a scalar generator")
        counts[permutation_index(ranks(w, cfg).ranks)] += 1
    stat, p = stats.chisquare(counts)
    return MonteCarloReport(check, R, float(p), 0.0, (CHI2_PASS, 1.0), bool(p > CHI2_PASS),
                            {"generator": generator.to_dict(), "n": n, "chi2": float(stat), "cells": cells,
                             "seed": seed})


def rank_cdf_check(generator: Generator, n: int, thresholds: Sequence[float], R: int, seed: int = 0,
                   check: str = "rank-cdf") -> list[MonteCarloReport]:
    """Empirical ``P(rank(W_n) <= t)`` against ``floor(t) / n`` for each threshold."""
    hits = np.zeros(len(thresholds), dtype=np.int64)
    t = np.asarray(thresholds, dtype=float)
    for rng, cfg in _replications(seed, R, 0):
        hits += ranks(generator.sample(rng, n), cfg).ranks[-1] <= t
    out = []
    for h, ti in zip(hits, thresholds):
        target = math.floor(ti) / n
        out.append(binomial_report(check, int(h), R, (target, target), {"t": ti, "n": n, "seed": seed}))
    return out


def pvalue_superuniformity(generator: Generator, n: int, levels: Sequence[float], R: int, seed: int = 0,
                           check: str = "pvalue-superuniformity") -> list[MonteCarloReport]:
    """Empirical ``P(P <= a)`` of the conformal p-value of point ``n + 1`` against ``[0, a]``."""
    hits = np.zeros(len(levels), dtype=np.int64)
    a = np.asarray(levels, dtype=float)
    for rng, cfg in _replications(seed, R, 0):
        z = generator.sample(rng, n + 1)
        hits += conformal_pvalue(z[:n], z[n], cfg).value <= a + 1e-12
    return [binomial_report(check, int(h), R, (0.0, lv), {"level": lv, "n": n, "seed": seed})
            for h, lv in zip(hits, levels)]
