"""Seeded jitter, tie-free ranks and rank p-values.

Every random draw in the package goes through :func:`stream`, a Philox
(counter-based, 128-bit key) generator keyed by a 64-bit seed and an
optional integer path. Two calls with the same ``(seed, path)`` produce the
same variates on every platform, and distinct paths give independent
streams, so Monte Carlo replications and per-split fits can be derived
from a single master seed without sharing generator state.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

DEFAULT_XI = 1e-8
# Above this interquartile range the default jitter is scaled by the IQR.
IQR_RESCALE_THRESHOLD = 1e4
PERMUTATION_SEARCH_LIMIT = 7
PERMUTATION_TOL = 1e-9

_UINT64 = (1 << 64) - 1


def stream(seed: int, *path: int) -> np.random.Generator:
    """Return an independent Philox generator for ``(seed, *path)``."""
    ss = np.random.SeedSequence(int(seed) & _UINT64, spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(key=ss.generate_state(2, np.uint64)))


def derive_seed(seed: int, *path: int) -> int:
    """Deterministically derive a child 64-bit seed."""
    ss = np.random.SeedSequence(int(seed) & _UINT64, spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class JitterConfig:
    """Jitter magnitude ``xi`` and the seed of the uniform stream.

    ``xi`` is in the units of the jittered values. With ``rescale=True``
    (the default) it is multiplied by the interquartile range of the values
    whenever that range exceeds ``1e4``.
    """

    xi: float = DEFAULT_XI
    seed: int = 0
    rescale: bool = True

    def __post_init__(self):
        if not (self.xi > 0 and math.isfinite(self.xi)):
            raise ValueError(f"xi must be a positive finite real, got {self.xi!r}")
        if not 0 <= int(self.seed) <= _UINT64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "seed", int(self.seed))

    def spawn(self, *path: int) -> "JitterConfig":
        return JitterConfig(self.xi, derive_seed(self.seed, *path), self.rescale)

    def rng(self) -> np.random.Generator:
        return stream(self.seed)

    def effective_xi(self, values) -> float:
        if not self.rescale:
            return self.xi
        v = np.asarray(values, dtype=float)
        v = v[np.isfinite(v)]
        if v.size < 2 or v.max() - v.min() <= IQR_RESCALE_THRESHOLD:
            return self.xi
        q75, q25 = np.percentile(v, [75, 25])
        iqr = q75 - q25
        return self.xi * iqr if iqr > IQR_RESCALE_THRESHOLD else self.xi

    def to_dict(self) -> dict:
        return {"xi": self.xi, "seed": self.seed, "rescale": self.rescale}

    @classmethod
    def from_dict(cls, d: dict) -> "JitterConfig":
        return cls(float(d["xi"]), int(d["seed"]), bool(d.get("rescale", True)))


@dataclass(frozen=True)
class JitteredScores:
    """Values plus ``xi * U`` with ``U`` iid Uniform[-1, 1] from the config stream."""

    values: np.ndarray
    jittered: np.ndarray
    uniforms: np.ndarray
    xi: float

    def __len__(self):
        return len(self.jittered)


@dataclass(frozen=True)
class RankVector:
    ranks: np.ndarray

    @property
    def n(self) -> int:
        return len(self.ranks)

    def __iter__(self):
        return iter(int(r) for r in self.ranks)

    def __len__(self):
        return self.n

    def as_tuple(self) -> tuple:
        return tuple(int(r) for r in self.ranks)


def _as_vector(values) -> np.ndarray:
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("empty sequence")
    return v


def draw_uniforms(cfg: JitterConfig, size: int) -> np.ndarray:
    """First ``size`` Uniform[-1, 1] variates of the config's stream, in order."""
    return cfg.rng().uniform(-1.0, 1.0, size=size)


def jitter(values: Sequence[float], cfg: JitterConfig) -> JitteredScores:
    """Add ``xi * U_i`` to each value, drawing ``U_i`` in input order."""
    v = _as_vector(values)
    u = draw_uniforms(cfg, v.size)
    xi = cfg.effective_xi(v)
    return JitteredScores(values=v, jittered=v + xi * u, uniforms=u, xi=xi)


def rank_of_jittered(jittered: np.ndarray) -> np.ndarray:
    """``rank_i = #{j : x_j <= x_i}`` for an (almost surely) tie-free vector."""
    x = np.asarray(jittered, dtype=float)
    order = np.argsort(x, kind="stable")
    r = np.empty(x.size, dtype=np.int64)
    r[order] = np.arange(1, x.size + 1)
    return r


def ranks(values: Sequence[float], cfg: JitterConfig) -> RankVector:
    """Jittered ranks of ``values``; always a permutation of ``1..n``."""
    js = jitter(values, cfg)
    r = rank_of_jittered(js.jittered)
    return RankVector(r)


def rank_cdf_pvalue(values: Sequence[float], cfg: JitterConfig) -> float:
    """``rank(W_n; W_1..W_n) / n`` for the last element ``W_n``.

    Under exchangeability ``P(p <= a) = floor(a n) / n <= a``.
    """
    r = ranks(values, cfg).ranks
    return float(r[-1]) / r.size


@dataclass
class PermutationCheckReport:
    """Result of :func:`check_permutation_condition`.

    ``holds`` is evidence from random inputs, not a proof: the condition was
    verified only at the sampled points.
    """

    n: int
    m: int
    trials: int
    holds: bool = True
    witness_failures: list = field(default_factory=list)


def check_permutation_condition(
    G: Callable[[np.ndarray], np.ndarray],
    n: int,
    m: int,
    trials: int,
    cfg: JitterConfig,
    tol: float = PERMUTATION_TOL,
) -> PermutationCheckReport:
    """Search for ``pi2`` with ``pi1 G(w) == G(pi2 w)`` for every ``pi1``.

    Inputs ``w`` are iid standard normal draws from ``cfg``'s stream. For
    each trial input and each permutation ``pi1`` of ``[m]`` all ``n!``
    permutations ``pi2`` are tried; a failure is recorded when none matches
    within ``tol`` (max-abs).
    """
    if n > PERMUTATION_SEARCH_LIMIT or m > PERMUTATION_SEARCH_LIMIT:
        raise ValueError("exhaustive permutation search limit")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = cfg.rng()
    perms_n = np.array(list(itertools.permutations(range(n))), dtype=np.int64)
    perms_m = np.array(list(itertools.permutations(range(m))), dtype=np.int64)
    report = PermutationCheckReport(n=n, m=m, trials=trials)
    for _ in range(trials):
        w = rng.standard_normal(n)
        gw = np.asarray(G(w), dtype=float).ravel()
        if gw.size != m:
            raise ValueError(f"G returned {gw.size} values, expected {m}")
        images = np.array([np.asarray(G(w[p]), dtype=float).ravel() for p in perms_n])
        targets = gw[perms_m]  # (m!, m)
        # distance between every permuted output and every permuted-input image
        dist = np.abs(targets[:, None, :] - images[None, :, :]).max(axis=2)
        found = (dist <= tol).any(axis=1)
        for idx in np.flatnonzero(~found):
            report.witness_failures.append((tuple(int(i) for i in perms_m[idx]), w.copy()))
    report.holds = not report.witness_failures
    return report
