"""Full and split conformal prediction regions.

A region is ``{z : f(z) <= tau}`` for a fitted score transform ``f``. The
threshold is an order statistic of jittered scores shifted by the jitter of
the (unseen) test point, so its coverage is exactly
``ceil(m (1 - alpha)) / m`` for ``m`` exchangeable scores including the
test point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ranks import JitterConfig, draw_uniforms, rank_of_jittered
from .transforms import (PERMUTATION_INVARIANT, IdentityTransform, ScoreTransform, transform_from_dict)
from .transforms.base import _jsonable, decode_float

REGION_SCHEMA_VERSION = 1
ONE_SIDED_REAL = "one-sided-real"
SCORE_THRESHOLDED = "score-thresholded"
# Slack for ceil(m (1 - alpha)) when m (1 - alpha) is an integer up to rounding.
_CEIL_SLACK = 1e-9


def conformal_index(m: int, alpha: float) -> int:
    """``ceil(m * (1 - alpha))``, robust to rounding of exact integers."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    return max(0, math.ceil(m * (1.0 - alpha) - _CEIL_SLACK))


@dataclass(frozen=True)
class RegionSpec:
    alpha: float
    n1: int | None = None
    jitter: JitterConfig = field(default_factory=JitterConfig)

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.n1 is not None and self.n1 < 1:
            raise ValueError("n1 must be >= 1")


@dataclass(frozen=True)
class PredictionRegion:
    """``{z : transform(z) <= threshold}``.

    ``order_index`` is the rank ``I`` of the order statistic among
    ``n_scores`` jittered scores; ``I > n_scores`` gives a vacuous region
    (``threshold = +inf``) and ``I = 0`` an empty one.
    """

    transform: ScoreTransform
    threshold: float
    order_index: int
    n_scores: int
    jitter_offset: float
    alpha: float
    jitter: JitterConfig
    mode: str = SCORE_THRESHOLDED

    @property
    def vacuous(self) -> bool:
        return self.order_index > self.n_scores

    @property
    def empty(self) -> bool:
        return self.order_index == 0

    def contains(self, z):
        """Membership of one point (bool) or a batch (bool array)."""
        s = self.transform(z)
        if np.ndim(s) == 0:
            return bool(s <= self.threshold)
        return np.asarray(s) <= self.threshold

    def to_dict(self) -> dict:
        return {
            "schema_version": REGION_SCHEMA_VERSION,
            "type": "prediction-region",
            "mode": self.mode,
            "alpha": self.alpha,
            "threshold": _jsonable(float(self.threshold)),
            "order_index": self.order_index,
            "n_scores": self.n_scores,
            "jitter_offset": self.jitter_offset,
            "jitter": self.jitter.to_dict(),
            "flags": {"vacuous": self.vacuous, "empty": self.empty},
            "transform": self.transform.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PredictionRegion":
        if d.get("schema_version") != REGION_SCHEMA_VERSION:
            raise ValueError(f"unsupported region schema version {d.get('schema_version')!r}")
        return cls(
            transform=transform_from_dict(d["transform"]),
            threshold=decode_float(d["threshold"]),
            order_index=int(d["order_index"]),
            n_scores=int(d["n_scores"]),
            jitter_offset=float(d["jitter_offset"]),
            alpha=float(d["alpha"]),
            jitter=JitterConfig.from_dict(d["jitter"]),
            mode=d["mode"],
        )


def threshold_region(scores, transform: ScoreTransform, alpha: float, cfg: JitterConfig,
                     mode: str = SCORE_THRESHOLDED) -> PredictionRegion:
    """Region from ``m`` exchangeable calibration scores.

    Draws ``U_1..U_m`` for the scores and ``U_{m+1}`` for the test point
    from ``cfg``'s stream, in that order, and sets
    ``tau = W*_(I) - xi U_{m+1}`` with ``I = ceil((m + 1)(1 - alpha))``.
    """
    w = np.asarray(scores, dtype=float).ravel()
    m = w.size
    if m == 0:
        raise ValueError("empty sequence")
    u = draw_uniforms(cfg, m + 1)
    xi = cfg.effective_xi(w)
    jittered = np.sort(w + xi * u[:m])
    offset = float(xi * u[m])
    idx = conformal_index(m + 1, alpha)
    if idx > m:
        tau = math.inf
    elif idx == 0:
        tau = -math.inf
    else:
        tau = float(jittered[idx - 1] - offset)
    return PredictionRegion(transform, tau, idx, m, offset, float(alpha), cfg, mode)


def full_conformal_real(data, spec: RegionSpec) -> PredictionRegion:
    """One-sided region ``(-inf, W*_(I) - xi U_{n+1}]`` for real data."""
    return threshold_region(np.asarray(data, dtype=float).ravel(), IdentityTransform(), spec.alpha,
                            spec.jitter, mode=ONE_SIDED_REAL)


def split_conformal(data, spec: RegionSpec, recipe) -> PredictionRegion:
    """Fit ``recipe`` on the first ``n1`` points, calibrate on the rest.

    The split is positional; shuffle upstream for a random split.
    """
    data = np.asarray(data, dtype=float)
    n = data.shape[0]
    if spec.n1 is None:
        raise ValueError("split conformal needs n1")
    if not 1 <= spec.n1 < n:
        raise ValueError(f"need 1 <= n1 < n, got n1={spec.n1}, n={n}")
    transform = recipe(data[:spec.n1])
    scores = transform.scores(data[spec.n1:])
    return threshold_region(scores, transform, spec.alpha, spec.jitter)


@dataclass(frozen=True)
class CandidateMembership:
    candidates: np.ndarray
    included: np.ndarray
    order_index: int
    candidate_ranks: np.ndarray

    @property
    def included_points(self) -> np.ndarray:
        return self.candidates[self.included]

    def contains(self, z):
        raise TypeError("a full conformal result only knows its candidate set; use .included")


def _augment(data: np.ndarray, z: np.ndarray) -> np.ndarray:
    if data.ndim == 1:
        return np.append(data, z)
    return np.vstack([data, np.reshape(z, (1, data.shape[1]))])


def full_conformal_general(data, candidates, recipe, spec: RegionSpec) -> CandidateMembership:
    """Full conformal membership of each candidate under a refit transform.

    For each candidate ``z`` the transform is refit on ``data + [z]``, every
    point is scored, and ``z`` is kept iff the jittered rank of its own
    score among the ``n + 1`` scores is at most ``ceil((n + 1)(1 - alpha))``.
    The same jitter draws are used for every candidate. Candidates are
    independent, so evaluation order does not affect the result.
    """
    data = np.asarray(data, dtype=float)
    cands = np.asarray(candidates, dtype=float)
    n = data.shape[0]
    if n == 0:
        raise ValueError("empty sequence")
    idx = conformal_index(n + 1, spec.alpha)
    u = draw_uniforms(spec.jitter, n + 1)
    included = np.zeros(cands.shape[0], dtype=bool)
    cand_ranks = np.zeros(cands.shape[0], dtype=np.int64)
    for c in range(cands.shape[0]):
        aug = _augment(data, cands[c])
        f = recipe(aug)
        if f.justification != PERMUTATION_INVARIANT:
            raise ValueError("full conformal requires permutation invariance")
        w = f.scores(aug)
        r = rank_of_jittered(w + spec.jitter.effective_xi(w) * u)[-1]
        cand_ranks[c] = r
        included[c] = r <= idx
    return CandidateMembership(cands, included, idx, cand_ranks)


def grid_runs(grid: np.ndarray, mask: np.ndarray) -> list[tuple[float, float]]:
    """Maximal runs of ``True`` in ``mask`` as ``(first, last)`` grid values."""
    out = []
    start = None
    for i, inside in enumerate(mask):
        if inside and start is None:
            start = i
        elif not inside and start is not None:
            out.append((float(grid[start]), float(grid[i - 1])))
            start = None
    if start is not None:
        out.append((float(grid[start]), float(grid[-1])))
    return out


def extract_interval(region, probe_grid) -> list[tuple[float, float]]:
    """Maximal runs of grid points inside a 1-D region, as closed intervals."""
    grid = np.asarray(probe_grid, dtype=float).ravel()
    if grid.size and np.any(np.diff(grid) < 0):
        raise ValueError("probe grid must be sorted")
    return grid_runs(grid, np.asarray(region.contains(grid), dtype=bool))


@dataclass(frozen=True)
class CrossSection:
    x: np.ndarray
    intervals: list
    extrapolation: bool = False


def cross_section(region, x, y_grid) -> CrossSection:
    """``{y : (x, y) in region}`` on a response grid.

    An empty section sets ``extrapolation``: no response is plausible at
    this ``x`` given the fit data.
    """
    xv = np.atleast_1d(np.asarray(x, dtype=float)).ravel()
    grid = np.asarray(y_grid, dtype=float).ravel()
    pts = np.column_stack([np.tile(xv, (grid.size, 1)), grid])
    mask = np.asarray(region.contains(pts), dtype=bool)
    runs = grid_runs(grid, mask)
    return CrossSection(xv, runs, extrapolation=not runs)
