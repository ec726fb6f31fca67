"""Conformal p-values and aggregated regions: jackknife+, CV+ and combined splits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .conformal import PredictionRegion, RegionSpec, conformal_index, split_conformal
from .ranks import JitterConfig, draw_uniforms, rank_of_jittered, stream
from .transforms import Recipe

AGG_SCHEMA_VERSION = 1
METHODS = ("jackknife-plus", "cv-plus", "bonferroni", "min-p")
MERGERS = ("bonferroni", "arithmetic-mean", "geometric-mean")


@dataclass(frozen=True)
class ConformalPValue:
    """``value = (n + 2 - rank) / (n + 1)`` with ``rank`` among ``n + 1`` jittered scores."""

    value: float
    n: int
    rank: int

    def exceeds(self, alpha: float) -> bool:
        """``value > alpha``, decided in integer arithmetic."""
        return self.rank <= conformal_index(self.n + 1, alpha)


def conformal_pvalue(scores, w: float, cfg: JitterConfig) -> ConformalPValue:
    """p-value of a candidate score ``w`` against calibration scores.

    Jitters ``U_1..U_n`` onto the scores and ``U_{n+1}`` onto ``w`` from one
    stream, exactly as :func:`split_conformal` draws them, so that
    ``P > alpha`` holds iff the candidate lies in the split region.

    >>> conformal_pvalue([1.0, 2.0, 3.0], 10.0, JitterConfig()).value
    0.25
    """
    s = np.asarray(scores, dtype=float).ravel()
    n = s.size
    if n == 0:
        raise ValueError("empty sequence")
    u = draw_uniforms(cfg, n + 1)
    xi = cfg.effective_xi(s)
    r = int(rank_of_jittered(np.append(s, w) + xi * u)[-1])
    return ConformalPValue((n + 2 - r) / (n + 1), n, r)


def merge_pvalues(pvalues, method: str = "bonferroni") -> float:
    """Combine p-values from repeated splits into one valid p-value.

    ``bonferroni`` is ``K * min p``; the means are scaled by 2 (arithmetic)
    and ``e`` (geometric), which keeps them valid under arbitrary
    dependence. All results are capped at 1.
    """
    p = np.asarray(pvalues, dtype=float)
    if method == "bonferroni":
        v = p.size * p.min()
    elif method == "arithmetic-mean":
        v = 2.0 * p.mean()
    elif method == "geometric-mean":
        v = math.e * float(np.exp(np.log(p).mean()))
    else:
        raise ValueError(f"merge must be one of {MERGERS}, got {method!r}")
    return float(min(1.0, v))


@dataclass(frozen=True)
class AggregationSpec:
    method: str
    alpha: float
    jitter: JitterConfig = field(default_factory=JitterConfig)
    folds: int | None = None
    K: int | None = None
    n1: int | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.method == "cv-plus" and (self.folds is None or self.folds < 2):
            raise ValueError("cv-plus needs folds >= 2")
        if self.method in ("bonferroni", "min-p") and (self.K is None or self.K < 1):
            raise ValueError("split combination needs K >= 1")

    def to_dict(self) -> dict:
        return {"method": self.method, "alpha": self.alpha, "jitter": self.jitter.to_dict(),
                "folds": self.folds, "K": self.K, "n1": self.n1}

    @classmethod
    def from_dict(cls, d: dict) -> "AggregationSpec":
        return cls(d["method"], float(d["alpha"]), JitterConfig.from_dict(d["jitter"]),
                   d.get("folds"), d.get("K"), d.get("n1"))


def _recipe_doc(recipe) -> dict | None:
    return recipe.to_dict() if isinstance(recipe, Recipe) else None


def _rebuild(d: dict):
    if d.get("schema_version") != AGG_SCHEMA_VERSION:
        raise ValueError(f"unsupported region schema version {d.get('schema_version')!r}")
    if d.get("recipe") is None:
        raise ValueError("region was built from an unserializable recipe")
    spec = AggregationSpec.from_dict(d["spec"])
    recipe = Recipe.from_dict(d["recipe"])
    data = np.asarray(d["data"], dtype=float)
    return spec, recipe, data


class LeaveOutRegion:
    """Jackknife+ / CV+ membership predicate.

    Point ``i`` is held out by transform ``assignment[i]``; a candidate
    ``z`` is included iff
    ``#{i : f_(a_i)(z) > f_(a_i)(Z_i)} < (1 - alpha)(n + 1)``.
    """

    def __init__(self, spec: AggregationSpec, recipe, data, transforms, assignment, held_scores):
        self.spec = spec
        self.recipe = recipe
        self.data = data
        self.transforms = transforms
        self.assignment = np.asarray(assignment)
        self.held_scores = np.asarray(held_scores, dtype=float)
        self.n = len(self.held_scores)
        self.bound = conformal_index(self.n + 1, spec.alpha)

    def counts(self, z) -> np.ndarray:
        """Comparison counts for a batch of candidates."""
        per_fit = [np.atleast_1d(f.scores(z)) for f in self.transforms]
        s = np.stack([per_fit[a] for a in self.assignment])
        return (s > self.held_scores[:, None]).sum(axis=0)

    def contains(self, z):
        single = np.ndim(self.transforms[0](z)) == 0
        inside = self.counts(z) < self.bound
        return bool(inside[0]) if single else inside

    @property
    def metadata(self) -> dict:
        meta = {"n": self.n, "fits": len(self.transforms), "count_bound": self.bound}
        if self.spec.method == "cv-plus":
            meta["fold_assignment"] = self.assignment.tolist()
        return meta

    def to_dict(self) -> dict:
        return {"schema_version": AGG_SCHEMA_VERSION, "type": self.spec.method, "spec": self.spec.to_dict(),
                "recipe": _recipe_doc(self.recipe), "data": self.data.tolist(), "metadata": self.metadata}

    @classmethod
    def from_dict(cls, d: dict) -> "LeaveOutRegion":
        spec, recipe, data = _rebuild(d)
        if spec.method == "jackknife-plus":
            return jackknife_plus(data, recipe, spec)
        return cv_plus(data, spec.folds, recipe, spec)


def jackknife_plus(data, recipe, spec: AggregationSpec) -> LeaveOutRegion:
    """Leave-one-out region with coverage at least ``1 - 2 alpha``."""
    data = np.asarray(data, dtype=float)
    n = data.shape[0]
    if n < 2:
        raise ValueError("jackknife+ needs at least 2 points")
    fits = []
    held = np.empty(n)
    for i in range(n):
        f = recipe(np.delete(data, i, axis=0))
        fits.append(f)
        held[i] = f.scores(data[i:i + 1])[0]
    return LeaveOutRegion(spec, recipe, data, fits, np.arange(n), held)


def fold_assignment(n: int, folds: int, seed: int) -> np.ndarray:
    """Contiguous folds of a seeded shuffle; the first ``n % folds`` folds get one extra point."""
    if folds > n:
        raise ValueError(f"folds ({folds}) cannot exceed n ({n})")
    if folds < 2:
        raise ValueError("need at least 2 folds")
    perm = stream(seed, 0).permutation(n)
    sizes = np.full(folds, n // folds)
    sizes[:n % folds] += 1
    out = np.empty(n, dtype=np.int64)
    out[perm] = np.repeat(np.arange(folds), sizes)
    return out


def cv_plus(data, folds: int, recipe, spec: AggregationSpec) -> LeaveOutRegion:
    """Leave-a-fold-out analogue of :func:`jackknife_plus`."""
    data = np.asarray(data, dtype=float)
    n = data.shape[0]
    assign = fold_assignment(n, folds, spec.jitter.seed)
    fits = []
    held = np.empty(n)
    for k in range(folds):
        out = assign == k
        f = recipe(data[~out])
        fits.append(f)
        held[out] = f.scores(data[out])
    return LeaveOutRegion(spec, recipe, data, fits, assign, held)


def leave_out_region(data, recipe, spec: AggregationSpec) -> LeaveOutRegion:
    if spec.method == "jackknife-plus":
        return jackknife_plus(data, recipe, spec)
    if spec.method == "cv-plus":
        return cv_plus(data, spec.folds, recipe, spec)
    raise ValueError(f"{spec.method} is not a leave-out method")


def comparison_counts(S) -> np.ndarray:
    """``W_i = #{j != i : S[i, j] > S[j, i]}`` for a square score matrix.

    ``S[i, j]`` is the score of point ``i`` under the fit that leaves out
    both ``i`` and ``j``.
    """
    s = np.asarray(S, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError("score matrix must be square")
    wins = s > s.T
    np.fill_diagonal(wins, False)
    return wins.sum(axis=1)


def offending_points(S, alpha: float) -> int:
    """Number of ``i`` with ``W_i >= (1 - alpha) N``; never more than ``2 alpha N``."""
    w = comparison_counts(S)
    return int((w >= (1.0 - alpha) * w.size).sum())


class SplitCombinationRegion:
    """Intersection of ``K`` independent split regions, each at level ``alpha / K``.

    Equivalently ``z`` is kept iff every per-split conformal p-value
    exceeds ``alpha / K``.
    """

    def __init__(self, spec: AggregationSpec, recipe, data, splits: list[PredictionRegion],
                 permutations: list[np.ndarray], seeds: list[int]):
        self.spec = spec
        self.recipe = recipe
        self.data = data
        self.splits = splits
        self.permutations = permutations
        self.seeds = seeds

    @property
    def K(self) -> int:
        return len(self.splits)

    def contains(self, z):
        out = self.splits[0].contains(z)
        for r in self.splits[1:]:
            out = out & r.contains(z)
        return out

    def pvalues(self, z) -> list[ConformalPValue]:
        """Per-split conformal p-values of a single candidate."""
        m = self.splits[0].n_scores
        out = []
        for region, perm, seed in zip(self.splits, self.permutations, self.seeds):
            cal = self.data[perm][-m:]
            out.append(conformal_pvalue(region.transform.scores(cal), region.transform(z),
                                        JitterConfig(self.spec.jitter.xi, seed, self.spec.jitter.rescale)))
        return out

    def merged_pvalue(self, z, merge: str = "bonferroni") -> float:
        return merge_pvalues([p.value for p in self.pvalues(z)], merge)

    @property
    def metadata(self) -> dict:
        return {"K": self.K, "split_seeds": list(self.seeds), "n1": self.data.shape[0] - self.splits[0].n_scores,
                "per_split_alpha": self.spec.alpha / self.K}

    def to_dict(self) -> dict:
        return {"schema_version": AGG_SCHEMA_VERSION, "type": self.spec.method, "spec": self.spec.to_dict(),
                "recipe": _recipe_doc(self.recipe), "data": self.data.tolist(), "metadata": self.metadata,
                "thresholds": [r.to_dict()["threshold"] for r in self.splits]}

    @classmethod
    def from_dict(cls, d: dict) -> "SplitCombinationRegion":
        spec, recipe, data = _rebuild(d)
        return bonferroni_splits(data, spec.K, spec, recipe)


def split_permutation(n: int, seed: int) -> np.ndarray:
    return stream(seed, 1).permutation(n)


def default_split_size(n: int, K: int, alpha: float) -> int:
    """Training size leaving enough calibration points for a non-vacuous region at ``alpha / K``.

    A split region at level ``a`` with ``m`` calibration points is the whole
    space unless ``m + 1 >= 1 / a``. Returns ``n // 2`` when that already
    holds or cannot be met, else the largest ``n1`` that meets it.

    >>> default_split_size(60, 5, 0.1)
    11
    """
    half = n // 2
    if alpha <= 0:
        return half
    need = math.ceil(K / alpha - 1.0 - 1e-9)
    if n - half >= need or n - need < 1:
        return half
    return n - need


def bonferroni_splits(data, K: int, spec: AggregationSpec, recipe) -> SplitCombinationRegion:
    """Combine ``K`` random splits; coverage at least ``1 - alpha``.

    Split ``k`` uses the seed ``JitterConfig.spawn(k)``: the data are
    shuffled by ``split_permutation(n, seed_k)`` and passed to
    :func:`split_conformal` at level ``alpha / K`` with that jitter seed.
    The training size defaults to :func:`default_split_size`.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    data = np.asarray(data, dtype=float)
    n = data.shape[0]
    n1 = spec.n1 if spec.n1 is not None else default_split_size(n, K, spec.alpha)
    regions, perms, seeds = [], [], []
    for k in range(K):
        cfg = spec.jitter.spawn(k)
        perm = split_permutation(n, cfg.seed)
        regions.append(split_conformal(data[perm], RegionSpec(spec.alpha / K, n1, cfg), recipe))
        perms.append(perm)
        seeds.append(cfg.seed)
    return SplitCombinationRegion(spec, recipe, data, regions, perms, seeds)


def aggregate_region(data, recipe, spec: AggregationSpec):
    """Dispatch on ``spec.method``."""
    if spec.method in ("bonferroni", "min-p"):
        return bonferroni_splits(data, spec.K, spec, recipe)
    return leave_out_region(data, recipe, spec)


def region_from_dict(d: dict):
    """Rebuild any aggregated region from its JSON document."""
    if d.get("type") in ("bonferroni", "min-p"):
        return SplitCombinationRegion.from_dict(d)
    return LeaveOutRegion.from_dict(d)
