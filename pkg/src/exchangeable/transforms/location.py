"""Location-centred scores: absolute deviation, norm balls, PCA norm balls."""

from __future__ import annotations

import warnings

import numpy as np

from .base import PERMUTATION_INVARIANT, ScoreTransform, as_points

WHITEN_MODES = ("none", "full-covariance", "diagonal")
# Relative eigenvalue floor below which a covariance is treated as singular.
_RANK_TOL = 1e-10


def _canonical(x: np.ndarray) -> np.ndarray:
    """Rows in lexicographic order, so reductions do not depend on input order."""
    return x[np.lexsort(x.T[::-1])]


class AbsDeviationTransform(ScoreTransform):
    """``f(z) = |z - c|`` with ``c`` the mean or median of the fit data."""

    def __init__(self, center_value: float, center: str):
        self.center_value = float(center_value)
        self.center = center
        self.dim = 1
        self.justification = PERMUTATION_INVARIANT

    def _scores(self, points):
        return np.abs(points[:, 0] - self.center_value)

    def params(self):
        return {"center": self.center, "center_value": self.center_value}

    @classmethod
    def from_params(cls, p, dim, justification):
        return _ABS_CLASSES[p["center"]](p["center_value"], p["center"])


class _AbsMean(AbsDeviationTransform):
    kind = "abs-deviation-mean"


class _AbsMedian(AbsDeviationTransform):
    kind = "abs-deviation-median"


_ABS_CLASSES = {"mean": _AbsMean, "median": _AbsMedian}


def fit_abs_deviation(data, center: str = "mean") -> AbsDeviationTransform:
    """Absolute deviation from the mean or median of ``data`` (scalars)."""
    x = np.sort(np.asarray(data, dtype=float).ravel())
    if x.size == 0:
        raise ValueError("empty sequence")
    if center == "mean":
        c = x.mean()
    elif center == "median":
        c = np.median(x)
    else:
        raise ValueError(f"center must be 'mean' or 'median', got {center!r}")
    return _ABS_CLASSES[center](c, center)


class NormBallTransform(ScoreTransform):
    """``f(z) = ||A (z - mean)||_2`` for a fixed whitening matrix ``A``.

    ``whiten_used`` records the whitening actually applied; a singular
    full covariance falls back to the diagonal.
    """

    def __init__(self, mean, matrix, whiten: str, whiten_used: str):
        self.mean = np.asarray(mean, dtype=float)
        self.matrix = np.asarray(matrix, dtype=float)
        self.whiten = whiten
        self.whiten_used = whiten_used
        self.dim = self.mean.size
        self.justification = PERMUTATION_INVARIANT

    def _scores(self, points):
        return np.linalg.norm((points - self.mean) @ self.matrix.T, axis=1)

    def params(self):
        return {"mean": self.mean, "matrix": self.matrix, "whiten": self.whiten,
                "whiten_used": self.whiten_used}

    @classmethod
    def from_params(cls, p, dim, justification):
        klass = _NormBall if p["whiten"] == "none" else _WhitenedNormBall
        return klass(p["mean"], p["matrix"], p["whiten"], p["whiten_used"])


class _NormBall(NormBallTransform):
    kind = "norm-ball"


class _WhitenedNormBall(NormBallTransform):
    kind = "whitened-norm-ball"


def _inverse_sqrt(cov: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(cov)
    return (vecs / np.sqrt(vals)) @ vecs.T


def fit_norm_ball(data, whiten: str = "none") -> NormBallTransform:
    """Euclidean distance to the mean, optionally after whitening.

    ``whiten`` is ``"none"``, ``"full-covariance"`` (inverse square root of
    the sample covariance) or ``"diagonal"`` (per-coordinate sd).
    """
    if whiten not in WHITEN_MODES:
        raise ValueError(f"whiten must be one of {WHITEN_MODES}, got {whiten!r}")
    x = as_points(data)
    if x.shape[0] == 0:
        raise ValueError("empty sequence")
    x = _canonical(x)
    d = x.shape[1]
    mean = x.mean(axis=0)
    if whiten == "none":
        return _NormBall(mean, np.eye(d), whiten, "none")
    if x.shape[0] < 2:
        raise ValueError("degenerate coordinate")
    cov = np.atleast_2d(np.cov(x, rowvar=False))
    used = whiten
    if whiten == "full-covariance":
        vals = np.linalg.eigvalsh(cov)
        if vals.min() <= _RANK_TOL * max(vals.max(), 0.0) or vals.max() <= 0:
            warnings.warn("sample covariance is singular; using its diagonal", RuntimeWarning, stacklevel=2)
            used = "diagonal"
        else:
            return _WhitenedNormBall(mean, _inverse_sqrt(cov), whiten, used)
    var = np.diag(cov)
    if np.any(var <= 0):
        raise ValueError("degenerate coordinate")
    return _WhitenedNormBall(mean, np.diag(1.0 / np.sqrt(var)), whiten, used)


class PCANormBallTransform(ScoreTransform):
    """``f(z) = ||diag(lambda)^{-1/2} (P z - mean(P Z))||`` over the top PCs."""

    kind = "pca-norm-ball"

    def __init__(self, components, projected_mean, scale):
        self.components = np.atleast_2d(np.asarray(components, dtype=float))
        self.projected_mean = np.asarray(projected_mean, dtype=float).ravel()
        self.scale = np.asarray(scale, dtype=float).ravel()
        self.dim = self.components.shape[1]
        self.justification = PERMUTATION_INVARIANT

    @property
    def k(self) -> int:
        return self.components.shape[0]

    def _scores(self, points):
        proj = points @ self.components.T - self.projected_mean
        return np.linalg.norm(proj / self.scale, axis=1)

    def params(self):
        return {"components": self.components, "projected_mean": self.projected_mean, "scale": self.scale}

    @classmethod
    def from_params(cls, p, dim, justification):
        return cls(p["components"], p["projected_mean"], p["scale"])


def elbow_components(eigenvalues) -> int:
    """Number of leading components whose variance is at least 10% of the first."""
    lam = np.sort(np.asarray(eigenvalues, dtype=float))[::-1]
    if lam.size == 0 or lam[0] <= 0:
        return 1
    return max(1, int(np.sum(lam >= 0.1 * lam[0])))


def fit_pca_norm_ball(data, k: int | str = "elbow") -> PCANormBallTransform:
    """Whitened norm ball in the span of the leading principal components.

    ``k`` is a fixed component count or ``"elbow"``.
    """
    x = as_points(data)
    if x.shape[0] < 2:
        raise ValueError("PCA needs at least 2 points")
    x = _canonical(x)
    d = x.shape[1]
    cov = np.atleast_2d(np.cov(x, rowvar=False))
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    rank = int(np.sum(vals > _RANK_TOL * max(vals[0], 0.0))) if vals[0] > 0 else 0
    if k == "elbow":
        kk = min(elbow_components(vals), rank)
        if kk < 1:
            raise ValueError("data has zero variance; no principal component to keep")
    else:
        kk = int(k)
        if not 1 <= kk <= d:
            raise ValueError(f"k must lie in [1, {d}], got {kk}")
        if kk > rank:
            raise ValueError(f"k={kk} exceeds the rank {rank} of the sample covariance")
    comps = vecs[:, :kk].T
    # fix eigenvector signs so the fitted parameters are reproducible
    signs = np.sign(comps[np.arange(kk), np.argmax(np.abs(comps), axis=1)])
    comps = comps * signs[:, None]
    proj_mean = (x @ comps.T).mean(axis=0)
    return PCANormBallTransform(comps, proj_mean, np.sqrt(vals[:kk]))
