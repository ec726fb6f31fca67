"""Lloyd's k-means with k-means++ seeding, and the cluster-contrast score."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..ranks import stream
from .base import PERMUTATION_INVARIANT, ScoreTransform, as_points

INITS = ("plusplus", "random")


@dataclass(frozen=True)
class KMeansModel:
    centers: np.ndarray
    inertia: float
    iterations: int = 0

    @property
    def k(self) -> int:
        return self.centers.shape[0]


def _sq_dists(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    return ((x[:, None, :] - c[None, :, :]) ** 2).sum(axis=2)


def _plusplus(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    idx = [int(rng.integers(n))]
    d2 = ((x - x[idx[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        tot = d2.sum()
        if tot > 0:
            nxt = int(rng.choice(n, p=d2 / tot))
        else:
            nxt = int(rng.integers(n))
        idx.append(nxt)
        d2 = np.minimum(d2, ((x - x[nxt]) ** 2).sum(axis=1))
    return x[idx].copy()


def _lloyd(x: np.ndarray, centers: np.ndarray, iters: int) -> tuple[np.ndarray, int]:
    n, k = x.shape[0], centers.shape[0]
    labels = None
    it = 0
    for it in range(1, max(1, iters) + 1):
        d2 = _sq_dists(x, centers)
        new_labels = d2.argmin(axis=1)
        converged = labels is not None and np.array_equal(new_labels, labels)
        labels = new_labels
        counts = np.bincount(labels, minlength=k)
        for j in range(k):
            if counts[j]:
                centers[j] = x[labels == j].mean(axis=0)
        if converged:
            break
        taken: list[int] = []
        for j in np.flatnonzero(counts == 0):
            far = _sq_dists(x, centers)[np.arange(n), labels]
            far[taken] = -1.0
            p = int(far.argmax())
            taken.append(p)
            centers[j] = x[p]
            labels[p] = j
    return centers, it


def kmeans(data, k: int, init: str = "plusplus", iters: int = 100, seed: int = 0,
           n_init: int = 10) -> KMeansModel:
    """Fit ``k`` centers by Lloyd iterations, best of ``n_init`` seedings.

    The fit depends on the data only as a multiset: rows are put in
    lexicographic order before seeding, and the returned centers are
    sorted lexicographically. A cluster that empties during the iterations
    is re-seeded at the point farthest from its assigned center.
    """
    x = as_points(data)
    n = x.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if n < k:
        raise ValueError(f"need at least k={k} points, got {n}")
    if init not in INITS:
        raise ValueError(f"init must be one of {INITS}, got {init!r}")
    if n_init < 1:
        raise ValueError("n_init must be >= 1")
    x = x[np.lexsort(x.T[::-1])]
    best = None
    for r in range(n_init):
        rng = stream(seed, r)
        if init == "plusplus":
            start = _plusplus(x, k, rng)
        else:
            start = x[rng.choice(n, size=k, replace=False)].copy()
        centers, it = _lloyd(x, start, iters)
        inertia = float(_sq_dists(x, centers).min(axis=1).sum())
        if best is None or inertia < best.inertia:
            best = KMeansModel(centers[np.lexsort(centers.T[::-1])], inertia, it)
    return best


class KMeansScoreTransform(ScoreTransform):
    """``f(z) = ||z - c_1|| - min_j ||z - c_j||`` (zero inside cluster 1's cell)."""

    kind = "kmeans-cluster"

    def __init__(self, model: KMeansModel):
        self.model = model
        self.dim = model.centers.shape[1]
        self.justification = PERMUTATION_INVARIANT

    def _scores(self, points):
        d = np.sqrt(_sq_dists(points, self.model.centers))
        return np.maximum(d[:, 0] - d.min(axis=1), 0.0)

    def params(self):
        return {"centers": self.model.centers, "inertia": self.model.inertia}

    @classmethod
    def from_params(cls, p, dim, justification):
        return cls(KMeansModel(np.asarray(p["centers"], dtype=float).reshape(-1, dim), float(p["inertia"])))


def fit_kmeans_score(data, k: int = 2, init: str = "plusplus", iters: int = 100, seed: int = 0,
                     n_init: int = 10) -> KMeansScoreTransform:
    return KMeansScoreTransform(kmeans(data, k, init, iters, seed, n_init))
