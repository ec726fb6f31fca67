"""Density-based scores: level sets, density ratios, class probabilities, HPD."""

from __future__ import annotations

import numpy as np

from .base import PERMUTATION_INVARIANT, TRAINING_SPLIT_ONLY, ScoreTransform, _query, as_points
from .kernels import DensityModel, RegressionModel, _bandwidth, kernel_values, product_weights

HPD_MIN_GRID = 32
HPD_AUTO_GRID = 128


class DensityLevelSetTransform(ScoreTransform):
    """``f(z) = 1 / p(z)``; ``+inf`` where the estimated density is zero."""

    kind = "density-levelset"

    def __init__(self, model: DensityModel):
        self.model = model
        self.dim = model.dim
        self.justification = PERMUTATION_INVARIANT

    def _scores(self, points):
        p = self.model.density(points)
        with np.errstate(divide="ignore", over="ignore"):
            return np.where(p > 0, 1.0 / p, np.inf)

    def params(self):
        return self.model.params()

    @classmethod
    def from_params(cls, p, dim, justification):
        return cls(DensityModel.from_params(p))


def fit_density_levelset(data, bandwidth=None, kernel: str = "gaussian") -> DensityLevelSetTransform:
    """Reciprocal kernel density estimate fit on ``data``."""
    return DensityLevelSetTransform(DensityModel.fit(data, bandwidth, kernel))


class DensityRatioTransform(ScoreTransform):
    """``f(z) = p_X(z) / p_Y(z)``; ``+inf`` if only ``p_Y`` vanishes, 1 if both do."""

    kind = "density-ratio"

    def __init__(self, model_x: DensityModel, model_y: DensityModel):
        self.model_x = model_x
        self.model_y = model_y
        self.dim = model_x.dim
        self.justification = TRAINING_SPLIT_ONLY

    def _scores(self, points):
        px = self.model_x.density(points)
        py = self.model_y.density(points)
        out = np.ones_like(px)
        pos = py > 0
        out[pos] = px[pos] / py[pos]
        out[~pos & (px > 0)] = np.inf
        return out

    def params(self):
        return {"x": self.model_x.params(), "y": self.model_y.params()}

    @classmethod
    def from_params(cls, p, dim, justification):
        return cls(DensityModel.from_params(p["x"]), DensityModel.from_params(p["y"]))


def fit_density_ratio(sample_x, sample_y, bandwidth=None, kernel: str = "gaussian") -> DensityRatioTransform:
    """Ratio of kernel density estimates fit separately on each labelled sample."""
    return DensityRatioTransform(DensityModel.fit(sample_x, bandwidth, kernel),
                                 DensityModel.fit(sample_y, bandwidth, kernel))


class ClassProbabilityTransform(ScoreTransform):
    """Estimated ``P(label = y-sample | z)`` from the two kernel densities."""

    kind = "class-probability"

    def __init__(self, model_x: DensityModel, model_y: DensityModel, n_x: int, n_y: int):
        self.model_x = model_x
        self.model_y = model_y
        self.n_x = int(n_x)
        self.n_y = int(n_y)
        self.dim = model_x.dim
        self.justification = TRAINING_SPLIT_ONLY

    def _scores(self, points):
        ax = self.n_x * self.model_x.density(points)
        ay = self.n_y * self.model_y.density(points)
        tot = ax + ay
        out = np.full(tot.shape, self.n_y / (self.n_x + self.n_y))
        pos = tot > 0
        out[pos] = ay[pos] / tot[pos]
        return out

    def params(self):
        return {"x": self.model_x.params(), "y": self.model_y.params(), "n_x": self.n_x, "n_y": self.n_y}

    @classmethod
    def from_params(cls, p, dim, justification):
        return cls(DensityModel.from_params(p["x"]), DensityModel.from_params(p["y"]), p["n_x"], p["n_y"])


def fit_class_probability(sample_x, sample_y, bandwidth=None, kernel: str = "gaussian") -> ClassProbabilityTransform:
    """Kernel classifier score, higher for points that look like ``sample_y``."""
    mx = DensityModel.fit(sample_x, bandwidth, kernel)
    my = DensityModel.fit(sample_y, bandwidth, kernel)
    return ClassProbabilityTransform(mx, my, mx.support.shape[0], my.support.shape[0])


def hpd_scores(masses, levels=None, query_levels=None) -> np.ndarray:
    """Probability mass of all cells at least as dense as each query cell.

    ``masses`` are nonnegative cell probabilities (normalised here).
    ``levels`` are the densities used for the ordering and default to
    ``masses``; ``query_levels`` default to ``levels``.

    >>> hpd_scores([0.7, 0.2, 0.1]).round(12).tolist()
    [0.7, 0.9, 1.0]
    """
    m = np.asarray(masses, dtype=float)
    tot = m.sum()
    if tot <= 0:
        raise ValueError("masses must have positive total")
    m = m / tot
    lv = m if levels is None else np.asarray(levels, dtype=float)
    q = lv if query_levels is None else np.asarray(query_levels, dtype=float)
    order = np.argsort(lv, kind="stable")
    sorted_lv = lv[order]
    # mass at or above level t = total mass minus mass strictly below t
    below = np.concatenate([[0.0], np.cumsum(m[order])])
    tol = 1e-12 * np.maximum(np.abs(q), np.finfo(float).tiny)
    idx = np.searchsorted(sorted_lv, q - tol, side="left")
    return np.clip(1.0 - below[idx], 0.0, 1.0)


def trapezoid_weights(grid: np.ndarray) -> np.ndarray:
    g = np.asarray(grid, dtype=float)
    if g.size < 2:
        return np.ones_like(g)
    dg = np.diff(g)
    w = np.zeros_like(g)
    w[:-1] += dg / 2
    w[1:] += dg / 2
    return w


class ConditionalDensityHPDTransform(ScoreTransform):
    """HPD level of the response: ``f((x, y))`` is the estimated mass of
    responses at least as likely as ``y`` given ``x``.

    Points are rows ``(x_1, ..., x_p, y)``. In continuous mode the
    conditional density is a kernel estimate integrated on ``y_grid`` with
    trapezoid weights; in discrete mode ``y_grid`` holds the class labels.
    """

    kind = "conditional-density-hpd"

    def __init__(self, x, y, bandwidth_x, bandwidth_y, kernel, y_grid, discrete: bool):
        self.x = as_points(x)
        self.y = np.asarray(y, dtype=float).ravel()
        self.bandwidth_x = np.asarray(bandwidth_x, dtype=float).ravel()
        self.bandwidth_y = float(bandwidth_y)
        self.kernel = kernel
        self.y_grid = np.asarray(y_grid, dtype=float).ravel()
        self.discrete = bool(discrete)
        self.dim = self.x.shape[1] + 1
        self.justification = PERMUTATION_INVARIANT
        self._weights = trapezoid_weights(self.y_grid)

    def _x_weights(self, xq):
        w = product_weights(xq, self.x, self.bandwidth_x, self.kernel)
        tot = w.sum(axis=1, keepdims=True)
        flat = np.full_like(w, 1.0 / self.x.shape[0])
        return np.where(tot > 0, w / np.where(tot > 0, tot, 1.0), flat)

    def _levels(self, xw, yq):
        """Conditional density (pmf) on the grid ``(m, g)`` and at each query ``(m,)``."""
        if self.discrete:
            onehot = (self.y[:, None] == self.y_grid[None, :]).astype(float)
            at_query = (self.y[None, :] == yq[:, None]).astype(float)
        else:
            h = self.bandwidth_y
            onehot = kernel_values((self.y_grid[None, :] - self.y[:, None]) / h, self.kernel) / h
            at_query = kernel_values((yq[:, None] - self.y[None, :]) / h, self.kernel) / h
        return xw @ onehot, (xw * at_query).sum(axis=1)

    def evaluate(self, points, return_flags: bool = False):
        """Scores, plus a mask of responses outside the grid (clamped or unknown label)."""
        pts, _ = _query(points, self.dim)
        xq, yq = pts[:, :-1], pts[:, -1].copy()
        if self.discrete:
            flags = ~np.isin(yq, self.y_grid)
        else:
            lo, hi = self.y_grid[0], self.y_grid[-1]
            flags = (yq < lo) | (yq > hi)
            yq = np.clip(yq, lo, hi)
        grid_levels, query_levels = self._levels(self._x_weights(xq), yq)
        cells = grid_levels if self.discrete else grid_levels * self._weights
        out = np.ones(pts.shape[0])
        for a in range(pts.shape[0]):
            if cells[a].sum() > 0:
                out[a] = hpd_scores(cells[a], grid_levels[a], [query_levels[a]])[0]
        return (out, flags) if return_flags else out

    def _scores(self, points):
        return self.evaluate(points)

    def params(self):
        return {"x": self.x, "y": self.y, "bandwidth_x": self.bandwidth_x, "bandwidth_y": self.bandwidth_y,
                "kernel": self.kernel, "y_grid": self.y_grid, "discrete": self.discrete}

    @classmethod
    def from_params(cls, p, dim, justification):
        return cls(np.asarray(p["x"], dtype=float).reshape(-1, dim - 1), p["y"], p["bandwidth_x"],
                   p["bandwidth_y"], p["kernel"], p["y_grid"], p["discrete"])


def fit_conditional_density_score(pairs, y_grid=None, bandwidth=None, kernel: str = "gaussian",
                                  discrete: bool = False) -> ConditionalDensityHPDTransform:
    """Conditional HPD score on rows ``(x..., y)``.

    ``bandwidth`` covers every column (x coordinates then y). Without a
    grid, continuous mode uses 128 points on ``[min y - 3h, max y + 3h]``
    and discrete mode uses the observed labels.
    """
    z = as_points(pairs)
    if z.shape[1] < 2:
        raise ValueError("pairs need at least one covariate column and a response column")
    if z.shape[0] == 0:
        raise ValueError("empty sequence")
    z = z[np.lexsort(z.T[::-1])]
    h = _bandwidth(z, bandwidth)
    x, y = z[:, :-1], z[:, -1]
    if discrete:
        grid = np.unique(y) if y_grid is None else np.unique(np.asarray(y_grid, dtype=float))
    else:
        if y_grid is None:
            grid = np.linspace(y.min() - 3 * h[-1], y.max() + 3 * h[-1], HPD_AUTO_GRID)
        else:
            grid = np.sort(np.asarray(y_grid, dtype=float).ravel())
            if grid.size < HPD_MIN_GRID:
                raise ValueError(f"y_grid needs at least {HPD_MIN_GRID} points")
    return ConditionalDensityHPDTransform(x, y, h[:-1], h[-1], kernel, grid, discrete)


class RegressionResidualTransform(ScoreTransform):
    """``f((x, y)) = |y - mu(x)|`` with a Nadaraya-Watson mean ``mu``."""

    kind = "regression-residual"

    def __init__(self, model: RegressionModel):
        self.model = model
        self.dim = model.x.shape[1] + 1
        self.justification = PERMUTATION_INVARIANT

    def predict(self, x) -> np.ndarray:
        return self.model.predict(x)

    def _scores(self, points):
        return np.abs(points[:, -1] - self.model.predict(points[:, :-1]))

    def params(self):
        return self.model.params()

    @classmethod
    def from_params(cls, p, dim, justification):
        return cls(RegressionModel.from_params(p))


def fit_regression_residual(pairs, bandwidth=None, kernel: str = "gaussian") -> RegressionResidualTransform:
    """Absolute kernel-regression residual; rows are ``(x..., y)``."""
    z = as_points(pairs)
    if z.shape[1] < 2:
        raise ValueError("pairs need at least one covariate column and a response column")
    return RegressionResidualTransform(RegressionModel.fit(z[:, :-1], z[:, -1], bandwidth, kernel))
