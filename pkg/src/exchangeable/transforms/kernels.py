"""Product-kernel density and Nadaraya-Watson regression estimators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import as_points

KERNELS = ("gaussian", "epanechnikov")
_SQRT_2PI = np.sqrt(2.0 * np.pi)
# Evaluate in chunks so that query x support x dim stays below this many floats.
_CHUNK_FLOATS = 2_000_000


def kernel_values(u: np.ndarray, kernel: str) -> np.ndarray:
    if kernel == "gaussian":
        return np.exp(-0.5 * u * u) / _SQRT_2PI
    if kernel == "epanechnikov":
        return np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u * u), 0.0)
    raise ValueError(f"unknown kernel {kernel!r}; expected one of {KERNELS}")


def default_bandwidth(points) -> np.ndarray:
    """Per-coordinate ``1.06 * sd * n**(-1/5)``; falls back to 1.0 for a zero sd."""
    x = as_points(points)
    n = x.shape[0]
    sd = x.std(axis=0, ddof=1) if n > 1 else np.zeros(x.shape[1])
    h = 1.06 * sd * n ** (-0.2)
    return np.where(h > 0, h, 1.0)


def _bandwidth(points: np.ndarray, bandwidth) -> np.ndarray:
    if bandwidth is None:
        return default_bandwidth(points)
    h = np.broadcast_to(np.asarray(bandwidth, dtype=float), (points.shape[1],)).copy()
    if np.any(~(h > 0)) or not np.all(np.isfinite(h)):
        raise ValueError("bandwidth must be positive and finite")
    return h


def product_weights(query: np.ndarray, support: np.ndarray, h: np.ndarray, kernel: str) -> np.ndarray:
    """``W[a, i] = prod_j k((q_aj - s_ij) / h_j) / h_j``."""
    m, d = query.shape
    n = support.shape[0]
    out = np.empty((m, n))
    step = max(1, _CHUNK_FLOATS // max(1, n * d))
    for lo in range(0, m, step):
        u = (query[lo:lo + step, None, :] - support[None, :, :]) / h
        out[lo:lo + step] = np.prod(kernel_values(u, kernel) / h, axis=2)
    return out


@dataclass(frozen=True)
class DensityModel:
    """Kernel density estimate ``p(z) = mean_i prod_j k((z_j - Z_ij)/h_j)/h_j``."""

    support: np.ndarray
    bandwidth: np.ndarray
    kernel: str = "gaussian"

    @classmethod
    def fit(cls, data, bandwidth=None, kernel: str = "gaussian") -> "DensityModel":
        x = as_points(data)
        if x.shape[0] == 0:
            raise ValueError("empty sequence")
        if kernel not in KERNELS:
            raise ValueError(f"unknown kernel {kernel!r}; expected one of {KERNELS}")
        # canonical order keeps the float summation independent of input order
        x = x[np.lexsort(x.T[::-1])]
        return cls(x, _bandwidth(x, bandwidth), kernel)

    @property
    def dim(self) -> int:
        return self.support.shape[1]

    def density(self, points) -> np.ndarray:
        q = as_points(points, self.dim)
        return product_weights(q, self.support, self.bandwidth, self.kernel).mean(axis=1)

    def params(self) -> dict:
        return {"support": self.support, "bandwidth": self.bandwidth, "kernel": self.kernel}

    @classmethod
    def from_params(cls, p: dict) -> "DensityModel":
        return cls(np.asarray(p["support"], dtype=float), np.asarray(p["bandwidth"], dtype=float), p["kernel"])


@dataclass(frozen=True)
class RegressionModel:
    """Nadaraya-Watson mean ``sum_i Y_i K(x - X_i) / sum_i K(x - X_i)``.

    Where every kernel weight vanishes the global response mean is returned.
    """

    x: np.ndarray
    y: np.ndarray
    bandwidth: np.ndarray
    kernel: str = "gaussian"

    @classmethod
    def fit(cls, x, y, bandwidth=None, kernel: str = "gaussian") -> "RegressionModel":
        xs = as_points(x)
        ys = np.asarray(y, dtype=float).ravel()
        if xs.shape[0] == 0:
            raise ValueError("empty sequence")
        if xs.shape[0] != ys.size:
            raise ValueError("x and y lengths differ")
        if kernel not in KERNELS:
            raise ValueError(f"unknown kernel {kernel!r}; expected one of {KERNELS}")
        order = np.lexsort(np.column_stack([xs, ys]).T[::-1])
        xs, ys = xs[order], ys[order]
        return cls(xs, ys, _bandwidth(xs, bandwidth), kernel)

    def predict(self, x) -> np.ndarray:
        q = as_points(x, self.x.shape[1])
        w = product_weights(q, self.x, self.bandwidth, self.kernel)
        tot = w.sum(axis=1)
        num = w @ self.y
        safe = tot > 0
        out = np.full(q.shape[0], self.y.mean())
        out[safe] = num[safe] / tot[safe]
        return out

    def params(self) -> dict:
        return {"x": self.x, "y": self.y, "bandwidth": self.bandwidth, "kernel": self.kernel}

    @classmethod
    def from_params(cls, p: dict) -> "RegressionModel":
        return cls(np.asarray(p["x"], dtype=float), np.asarray(p["y"], dtype=float),
                   np.asarray(p["bandwidth"], dtype=float), p["kernel"])
