"""Score transform base class, point coercion and JSON round-tripping."""

from __future__ import annotations

import json
from typing import Any, Callable, ClassVar

import numpy as np

PERMUTATION_INVARIANT = "permutation-invariant"
TRAINING_SPLIT_ONLY = "training-split-only"
UNCHECKED = "unchecked"
JUSTIFICATIONS = (PERMUTATION_INVARIANT, TRAINING_SPLIT_ONLY, UNCHECKED)

TRANSFORM_SCHEMA_VERSION = 1

_REGISTRY: dict[str, type["ScoreTransform"]] = {}


def as_points(data, dim: int | None = None) -> np.ndarray:
    """Coerce fit data to a 2-D ``(n, d)`` float array.

    A flat sequence is read as ``n`` scalars unless ``dim`` says otherwise.
    """
    a = np.asarray(data, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        if dim is not None and dim > 1:
            if a.size % dim:
                raise ValueError(f"cannot read {a.size} values as {dim}-dimensional points")
            a = a.reshape(-1, dim)
        else:
            a = a.reshape(-1, 1)
    elif a.ndim != 2:
        raise ValueError(f"points must be scalars, vectors or a 2-D array, got shape {a.shape}")
    if dim is not None and a.shape[1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got {a.shape[1]}")
    return a


def _query(z, dim: int) -> tuple[np.ndarray, bool]:
    """Return ``(points, single)`` for an evaluation argument."""
    a = np.asarray(z, dtype=float)
    if a.ndim == 0:
        if dim != 1:
            raise ValueError(f"scalar query for a {dim}-dimensional transform")
        return a.reshape(1, 1), True
    if a.ndim == 1:
        if dim == 1:
            return a.reshape(-1, 1), False
        if a.size == dim:
            return a.reshape(1, dim), True
        raise ValueError(f"query of length {a.size} does not match dimension {dim}")
    if a.ndim == 2 and a.shape[1] == dim:
        return a, False
    raise ValueError(f"query shape {a.shape} does not match dimension {dim}")


def _jsonable(v: Any) -> Any:
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (np.floating, float)):
        f = float(v)
        if np.isposinf(f):
            return "inf"
        if np.isneginf(f):
            return "-inf"
        return f
    if isinstance(v, np.integer):
        return int(v)
    return v


def decode_float(v) -> float:
    if v == "inf":
        return float("inf")
    if v == "-inf":
        return float("-inf")
    return float(v)


class ScoreTransform:
    """A fitted map from the sample space to the reals; small means conforming.

    Subclasses set ``kind`` and implement ``_scores`` on an ``(m, dim)``
    array. ``justification`` records why the transformed sequence stays
    exchangeable: the fit is a symmetric function of its data
    (``permutation-invariant``), it may only be applied to points outside
    its fit data (``training-split-only``), or nobody checked.
    """

    kind: ClassVar[str] = ""
    justification: str = PERMUTATION_INVARIANT
    dim: int = 1

    def __init_subclass__(cls, **kw):
        super().__init_subclass__(**kw)
        if cls.kind:
            _REGISTRY[cls.kind] = cls

    def _scores(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def scores(self, points) -> np.ndarray:
        """Evaluate on a batch; always returns a 1-D array."""
        pts, _ = _query(points, self.dim)
        return np.asarray(self._scores(pts), dtype=float)

    def __call__(self, z):
        pts, single = _query(z, self.dim)
        out = np.asarray(self._scores(pts), dtype=float)
        return float(out[0]) if single else out

    # serialization -------------------------------------------------------
    def params(self) -> dict:
        raise NotImplementedError(f"{type(self).__name__} is not serializable")

    @classmethod
    def from_params(cls, params: dict, dim: int, justification: str) -> "ScoreTransform":
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {
            "schema_version": TRANSFORM_SCHEMA_VERSION,
            "kind": self.kind,
            "justification": self.justification,
            "dim": self.dim,
            "params": _jsonable(self.params()),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def __repr__(self):
        return f"{type(self).__name__}(kind={self.kind!r}, dim={self.dim}, justification={self.justification!r})"


def transform_from_dict(doc: dict) -> ScoreTransform:
    if doc.get("schema_version") != TRANSFORM_SCHEMA_VERSION:
        raise ValueError(f"unsupported transform schema version {doc.get('schema_version')!r}")
    kind = doc["kind"]
    if kind not in _REGISTRY:
        raise ValueError(f"unknown transform kind {kind!r}")
    return _REGISTRY[kind].from_params(doc["params"], int(doc["dim"]), doc["justification"])


def transform_from_json(text: str) -> ScoreTransform:
    return transform_from_dict(json.loads(text))


class IdentityTransform(ScoreTransform):
    """``f(z) = z`` on the real line (one-sided regions, raw-value rank tests)."""

    kind = "identity"

    def __init__(self):
        self.dim = 1
        self.justification = PERMUTATION_INVARIANT

    def _scores(self, points):
        return points[:, 0].copy()

    def params(self):
        return {}

    @classmethod
    def from_params(cls, params, dim, justification):
        return cls()


class UserDefinedTransform(ScoreTransform):
    """Wrap an arbitrary callable ``func(points (m, dim)) -> (m,)``.

    The justification defaults to ``unchecked``; callers who know their
    function was fit symmetrically (or on a training split) may say so.
    """

    kind = "user-defined"

    def __init__(self, func: Callable[[np.ndarray], np.ndarray], dim: int = 1,
                 justification: str = UNCHECKED):
        if justification not in JUSTIFICATIONS:
            raise ValueError(f"unknown justification {justification!r}")
        self.func = func
        self.dim = dim
        self.justification = justification

    def _scores(self, points):
        return np.asarray(self.func(points), dtype=float).ravel()
