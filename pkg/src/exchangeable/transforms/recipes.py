"""Serializable fit recipes: a transform kind plus its fit parameters.

Operations that must refit a transform (full conformal, jackknife+, the
pooled rank tests) take a recipe rather than a fitted transform. Any
callable with the same signature works; :class:`Recipe` is the one that
round-trips through JSON.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import partial
from typing import Callable

from .base import IdentityTransform, ScoreTransform
from .density import (fit_class_probability, fit_conditional_density_score, fit_density_levelset,
                      fit_density_ratio, fit_regression_residual)
from .kmeans import fit_kmeans_score
from .location import fit_abs_deviation, fit_norm_ball, fit_pca_norm_ball

FITTERS: dict[str, Callable[..., ScoreTransform]] = {
    "identity": lambda data: IdentityTransform(),
    "abs-deviation-mean": partial(fit_abs_deviation, center="mean"),
    "abs-deviation-median": partial(fit_abs_deviation, center="median"),
    "norm-ball": fit_norm_ball,
    "pca-norm-ball": fit_pca_norm_ball,
    "density-levelset": fit_density_levelset,
    "regression-residual": fit_regression_residual,
    "conditional-density-hpd": fit_conditional_density_score,
    "kmeans-cluster": fit_kmeans_score,
}

# Label-aware fits take the two labelled samples.
TWO_SAMPLE_FITTERS: dict[str, Callable[..., ScoreTransform]] = {
    "density-ratio": fit_density_ratio,
    "class-probability": fit_class_probability,
}


@dataclass(frozen=True)
class Recipe:
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in FITTERS and self.kind not in TWO_SAMPLE_FITTERS:
            raise ValueError(f"unknown transform kind {self.kind!r}")

    @property
    def labelled(self) -> bool:
        return self.kind in TWO_SAMPLE_FITTERS

    def __call__(self, *samples) -> ScoreTransform:
        if self.labelled:
            if len(samples) != 2:
                raise TypeError(f"{self.kind} is fit on two labelled samples")
            return TWO_SAMPLE_FITTERS[self.kind](*samples, **self.params)
        if len(samples) != 1:
            raise TypeError(f"{self.kind} is fit on a single unlabelled sample")
        return FITTERS[self.kind](samples[0], **self.params)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, d: dict) -> "Recipe":
        return cls(d["kind"], dict(d.get("params", {})))


class JointRecipe:
    """Fit a pair of feature maps ``(f_x, f_y)`` from paired data.

    ``func(x, y)`` may use the pairs jointly, so the result is only valid
    when applied to pairs held out from the fit (split independence test).
    """

    def __init__(self, func: Callable, description: dict | None = None):
        self.func = func
        self.description = description

    @classmethod
    def from_marginals(cls, recipe_x: Recipe, recipe_y: Recipe) -> "JointRecipe":
        return cls(lambda x, y: (recipe_x(x), recipe_y(y)),
                   {"x": recipe_x.to_dict(), "y": recipe_y.to_dict()})

    def __call__(self, x, y):
        return self.func(x, y)

    def to_dict(self) -> dict:
        if self.description is None:
            raise ValueError("joint recipe built from an arbitrary function is not serializable")
        return dict(self.description)
