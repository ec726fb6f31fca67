"""Fitted score transforms mapping a sample space to the real line."""

from .base import (JUSTIFICATIONS, PERMUTATION_INVARIANT, TRAINING_SPLIT_ONLY, UNCHECKED, IdentityTransform,
                   ScoreTransform, UserDefinedTransform, as_points, transform_from_dict, transform_from_json)
from .density import (ClassProbabilityTransform, ConditionalDensityHPDTransform, DensityLevelSetTransform,
                      DensityRatioTransform, RegressionResidualTransform, fit_class_probability,
                      fit_conditional_density_score, fit_density_levelset, fit_density_ratio,
                      fit_regression_residual, hpd_scores)
from .kernels import DensityModel, RegressionModel, default_bandwidth
from .kmeans import KMeansModel, KMeansScoreTransform, fit_kmeans_score, kmeans
from .location import (AbsDeviationTransform, NormBallTransform, PCANormBallTransform, elbow_components,
                       fit_abs_deviation, fit_norm_ball, fit_pca_norm_ball)
from .recipes import FITTERS, TWO_SAMPLE_FITTERS, JointRecipe, Recipe

__all__ = [
    "JUSTIFICATIONS", "PERMUTATION_INVARIANT", "TRAINING_SPLIT_ONLY", "UNCHECKED",
    "ScoreTransform", "IdentityTransform", "UserDefinedTransform", "as_points",
    "transform_from_dict", "transform_from_json",
    "AbsDeviationTransform", "NormBallTransform", "PCANormBallTransform",
    "DensityLevelSetTransform", "DensityRatioTransform", "ClassProbabilityTransform",
    "ConditionalDensityHPDTransform", "RegressionResidualTransform", "KMeansScoreTransform",
    "DensityModel", "RegressionModel", "KMeansModel", "default_bandwidth", "kmeans",
    "fit_abs_deviation", "fit_norm_ball", "fit_pca_norm_ball", "fit_density_levelset",
    "fit_regression_residual", "fit_conditional_density_score", "fit_kmeans_score",
    "fit_density_ratio", "fit_class_probability", "hpd_scores", "elbow_components",
    "Recipe", "JointRecipe", "FITTERS", "TWO_SAMPLE_FITTERS",
]
