"""Distribution-free inference from exchangeability.

Conformal prediction regions (full, split, jackknife+, CV+ and
Bonferroni-combined splits), transform-augmented Wilcoxon and Spearman
rank tests, and a Monte Carlo harness that checks their finite-sample
guarantees.
"""

from .ranks import JitterConfig, RankVector, jitter, rank_cdf_pvalue, ranks, stream
from .conformal import (PredictionRegion, RegionSpec, conformal_index, cross_section, extract_interval,
                        full_conformal_general, full_conformal_real, split_conformal)

__version__ = "0.1.0"
