"""
confsel: weighted conformal p-values and conformalized selection.

Selects test units whose unobserved outcomes exceed their thresholds with
finite-sample false discovery rate control under covariate shift, and ships
a simulation lab for checking the guarantees.
"""

__version__ = "0.1.0"

from .api import ConformalSelector, compute_pvalues, select_units
from .core.types import (
    Method,
    Pruning,
    ScoreKind,
    ScoreSpec,
    SelectionConfig,
    WeightedCalibration,
    WeightedTest,
)
from .inference.selection import SelectionResult, bh, ebh, hc_wcs, select, wcs

__all__ = [
    "__version__",
    "ConformalSelector",
    "compute_pvalues",
    "select_units",
    "Method",
    "Pruning",
    "ScoreKind",
    "ScoreSpec",
    "SelectionConfig",
    "WeightedCalibration",
    "WeightedTest",
    "SelectionResult",
    "bh",
    "ebh",
    "hc_wcs",
    "select",
    "wcs",
]
