"""P-values, selection engines and evaluation metrics."""

from .metrics import (
    MeanEstimate,
    TrialMetrics,
    aggregate,
    estimated_weight_bound,
    fdp,
    gamma_hat,
    power,
    selection_discrepancy,
    weighted_fdp,
    weighted_fdr_plugin,
)
from .pvalues import (
    AuxPValueMatrix,
    PValueKind,
    PValueVector,
    aux_pvalue_matrix,
    aux_pvalues,
    oracle_pvalues,
    unweighted_pvalues,
    wcp_nonrandomized,
    wcp_randomized,
    weighted_mass_below,
)
from .selection import (
    EValueVector,
    SelectionResult,
    bh,
    ebh,
    evalues_from_wcs,
    hc_wcs,
    rejection_sizes,
    select,
    wcs,
)

__all__ = [
    "MeanEstimate",
    "TrialMetrics",
    "aggregate",
    "estimated_weight_bound",
    "fdp",
    "gamma_hat",
    "power",
    "selection_discrepancy",
    "weighted_fdp",
    "weighted_fdr_plugin",
    "AuxPValueMatrix",
    "PValueKind",
    "PValueVector",
    "aux_pvalue_matrix",
    "aux_pvalues",
    "oracle_pvalues",
    "unweighted_pvalues",
    "wcp_nonrandomized",
    "wcp_randomized",
    "weighted_mass_below",
    "EValueVector",
    "SelectionResult",
    "bh",
    "ebh",
    "evalues_from_wcs",
    "hc_wcs",
    "rejection_sizes",
    "select",
    "wcs",
]
