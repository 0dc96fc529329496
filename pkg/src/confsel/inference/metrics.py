"""
Evaluation metrics and FDR bounds.

Selections are index collections into the test set; null flags mark units
whose outcome does not exceed their threshold. Every proportion uses the
max{1, |R|} denominator, so empty selections score zero.
"""

from dataclasses import dataclass
import logging
import math
from typing import Any, Dict, Iterable, Optional, Sequence

import numpy as np

from ..core.exceptions import ValidationError
from ..core.types import ArrayLike

logger = logging.getLogger(__name__)


def _indices(selected: Iterable[int], m: int) -> np.ndarray:
    idx = np.unique(np.asarray(list(selected), dtype=np.int64))
    outside = idx[(idx < 0) | (idx >= m)]
    if outside.size:
        raise ValidationError(f"selected index {int(outside[0])} has no null flag (m={m})",
                              field="null_flags")
    return idx


def _flags(null_flags: ArrayLike) -> np.ndarray:
    return np.asarray(null_flags, dtype=bool).reshape(-1)


def _positive(weights: ArrayLike, name: str) -> np.ndarray:
    w = np.asarray(weights, dtype=float).reshape(-1)
    if np.any(~np.isfinite(w) | (w <= 0)):
        raise ValidationError(f"{name} must be finite and strictly positive", field=name)
    return w


def fdp(selected: Iterable[int], null_flags: ArrayLike) -> float:
    """False discovery proportion sum_{j in R} 1{null_j} / max{1, |R|}."""
    flags = _flags(null_flags)
    idx = _indices(selected, flags.size)
    return float(flags[idx].sum()) / max(1, idx.size)


def power(selected: Iterable[int], null_flags: ArrayLike) -> float:
    """
    Fraction of non-null units that were selected.

    Returns 0 when there are no non-null units.
    """
    flags = _flags(null_flags)
    idx = _indices(selected, flags.size)
    n_alternatives = int((~flags).sum())
    if n_alternatives == 0:
        return 0.0
    return float((~flags[idx]).sum()) / n_alternatives


def weighted_fdp(
    selected: Iterable[int], null_flags: ArrayLike, test_weights: ArrayLike
) -> float:
    """Weighted false discovery proportion sum_{j in R} 1{null_j} / w_j / max{1, |R|}."""
    flags = _flags(null_flags)
    w = _positive(test_weights, "test_weights")
    if w.size != flags.size:
        raise ValidationError("test_weights and null_flags must have equal length",
                              field="test_weights")
    idx = _indices(selected, flags.size)
    return float(np.sum(flags[idx] / w[idx])) / max(1, idx.size)


def selection_discrepancy(
    selected: Iterable[int],
    reference: Iterable[int],
    floor_one: bool = False,
) -> float:
    """
    |R delta R_ref| / |R_ref|.

    With an empty reference the ratio is 0 when both sets are empty and +inf
    otherwise. ``floor_one`` divides by max{1, |R_ref|} instead.
    """
    r = set(int(j) for j in selected)
    ref = set(int(j) for j in reference)
    diff = len(r.symmetric_difference(ref))
    if floor_one:
        return diff / max(1, len(ref))
    if not ref:
        return 0.0 if not r else math.inf
    return diff / len(ref)


def estimated_weight_bound(q: float, gamma_hat: float, m: int) -> float:
    """
    FDR bound when selecting with estimated weights.

    q * gamma^2 / (1 + q (gamma^2 - 1) / m), where gamma >= 1 bounds the
    ratio between estimated and true weights in both directions.
    """
    if not (0.0 < q < 1.0):
        raise ValidationError(f"q must lie strictly between 0 and 1, got {q}", field="q")
    if not gamma_hat >= 1.0:
        raise ValidationError(f"gamma_hat must be at least 1, got {gamma_hat}",
                              field="gamma_hat", value=gamma_hat)
    if m < 1:
        raise ValidationError(f"m must be at least 1, got {m}", field="m", value=m)
    g2 = gamma_hat * gamma_hat
    return q * g2 / (1.0 + q * (g2 - 1.0) / m)


def gamma_hat(true_w: ArrayLike, est_w: ArrayLike) -> float:
    """
    max over points of max(w_hat / w, w / w_hat).

    This is the empirical maximum over the supplied points, a lower bound of
    the supremum over the covariate space.
    """
    w = _positive(true_w, "true_w")
    w_hat = _positive(est_w, "est_w")
    if w.size != w_hat.size:
        raise ValidationError("weight arrays must have equal length", field="est_w")
    if w.size == 0:
        return 1.0
    ratio = w_hat / w
    return float(max(1.0, np.max(ratio), np.max(1.0 / ratio)))


def weighted_fdr_plugin(calib_weights: ArrayLike, test_weights: ArrayLike) -> float:
    """
    Plug-in of E[(n + 1) / (sum_i w_i + w_{n+j})] averaged over test units.

    Multiplied by q this is the right side of the weighted-FDR guarantee for
    BH on unweighted conformal p-values.
    """
    cw = np.asarray(calib_weights, dtype=float).reshape(-1)
    tw = _positive(test_weights, "test_weights")
    if tw.size == 0:
        return 0.0
    return math.fsum((cw.size + 1.0) / (math.fsum(cw) + tw)) / tw.size


@dataclass(frozen=True)
class MeanEstimate:
    """Sample mean with its normal standard error."""
    mean: float
    se: float
    count: int

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary."""
        return {"mean": self.mean, "se": self.se, "count": self.count}


def aggregate(values: Sequence[float]) -> MeanEstimate:
    """Mean and standard error with compensated summation; NaN mean when empty."""
    vals = [float(v) for v in values]
    count = len(vals)
    if count == 0:
        return MeanEstimate(math.nan, math.nan, 0)
    mean = math.fsum(vals) / count
    if count == 1:
        return MeanEstimate(mean, 0.0, 1)
    var = math.fsum((v - mean) ** 2 for v in vals) / (count - 1)
    return MeanEstimate(mean, math.sqrt(var / count), count)


@dataclass(frozen=True)
class TrialMetrics:
    """
    Metrics of one selection in one trial.

    Attributes:
        fdp: false discovery proportion
        power: fraction of non-nulls selected
        weighted_fdp: nulls weighted by 1 / w_j
        n_selected: |R|
        discrepancy: |R delta R_ref| / |R_ref| against a reference selection
    """
    fdp: float
    power: float
    weighted_fdp: float
    n_selected: int
    discrepancy: Optional[float] = None

    @classmethod
    def compute(
        cls,
        selected: Iterable[int],
        null_flags: ArrayLike,
        test_weights: ArrayLike,
        reference: Optional[Iterable[int]] = None,
    ) -> "TrialMetrics":
        """Evaluate every metric for one selection."""
        chosen = list(selected)
        return cls(
            fdp=fdp(chosen, null_flags),
            power=power(chosen, null_flags),
            weighted_fdp=weighted_fdp(chosen, null_flags, test_weights),
            n_selected=len(set(chosen)),
            discrepancy=None if reference is None else selection_discrepancy(chosen, reference),
        )

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary."""
        return {
            "fdp": self.fdp,
            "power": self.power,
            "weighted_fdp": self.weighted_fdp,
            "n_selected": self.n_selected,
            "discrepancy": self.discrepancy,
        }
