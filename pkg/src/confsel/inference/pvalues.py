"""
Weighted conformal p-values.

All variants share one quantity: the calibration weight strictly below a
query score, A(v) = sum_i w_i 1{V_i < v}, and the calibration weight tied
with it. Calibration scores are sorted once and their weights prefix-summed,
so each query costs a binary search.

Every public function takes ``naive=True`` to run the O(n*m) reference path
instead. The reference accumulates weights in ascending-score order, so both
paths produce bitwise identical floats.
"""

from dataclasses import dataclass, field
from enum import Enum
import logging
from typing import Any, Dict, Optional, Tuple

import numpy as np

from ..core.exceptions import ValidationError
from ..core.rng import Stream, keyed_uniforms
from ..core.types import ArrayLike, WeightedCalibration, WeightedTest

logger = logging.getLogger(__name__)


class PValueKind(Enum):
    """Provenance of a p-value vector."""
    RANDOMIZED = "randomized"
    NONRANDOMIZED = "nonrandomized"
    AUXILIARY = "auxiliary"
    ORACLE = "oracle"
    UNWEIGHTED = "unweighted"


@dataclass(frozen=True, eq=False)
class PValueVector:
    """
    Per-test-unit p-values with provenance.

    Attributes:
        values: p-values in [0, 1]
        kind: which construction produced them
        seed_used: seed of the tie-breaking uniforms, if they were drawn
    """
    values: np.ndarray
    kind: PValueKind
    seed_used: Optional[int] = None

    def __post_init__(self) -> None:
        """Validate range and freeze."""
        values = np.array(self.values, dtype=float, copy=True).reshape(-1)
        if values.size and not np.all((values >= 0.0) & (values <= 1.0)):
            raise ValidationError("p-values must lie in [0, 1]", field="values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return int(self.values.size)

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary."""
        return {
            "values": self.values.tolist(),
            "kind": self.kind.value,
            "seed_used": self.seed_used,
        }


@dataclass(frozen=True, eq=False)
class AuxPValueMatrix:
    """
    Auxiliary p-values p_l^{(j)} for every anchor j.

    Row j holds p_l^{(j)} at column l; the diagonal is reserved (NaN).
    ``numerators`` caches A(V_hat_l) and ``denominators`` the per-anchor
    sum_i w_i + w_j.
    """
    values: np.ndarray
    numerators: np.ndarray
    denominators: np.ndarray = field(repr=False)

    @property
    def m(self) -> int:
        """Number of test units."""
        return int(self.values.shape[0])

    def row(self, anchor_j: int) -> np.ndarray:
        """p_l^{(j)} for l != j, in increasing l."""
        return np.delete(self.values[anchor_j], anchor_j)


def _check_tolerance(tie_tolerance: float) -> float:
    tol = float(tie_tolerance)
    if not (np.isfinite(tol) and tol >= 0):
        raise ValidationError("tie_tolerance must be a nonnegative finite number",
                              field="tie_tolerance", value=tie_tolerance)
    return tol


def weighted_mass_below(
    calib: WeightedCalibration,
    query: ArrayLike,
    tie_tolerance: float = 0.0,
    naive: bool = False,
) -> Tuple[np.ndarray, np.ndarray, float]:
    """
    Calibration weight below and tied with each query score.

    A score V_i is tied with v when |V_i - v| <= tie_tolerance and below it
    when V_i < v - tie_tolerance.

    Returns:
        (below, tied, total) where below and tied are arrays aligned with query
    """
    tol = _check_tolerance(tie_tolerance)
    query = np.asarray(query, dtype=float).reshape(-1)
    order = np.argsort(calib.scores, kind="stable")
    sorted_scores = calib.scores[order]
    sorted_weights = calib.weights[order]
    if naive:
        return _mass_below_naive(sorted_scores, sorted_weights, query, tol)

    cum = np.concatenate(([0.0], np.cumsum(sorted_weights)))
    lo = np.searchsorted(sorted_scores, query - tol, side="left")
    hi = np.searchsorted(sorted_scores, query + tol, side="right")
    below = cum[lo]
    return below, cum[hi] - below, float(cum[-1])


def _mass_below_naive(
    sorted_scores: np.ndarray, sorted_weights: np.ndarray, query: np.ndarray, tol: float
) -> Tuple[np.ndarray, np.ndarray, float]:
    below = np.empty(query.size)
    tied = np.empty(query.size)
    for k, v in enumerate(query):
        acc_below = 0.0
        acc_upto = 0.0
        for score, weight in zip(sorted_scores.tolist(), sorted_weights.tolist()):
            if score < v - tol:
                acc_below += weight
            if score <= v + tol:
                acc_upto += weight
        below[k] = acc_below
        tied[k] = acc_upto - acc_below
    total = 0.0
    for weight in sorted_weights.tolist():
        total += weight
    return below, tied, total


def _resolve_uniforms(u: Optional[ArrayLike], seed: Optional[int], m: int) -> np.ndarray:
    if u is None:
        return keyed_uniforms(seed, Stream.TIE_BREAK, m)
    u_arr = np.asarray(u, dtype=float).reshape(-1)
    if u_arr.size == 1 and m != 1:
        u_arr = np.full(m, float(u_arr[0]))
    if u_arr.size != m:
        raise ValidationError(f"expected {m} tie-breaking uniforms, got {u_arr.size}", field="u")
    if not np.all((u_arr >= 0.0) & (u_arr <= 1.0)):
        raise ValidationError("tie-breaking uniforms must lie in [0, 1]", field="u")
    return u_arr


def wcp_nonrandomized(
    calib: WeightedCalibration,
    test: WeightedTest,
    tie_tolerance: float = 0.0,
    naive: bool = False,
) -> PValueVector:
    """
    Non-randomized weighted conformal p-values.

    p_j = [sum_i w_i 1{V_i < V_hat_j} + w_j] / [sum_i w_i + w_j].
    An empty calibration set gives p_j = 1.
    """
    if calib.n == 0:
        logger.warning("Empty calibration set: every p-value equals 1")
    below, _, total = weighted_mass_below(calib, test.scores, tie_tolerance, naive)
    w = test.weights
    values = np.minimum((below + w) / (total + w), 1.0)
    return PValueVector(values, PValueKind.NONRANDOMIZED)


def wcp_randomized(
    calib: WeightedCalibration,
    test: WeightedTest,
    u: Optional[ArrayLike] = None,
    seed: Optional[int] = None,
    tie_tolerance: float = 0.0,
    naive: bool = False,
) -> PValueVector:
    """
    Randomized weighted conformal p-values.

    p_j = [sum_i w_i 1{V_i < V_hat_j} + (w_j + sum_i w_i 1{V_i = V_hat_j}) u_j]
          / [sum_i w_i + w_j]

    Args:
        calib: calibration scores and weights
        test: test scores and weights
        u: tie-breaking uniforms, one per test unit; drawn from the keyed
            stream of ``seed`` when omitted
        seed: master seed for the drawn uniforms
        tie_tolerance: score distance treated as a tie
        naive: use the O(n*m) reference path

    Returns:
        PValueVector of kind RANDOMIZED
    """
    u_arr = _resolve_uniforms(u, seed, test.m)
    below, tied, total = weighted_mass_below(calib, test.scores, tie_tolerance, naive)
    w = test.weights
    values = np.minimum((below + (w + tied) * u_arr) / (total + w), 1.0)
    return PValueVector(values, PValueKind.RANDOMIZED,
                        seed_used=None if u is not None else int(seed or 0))


def unweighted_pvalues(
    calib_scores: ArrayLike,
    test_scores: ArrayLike,
    u: Optional[ArrayLike] = None,
    seed: Optional[int] = None,
    tie_tolerance: float = 0.0,
) -> PValueVector:
    """
    Unweighted randomized conformal p-values.

    p_j = [#{V_i < V_hat_j} + u_j (1 + #{V_i = V_hat_j})] / (n + 1).
    """
    tol = _check_tolerance(tie_tolerance)
    scores = np.sort(np.asarray(calib_scores, dtype=float).reshape(-1))
    query = np.asarray(test_scores, dtype=float).reshape(-1)
    u_arr = _resolve_uniforms(u, seed, query.size)
    lo = np.searchsorted(scores, query - tol, side="left")
    hi = np.searchsorted(scores, query + tol, side="right")
    values = np.minimum((lo + (1.0 + (hi - lo)) * u_arr) / (scores.size + 1.0), 1.0)
    return PValueVector(values, PValueKind.UNWEIGHTED,
                        seed_used=None if u is not None else int(seed or 0))


def oracle_pvalues(
    calib: WeightedCalibration,
    oracle_scores: ArrayLike,
    weights: ArrayLike,
    u: Optional[ArrayLike] = None,
    tie_tolerance: float = 0.0,
    naive: bool = False,
) -> PValueVector:
    """
    Oracle p-values computed from the true-outcome scores V(X_{n+j}, Y_{n+j}).

    Without ``u`` this is the non-randomized formula with V_hat replaced by
    the oracle scores; with ``u`` it is the randomized one, which is exactly
    uniform under exchangeability with correct weights.
    """
    test = WeightedTest(oracle_scores, weights)
    if u is None:
        values = wcp_nonrandomized(calib, test, tie_tolerance, naive).values
    else:
        values = wcp_randomized(calib, test, u=u, tie_tolerance=tie_tolerance,
                                naive=naive).values
    return PValueVector(values, PValueKind.ORACLE)


def aux_pvalues(
    calib: WeightedCalibration,
    test: WeightedTest,
    anchor_j: int,
    anchor_score: Optional[float] = None,
    tie_tolerance: float = 0.0,
    naive: bool = False,
) -> PValueVector:
    """
    Auxiliary p-values p_l^{(j)} for one anchor j, l != j, in increasing l.

    p_l^{(j)} = [sum_i w_i 1{V_i < V_hat_l} + w_j 1{V_hat_j < V_hat_l}]
                / [sum_i w_i + w_j]

    ``anchor_score`` replaces V_hat_j in the indicator, which yields the
    leave-one-out oracle values when the anchor's true-outcome score is given.
    """
    m = test.m
    if not (0 <= anchor_j < m):
        raise ValidationError(f"anchor index {anchor_j} out of range for m={m}",
                              field="anchor_j", value=anchor_j)
    tol = _check_tolerance(tie_tolerance)
    below, _, total = weighted_mass_below(calib, test.scores, tol, naive)
    anchor = test.scores[anchor_j] if anchor_score is None else float(anchor_score)
    w_j = test.weights[anchor_j]
    others = np.delete(np.arange(m), anchor_j)
    numer = below[others] + w_j * (test.scores[others] > anchor + tol)
    values = np.minimum(numer / (total + w_j), 1.0)
    return PValueVector(values, PValueKind.AUXILIARY)


def aux_pvalue_matrix(
    calib: WeightedCalibration,
    test: WeightedTest,
    tie_tolerance: float = 0.0,
    naive: bool = False,
) -> AuxPValueMatrix:
    """All auxiliary p-values as an m x m matrix with a NaN diagonal."""
    tol = _check_tolerance(tie_tolerance)
    below, _, total = weighted_mass_below(calib, test.scores, tol, naive)
    v = test.scores
    w = test.weights
    denominators = total + w
    numer = below[None, :] + w[:, None] * (v[None, :] > (v + tol)[:, None])
    values = np.minimum(numer / denominators[:, None], 1.0)
    np.fill_diagonal(values, np.nan)
    values.setflags(write=False)
    return AuxPValueMatrix(values, below, denominators)
