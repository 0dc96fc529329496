"""
Multiple-testing engines.

- ``bh``: Benjamini-Hochberg step-up on arbitrary p-values (WBH when fed
  weighted conformal p-values).
- ``wcs``: weighted conformalized selection. Each unit j gets a calibrated
  threshold s_j = q |R_{j->0}| / m, where R_{j->0} is the BH rejection set of
  the auxiliary p-values with a zero planted at position j; the first-step
  set {p_j <= s_j} is then pruned (hete / homo / dtm).
- ``hc_wcs``: the hypothesis-conditional variant. The arithmetic is the same;
  only the provenance of the test scores differs (scores of full
  observations, no threshold substitution).
- ``evalues_from_wcs`` / ``ebh``: the e-value view, under which eBH
  reproduces deterministic pruning exactly.
"""

from dataclasses import dataclass
import json
import logging
from typing import Any, Dict, Iterable, Optional, Union

import numpy as np

from ..core.exceptions import SelectionError, ValidationError
from ..core.rng import Stream, keyed_uniforms
from ..core.types import (
    ArrayLike,
    Method,
    Pruning,
    SelectionConfig,
    WeightedCalibration,
    WeightedTest,
)
from .pvalues import (
    PValueVector,
    aux_pvalue_matrix,
    weighted_mass_below,
    wcp_nonrandomized,
    wcp_randomized,
)

logger = logging.getLogger(__name__)

# anchors per block in the vectorized R_{j->0} computation: block * m <= this
_BLOCK_ENTRIES = 1 << 22


def _index_array(values: Iterable[int]) -> np.ndarray:
    arr = np.asarray(sorted(int(v) for v in values), dtype=np.int64)
    arr.setflags(write=False)
    return arr


def _check_q(q: float) -> float:
    if not (np.isfinite(q) and 0.0 < q < 1.0):
        raise ValidationError(f"q must lie strictly between 0 and 1, got {q}",
                              field="q", value=q)
    return float(q)


def bh_thresholds(q: float, m: int) -> np.ndarray:
    """Step-up thresholds q k / m for k = 1..m."""
    return q * np.arange(1, m + 1) / m


@dataclass(frozen=True, eq=False)
class SelectionResult:
    """
    Output of a selection engine with its diagnostics.

    Attributes:
        selected: sorted selected indices
        first_step: sorted first-step set R^(1) (equals ``selected`` for BH)
        s: calibrated thresholds s_j = q |R_{j->0}| / m (None for BH)
        sizes: |R_{j->0}| per unit (None for BH)
        pvalues: the p-values the engine ran on
        r_star: pruning cutoff, equal to the number of selected units
        bh_kstar: BH step-up index (BH only)
        method: engine that produced the result
        pruning: pruning rule (conformalized selection only)
        q: nominal level
        seed: seed of the random pruning or tie-breaking draws, if any
    """
    selected: np.ndarray
    first_step: np.ndarray
    s: Optional[np.ndarray]
    sizes: Optional[np.ndarray]
    pvalues: np.ndarray
    r_star: int
    bh_kstar: Optional[int]
    method: Method
    q: float
    pruning: Optional[Pruning] = None
    seed: Optional[int] = None

    @property
    def n_selected(self) -> int:
        """Number of selected units."""
        return int(self.selected.size)

    @property
    def m(self) -> int:
        """Number of test units."""
        return int(self.pvalues.size)

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary."""
        return {
            "method": self.method.value,
            "pruning": None if self.pruning is None else self.pruning.value,
            "q": self.q,
            "seed": self.seed,
            "selected": self.selected.tolist(),
            "first_step": self.first_step.tolist(),
            "s": None if self.s is None else self.s.tolist(),
            "sizes": None if self.sizes is None else self.sizes.tolist(),
            "pvalues": self.pvalues.tolist(),
            "r_star": self.r_star,
            "bh_kstar": self.bh_kstar,
        }

    def to_json(self, indent: Optional[int] = 2) -> str:
        """Convert to JSON string."""
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)


@dataclass(frozen=True, eq=False)
class EValueVector:
    """Nonnegative e-values, one per test unit."""
    values: np.ndarray

    def __post_init__(self) -> None:
        """Validate and freeze."""
        values = np.array(self.values, dtype=float, copy=True).reshape(-1)
        if values.size and not np.all(values >= 0.0):
            raise ValidationError("e-values must be nonnegative", field="values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return int(self.values.size)


def _bh_kstar(pvalues: np.ndarray, q: float) -> int:
    m = pvalues.size
    if m == 0:
        return 0
    ok = np.flatnonzero(np.sort(pvalues) <= bh_thresholds(q, m))
    return int(ok[-1]) + 1 if ok.size else 0


def bh(pvalues: Union[ArrayLike, PValueVector], q: float) -> SelectionResult:
    """
    Benjamini-Hochberg step-up procedure.

    Rejects {j: p_j <= q k*/m} with k* = max{k: #{j: p_j <= q k/m} >= k},
    or nothing when k* = 0.
    """
    q = _check_q(q)
    p = pvalues.values if isinstance(pvalues, PValueVector) else np.asarray(pvalues, dtype=float)
    p = p.reshape(-1)
    if p.size and not np.all((p >= 0.0) & (p <= 1.0)):
        raise ValidationError("p-values must lie in [0, 1]", field="pvalues")
    kstar = _bh_kstar(p, q)
    if kstar:
        cutoff = bh_thresholds(q, p.size)[kstar - 1]
        selected = _index_array(np.flatnonzero(p <= cutoff))
    else:
        selected = _index_array([])
    logger.debug(f"BH at q={q}: k*={kstar} of m={p.size}")
    return SelectionResult(
        selected=selected,
        first_step=selected,
        s=None,
        sizes=None,
        pvalues=np.array(p, copy=True),
        r_star=int(selected.size),
        bh_kstar=kstar,
        method=Method.WBH,
        q=q,
    )


def rejection_sizes(
    calib: WeightedCalibration,
    test: WeightedTest,
    q: float,
    tie_tolerance: float = 0.0,
    naive: bool = False,
) -> np.ndarray:
    """
    |R_{j->0}| for every anchor j.

    The auxiliary numerators A(V_hat_l) + w_j 1{V_hat_j < V_hat_l} are
    nondecreasing in V_hat_l for every anchor, so one global sort of the test
    scores orders every anchor's auxiliary p-values. Per anchor the step-up
    search is then a single vectorized comparison, done in blocks of anchors.
    """
    q = _check_q(q)
    m = test.m
    if m == 0:
        return np.zeros(0, dtype=np.int64)
    if naive:
        return _rejection_sizes_naive(calib, test, q, tie_tolerance)
    below, _, total = weighted_mass_below(calib, test.scores, tie_tolerance)
    tol = float(tie_tolerance)

    v = test.scores
    w = test.weights
    order = np.argsort(v, kind="stable")
    v_sorted = v[order]
    below_sorted = below[order]
    position = np.empty(m, dtype=np.int64)
    position[order] = np.arange(m)
    thresholds = bh_thresholds(q, m)
    cols = np.arange(m - 1)
    sizes = np.empty(m, dtype=np.int64)
    block = max(1, _BLOCK_ENTRIES // m)

    for start in range(0, m, block):
        anchors = np.arange(start, min(m, start + block))
        w_j = w[anchors]
        numer = below_sorted[None, :] + w_j[:, None] * (
            v_sorted[None, :] > (v[anchors] + tol)[:, None]
        )
        p_sorted = np.minimum(numer / (total + w_j)[:, None], 1.0)
        # drop the anchor's own column; the remaining row stays ascending
        src = cols[None, :] + (cols[None, :] >= position[anchors][:, None])
        others = np.take_along_axis(p_sorted, src, axis=1)
        planted = np.concatenate([np.zeros((anchors.size, 1)), others], axis=1)
        ok = planted <= thresholds[None, :]
        sizes[anchors] = m - np.argmax(ok[:, ::-1], axis=1)
    return sizes


def _rejection_sizes_naive(
    calib: WeightedCalibration, test: WeightedTest, q: float, tie_tolerance: float
) -> np.ndarray:
    """One BH run per anchor on its row of the auxiliary matrix, zero planted."""
    matrix = aux_pvalue_matrix(calib, test, tie_tolerance, naive=True)
    sizes = np.empty(matrix.m, dtype=np.int64)
    for j in range(matrix.m):
        aux = np.array(matrix.values[j], copy=True)
        aux[j] = 0.0
        sizes[j] = bh(aux, q).n_selected
    return sizes


def _pruning_uniforms(
    rule: Pruning, m: int, seed: int, xi: Optional[ArrayLike]
) -> np.ndarray:
    if xi is not None:
        values = np.broadcast_to(np.asarray(xi, dtype=float), (m,)).copy()
        if not np.all((values >= 0.0) & (values <= 1.0)):
            raise ValidationError("pruning uniforms must lie in [0, 1]", field="xi")
        return values
    if rule is Pruning.HETE:
        return keyed_uniforms(seed, Stream.PRUNE_HETE, m)
    if rule is Pruning.HOMO:
        return np.full(m, keyed_uniforms(seed, Stream.PRUNE_HOMO, 1)[0])
    return np.ones(m)


def _prune(first: np.ndarray, scaled_sizes: np.ndarray) -> np.ndarray:
    """
    r* = max{r >= 0: #{j in R^(1): xi_j |R_{j->0}| <= r} >= r}.

    Returns the boolean mask of {j in R^(1): xi_j |R_{j->0}| <= r*}.
    """
    candidates = np.sort(scaled_sizes[first])
    r = np.arange(candidates.size + 1)
    counts = np.searchsorted(candidates, r, side="right")
    r_star = int(r[counts >= r].max())
    return first & (scaled_sizes <= r_star)


def _conformalized_selection(
    calib: WeightedCalibration,
    test: WeightedTest,
    config: SelectionConfig,
    method: Method,
    rule: Pruning,
    xi: Optional[ArrayLike],
    naive: bool,
) -> SelectionResult:
    q = config.q
    m = test.m
    p = wcp_nonrandomized(calib, test, config.tie_tolerance, naive).values
    sizes = rejection_sizes(calib, test, q, config.tie_tolerance, naive)
    s = q * sizes / m if m else np.zeros(0)
    first = p <= s
    uniforms = _pruning_uniforms(rule, m, config.seed, xi)
    keep = _prune(first, uniforms * sizes)
    selected = _index_array(np.flatnonzero(keep))
    logger.debug(
        f"{method.value}/{rule.value}: |R1|={int(first.sum())}, "
        f"selected={selected.size} of m={m}"
    )
    return SelectionResult(
        selected=selected,
        first_step=_index_array(np.flatnonzero(first)),
        s=s,
        sizes=sizes,
        pvalues=p,
        r_star=int(selected.size),
        bh_kstar=None,
        method=method,
        q=q,
        pruning=rule,
        seed=None if rule is Pruning.DTM and xi is None else int(config.seed),
    )


def wcs(
    calib: WeightedCalibration,
    test: WeightedTest,
    config: SelectionConfig,
    xi: Optional[ArrayLike] = None,
    naive: bool = False,
) -> SelectionResult:
    """
    Weighted conformalized selection.

    Args:
        calib: calibration scores V(X_i, Y_i) and weights
        test: test scores V(X_{n+j}, c_{n+j}) and weights
        config: level, pruning method (wcs_hete / wcs_homo / wcs_dtm) and seed
        xi: override of the pruning uniforms (scalar or one per unit)
        naive: use the quadratic reference path throughout

    Returns:
        SelectionResult with first-step set, thresholds and pruning cutoff

    Raises:
        SelectionError: if config.method is not a wcs_* method
    """
    if config.method not in (Method.WCS_HETE, Method.WCS_HOMO, Method.WCS_DTM):
        raise SelectionError(f"wcs cannot run method '{config.method.value}'",
                             method=config.method.value)
    return _conformalized_selection(calib, test, config, config.method,
                                    config.pruning_rule, xi, naive)


def hc_wcs(
    calib: WeightedCalibration,
    test: WeightedTest,
    config: SelectionConfig,
    xi: Optional[ArrayLike] = None,
    naive: bool = False,
) -> SelectionResult:
    """
    Hypothesis-conditional weighted conformalized selection.

    Calibration holds null units only and test scores are V(Z_{n+j}) on full
    observations; the computation is otherwise that of ``wcs``, with the
    pruning rule taken from ``config.pruning``.
    """
    return _conformalized_selection(calib, test, config, Method.HC_WCS,
                                    config.pruning, xi, naive)


def select(
    calib: WeightedCalibration,
    test: WeightedTest,
    config: SelectionConfig,
    u: Optional[ArrayLike] = None,
) -> SelectionResult:
    """
    Run the engine named by ``config.method``.

    WBH runs BH on randomized weighted conformal p-values (tie-breaking
    uniforms from ``u`` or the config seed) unless ``randomized_pvalues`` is
    off, in which case the non-randomized p-values are used.
    """
    if config.method is Method.WBH:
        if config.randomized_pvalues:
            pv = wcp_randomized(calib, test, u=u, seed=config.seed,
                                tie_tolerance=config.tie_tolerance)
        else:
            pv = wcp_nonrandomized(calib, test, config.tie_tolerance)
        result = bh(pv, config.q)
        return SelectionResult(
            selected=result.selected,
            first_step=result.first_step,
            s=None,
            sizes=None,
            pvalues=result.pvalues,
            r_star=result.r_star,
            bh_kstar=result.bh_kstar,
            method=Method.WBH,
            q=config.q,
            seed=pv.seed_used,
        )
    if config.method is Method.HC_WCS:
        return hc_wcs(calib, test, config)
    return wcs(calib, test, config)


def evalues_from_wcs(
    pvalues: ArrayLike, sizes: ArrayLike, q: float, m: int
) -> EValueVector:
    """
    e_j = 1{p_j <= s_j} / s_j with s_j = q |R_{j->0}| / m.

    eBH on these e-values returns the deterministic-pruning selection.
    """
    q = _check_q(q)
    p = np.asarray(pvalues, dtype=float).reshape(-1)
    sizes_arr = np.asarray(sizes).reshape(-1)
    if np.any(sizes_arr < 1):
        raise ValidationError("rejection-set sizes must be at least 1", field="sizes")
    if p.size != sizes_arr.size:
        raise ValidationError("pvalues and sizes must have equal length", field="sizes")
    s = q * sizes_arr / m
    return EValueVector(np.where(p <= s, 1.0 / s, 0.0))


def ebh(evalues: Union[EValueVector, ArrayLike], q: float) -> np.ndarray:
    """
    eBH procedure.

    Selects {j: e_j >= m / (q k_hat)} with
    k_hat = max{k: #{j: e_j >= m / (q k)} >= k}; empty when no k qualifies.
    The cutoffs are evaluated as 1 / (q k / m) so that they coincide bitwise
    with the reciprocals of calibrated thresholds.
    """
    q = _check_q(q)
    e = evalues.values if isinstance(evalues, EValueVector) else EValueVector(evalues).values
    m = e.size
    if m == 0:
        return _index_array([])
    cutoffs = 1.0 / bh_thresholds(q, m)
    ok = np.flatnonzero(np.sort(e)[::-1] >= cutoffs)
    if not ok.size:
        return _index_array([])
    k_hat = int(ok[-1]) + 1
    return _index_array(np.flatnonzero(e >= cutoffs[k_hat - 1]))
