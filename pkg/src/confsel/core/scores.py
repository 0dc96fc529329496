"""
Monotone nonconformity scores.

Every constructor is nondecreasing in the hypothesized outcome y for fixed
remaining arguments, which is what makes the conformal p-values valid for
the one-sided null Y <= c. Predictions are caller-supplied numbers; nothing
here fits a model.

The constructors accept scalars or numpy arrays and broadcast element-wise;
scalar inputs return a plain float.
"""

from dataclasses import dataclass
from typing import Any, Dict, Hashable, Iterable, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .exceptions import ValidationError
from .types import ScoreKind, ScoreSpec

Number = Union[float, np.ndarray]


def _finite(value: Any, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} must be finite", field=name)
    return arr


def _unwrap(result: np.ndarray) -> Number:
    return float(result) if np.ndim(result) == 0 else result


def score_res(y: Number, mu_hat: Number) -> Number:
    """Residual score V(x, y) = y - mu_hat(x)."""
    return _unwrap(_finite(y, "y") - _finite(mu_hat, "mu_hat"))


def score_clip(y: Number, c: Number, M: float, mu_hat: Number) -> Number:
    """
    Clipped score V(x, y) = M * 1{y > c} + c * 1{y <= c} - mu_hat(x).

    With M > 2 * max|mu_hat| the scores of units above their threshold are
    separated from every score at or below it.
    """
    y_arr = _finite(y, "y")
    c_arr = _finite(c, "c")
    m_arr = _finite(M, "M")
    mu = _finite(mu_hat, "mu_hat")
    return _unwrap(np.where(y_arr > c_arr, m_arr, c_arr) - mu)


def score_cqr(y: Number, q_beta_hat: Number) -> Number:
    """Quantile score V(x, y) = y - q_beta_hat(x)."""
    return _unwrap(_finite(y, "y") - _finite(q_beta_hat, "q_beta_hat"))


def apply_score(
    spec: ScoreSpec,
    y: Number,
    prediction: Number,
    threshold: Optional[Number] = None,
) -> np.ndarray:
    """
    Evaluate a score family element-wise.

    Args:
        spec: score description
        y: outcomes (or thresholds c for test units)
        prediction: mu_hat for res/clip, q_beta_hat for cqr, or the already
            evaluated conditional cdf F_hat(x, y) for cdf_passthrough
        threshold: c(x) for the clip score

    Returns:
        Array of scores
    """
    if spec.kind is ScoreKind.RES:
        out = score_res(y, prediction)
    elif spec.kind is ScoreKind.CQR:
        out = score_cqr(y, prediction)
    elif spec.kind is ScoreKind.CLIP:
        if threshold is None:
            raise ValidationError("clip score requires thresholds c(x)", field="threshold")
        out = score_clip(y, threshold, spec.clip_constant, prediction)
    else:
        out = _finite(prediction, "cdf")
    return np.atleast_1d(np.asarray(out, dtype=float))


@dataclass(frozen=True)
class MonotonicityReport:
    """Outcome of a monotonicity check over grouped (y, V) rows."""
    ok: bool
    group: Optional[Hashable] = None
    y_pair: Optional[Tuple[float, float]] = None
    score_pair: Optional[Tuple[float, float]] = None

    def __bool__(self) -> bool:
        return self.ok

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary."""
        return {
            "ok": self.ok,
            "group": self.group,
            "y_pair": None if self.y_pair is None else list(self.y_pair),
            "score_pair": None if self.score_pair is None else list(self.score_pair),
        }


def validate_monotone(
    score_table: Union[Mapping[Hashable, Sequence[Tuple[float, float]]],
                       Iterable[Sequence[Tuple[float, float]]]],
) -> MonotonicityReport:
    """
    Check that V(x, y) is nondecreasing in y within every unit.

    Args:
        score_table: rows (y, V(x, y)) grouped by unit, either a mapping from
            unit key to rows or an iterable of row groups (keyed by position)

    Returns:
        MonotonicityReport; on failure it names the group and the first
        violating pair in increasing-y order
    """
    groups = score_table.items() if isinstance(score_table, Mapping) else enumerate(score_table)
    for key, rows in groups:
        if len(rows) < 2:
            continue
        table = np.asarray(rows, dtype=float).reshape(-1, 2)
        # ties in y sorted by decreasing score so unequal scores at equal y are caught
        order = np.lexsort((-table[:, 1], table[:, 0]))
        ys, vs = table[order, 0], table[order, 1]
        drops = np.flatnonzero(vs[1:] < vs[:-1])
        if drops.size:
            k = int(drops[0])
            return MonotonicityReport(
                ok=False,
                group=key,
                y_pair=(float(ys[k]), float(ys[k + 1])),
                score_pair=(float(vs[k]), float(vs[k + 1])),
            )
    return MonotonicityReport(ok=True)
