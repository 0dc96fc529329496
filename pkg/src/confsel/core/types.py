"""
Domain types for weighted calibration and test data.

Calibration units carry an observed score V_i = V(X_i, Y_i) and a covariate
shift weight w(X_i). Test units carry the thresholded score
V(X_{n+j}, c_{n+j}), their weight, and optionally the null indicator
Y_{n+j} <= c_{n+j} when it is known (simulation and evaluation only).

All containers copy their inputs into read-only float arrays, so instances
can be shared between threads without further care.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Optional, Sequence, Union

import numpy as np

from .exceptions import ValidationError

ArrayLike = Union[Sequence[float], np.ndarray]

_MAX_SEED = 2**64


class ScoreKind(Enum):
    """Monotone nonconformity score families."""
    RES = "res"
    CLIP = "clip"
    CQR = "cqr"
    CDF_PASSTHROUGH = "cdf_passthrough"


class Method(Enum):
    """Selection engines."""
    WBH = "wbh"
    WCS_HETE = "wcs_hete"
    WCS_HOMO = "wcs_homo"
    WCS_DTM = "wcs_dtm"
    HC_WCS = "hc_wcs"

    @classmethod
    def parse(cls, name: Union[str, "Method"]) -> "Method":
        """Parse a method name, accepting the CLI spelling with hyphens."""
        if isinstance(name, Method):
            return name
        try:
            return cls(name.strip().lower().replace("-", "_"))
        except ValueError:
            choices = ", ".join(m.value for m in cls)
            raise ValidationError(
                f"Unknown selection method '{name}' (expected one of: {choices})",
                field="method", value=name,
            ) from None


class Pruning(Enum):
    """Second-step pruning rules of conformalized selection."""
    HETE = "hete"
    HOMO = "homo"
    DTM = "dtm"

    @classmethod
    def parse(cls, name: Union[str, "Pruning"]) -> "Pruning":
        """Parse a pruning name."""
        if isinstance(name, Pruning):
            return name
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise ValidationError(
                f"Unknown pruning rule '{name}' (expected hete, homo or dtm)",
                field="pruning", value=name,
            ) from None


_PRUNING_BY_METHOD = {
    Method.WCS_HETE: Pruning.HETE,
    Method.WCS_HOMO: Pruning.HOMO,
    Method.WCS_DTM: Pruning.DTM,
}


def _as_readonly(values: ArrayLike, name: str, dtype: Any = float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise ValidationError(f"{name} must be one-dimensional, got shape {arr.shape}",
                              field=name)
    arr.setflags(write=False)
    return arr


def _check_weights(weights: np.ndarray, name: str) -> None:
    bad = np.flatnonzero(~np.isfinite(weights) | (weights <= 0))
    if bad.size:
        idx = int(bad[0])
        raise ValidationError(
            f"{name}[{idx}] = {weights[idx]!r}: weights must be finite and strictly positive",
            field=name, value=float(weights[idx]),
        )


def _check_finite(values: np.ndarray, name: str) -> None:
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        idx = int(bad[0])
        raise ValidationError(f"{name}[{idx}] = {values[idx]!r} is not finite",
                              field=name, value=float(values[idx]))


@dataclass(frozen=True, eq=False)
class WeightedCalibration:
    """
    Calibration scores with their covariate-shift weights.

    Attributes:
        scores: V_i = V(X_i, Y_i) for i = 1..n
        weights: w(X_i), finite and strictly positive
    """
    scores: np.ndarray
    weights: np.ndarray

    def __post_init__(self) -> None:
        """Validate and freeze the arrays."""
        scores = _as_readonly(self.scores, "scores")
        weights = _as_readonly(self.weights, "weights")
        if scores.shape != weights.shape:
            raise ValidationError(
                f"scores and weights must have equal length ({scores.size} != {weights.size})",
                field="weights",
            )
        _check_finite(scores, "scores")
        _check_weights(weights, "weights")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def unweighted(cls, scores: ArrayLike) -> "WeightedCalibration":
        """Calibration set with all weights equal to one."""
        scores = np.asarray(scores, dtype=float)
        return cls(scores, np.ones_like(scores))

    @property
    def n(self) -> int:
        """Number of calibration units."""
        return int(self.scores.size)

    def subset(self, mask: ArrayLike) -> "WeightedCalibration":
        """Restrict to the units selected by a boolean mask."""
        mask = np.asarray(mask, dtype=bool)
        return WeightedCalibration(self.scores[mask], self.weights[mask])

    def scaled(self, factor: float) -> "WeightedCalibration":
        """Copy with every weight multiplied by a positive factor."""
        return WeightedCalibration(self.scores, self.weights * factor)

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary."""
        return {"scores": self.scores.tolist(), "weights": self.weights.tolist()}


@dataclass(frozen=True, eq=False)
class WeightedTest:
    """
    Test scores evaluated at the thresholds, with weights and optional null flags.

    Attributes:
        scores: V(X_{n+j}, c_{n+j}) for j = 1..m
        weights: w(X_{n+j}), finite and strictly positive
        null_flags: Y_{n+j} <= c_{n+j}; only known in simulations and evaluation
    """
    scores: np.ndarray
    weights: np.ndarray
    null_flags: Optional[np.ndarray] = field(default=None)

    def __post_init__(self) -> None:
        """Validate and freeze the arrays."""
        scores = _as_readonly(self.scores, "scores")
        weights = _as_readonly(self.weights, "weights")
        if scores.shape != weights.shape:
            raise ValidationError(
                f"scores and weights must have equal length ({scores.size} != {weights.size})",
                field="weights",
            )
        _check_finite(scores, "scores")
        _check_weights(weights, "weights")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "weights", weights)
        if self.null_flags is not None:
            flags = _as_readonly(self.null_flags, "null_flags", dtype=bool)
            if flags.size != scores.size:
                raise ValidationError(
                    f"null_flags must have length {scores.size}, got {flags.size}",
                    field="null_flags",
                )
            object.__setattr__(self, "null_flags", flags)

    @property
    def m(self) -> int:
        """Number of test units."""
        return int(self.scores.size)

    @property
    def has_null_flags(self) -> bool:
        """Whether null indicators are available."""
        return self.null_flags is not None

    def with_scores(self, scores: ArrayLike) -> "WeightedTest":
        """Copy with replaced scores (e.g. oracle scores V(X_{n+j}, Y_{n+j}))."""
        return WeightedTest(scores, self.weights, self.null_flags)

    def with_weights(self, weights: ArrayLike) -> "WeightedTest":
        """Copy with replaced weights."""
        return WeightedTest(self.scores, weights, self.null_flags)

    def scaled(self, factor: float) -> "WeightedTest":
        """Copy with every weight multiplied by a positive factor."""
        return WeightedTest(self.scores, self.weights * factor, self.null_flags)

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary."""
        return {
            "scores": self.scores.tolist(),
            "weights": self.weights.tolist(),
            "null_flags": None if self.null_flags is None else self.null_flags.tolist(),
        }


@dataclass(frozen=True)
class ScoreSpec:
    """
    Description of a monotone nonconformity score.

    Attributes:
        kind: score family
        clip_constant: M for the clip score
        beta: quantile level tag for cqr scores (informational)
    """
    kind: ScoreKind = ScoreKind.RES
    clip_constant: Optional[float] = None
    beta: Optional[float] = None

    def __post_init__(self) -> None:
        """Validate kind-dependent parameters."""
        if not isinstance(self.kind, ScoreKind):
            object.__setattr__(self, "kind", ScoreKind(self.kind))
        if self.kind is ScoreKind.CLIP:
            if self.clip_constant is None or not np.isfinite(self.clip_constant):
                raise ValidationError("clip score requires a finite constant M",
                                      field="clip_constant", value=self.clip_constant)
        if self.beta is not None and not (0.0 < self.beta < 1.0):
            raise ValidationError(f"beta must lie in (0, 1), got {self.beta}",
                                  field="beta", value=self.beta)

    @classmethod
    def clip(
        cls,
        predictions: ArrayLike,
        thresholds: Optional[ArrayLike] = None,
        constant: Optional[float] = None,
    ) -> "ScoreSpec":
        """
        Build a clip score spec validated against the supplied rows.

        The default constant is 2 * max(|mu_hat| v |c|) + 1.
        """
        preds = np.asarray(predictions, dtype=float)
        if constant is None:
            constant = default_clip_constant(preds, thresholds)
        spec = cls(ScoreKind.CLIP, clip_constant=float(constant))
        spec.validate_rows(preds)
        return spec

    def validate_rows(self, predictions: ArrayLike) -> None:
        """Check M > 2 * max|mu_hat| over the supplied rows (clip only)."""
        if self.kind is not ScoreKind.CLIP:
            return
        preds = np.asarray(predictions, dtype=float)
        bound = 2.0 * float(np.max(np.abs(preds))) if preds.size else 0.0
        if not self.clip_constant > bound:
            raise ValidationError(
                f"clip constant M={self.clip_constant} must exceed 2*max|mu_hat|={bound}",
                field="clip_constant", value=self.clip_constant,
            )

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary."""
        return {"kind": self.kind.value, "clip_constant": self.clip_constant, "beta": self.beta}


def default_clip_constant(
    predictions: ArrayLike, thresholds: Optional[ArrayLike] = None
) -> float:
    """2 * max over rows of (|mu_hat| v |c|) + 1."""
    preds = np.abs(np.asarray(predictions, dtype=float))
    largest = float(preds.max()) if preds.size else 0.0
    if thresholds is not None:
        cs = np.abs(np.asarray(thresholds, dtype=float))
        if cs.size:
            largest = max(largest, float(cs.max()))
    return 2.0 * largest + 1.0


@dataclass(frozen=True)
class SelectionConfig:
    """
    Configuration shared by every selection engine.

    Attributes:
        q: nominal FDR level in (0, 1)
        method: selection engine
        randomized_pvalues: use tie-randomized p-values for WBH
        seed: 64-bit unsigned master seed for tie-breaking and pruning uniforms
        tie_tolerance: scores within this distance count as tied (0 = exact)
        pruning: pruning rule for hc_wcs (wcs_* methods imply their own)
    """
    q: float
    method: Method = Method.WCS_DTM
    randomized_pvalues: bool = True
    seed: int = 0
    tie_tolerance: float = 0.0
    pruning: Pruning = Pruning.DTM

    def __post_init__(self) -> None:
        """Validate configuration values."""
        object.__setattr__(self, "method", Method.parse(self.method))
        object.__setattr__(self, "pruning", Pruning.parse(self.pruning))
        if not (isinstance(self.q, (int, float)) and 0.0 < float(self.q) < 1.0):
            raise ValidationError(f"q must lie strictly between 0 and 1, got {self.q}",
                                  field="q", value=self.q)
        if not (0 <= int(self.seed) < _MAX_SEED):
            raise ValidationError(f"seed must be a 64-bit unsigned integer, got {self.seed}",
                                  field="seed", value=self.seed)
        if not (np.isfinite(self.tie_tolerance) and self.tie_tolerance >= 0):
            raise ValidationError("tie_tolerance must be a nonnegative finite number",
                                  field="tie_tolerance", value=self.tie_tolerance)

    @property
    def pruning_rule(self) -> Pruning:
        """Pruning rule in effect for this configuration."""
        return _PRUNING_BY_METHOD.get(self.method, self.pruning)

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary."""
        return {
            "q": self.q,
            "method": self.method.value,
            "randomized_pvalues": self.randomized_pvalues,
            "seed": int(self.seed),
            "tie_tolerance": self.tie_tolerance,
            "pruning": self.pruning_rule.value,
        }
