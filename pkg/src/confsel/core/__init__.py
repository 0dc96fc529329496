"""Core domain types, scores and exceptions."""

from .exceptions import (
    ConfSelError,
    InputFormatError,
    SelectionError,
    SimulationError,
    ValidationError,
)
from .rng import Stream, derive_seed, keyed_generator, keyed_uniforms
from .scores import (
    MonotonicityReport,
    apply_score,
    score_clip,
    score_cqr,
    score_res,
    validate_monotone,
)
from .types import (
    Method,
    Pruning,
    ScoreKind,
    ScoreSpec,
    SelectionConfig,
    WeightedCalibration,
    WeightedTest,
    default_clip_constant,
)

__all__ = [
    "Stream",
    "derive_seed",
    "keyed_generator",
    "keyed_uniforms",
    "ConfSelError",
    "InputFormatError",
    "SelectionError",
    "SimulationError",
    "ValidationError",
    "MonotonicityReport",
    "apply_score",
    "score_clip",
    "score_cqr",
    "score_res",
    "validate_monotone",
    "Method",
    "Pruning",
    "ScoreKind",
    "ScoreSpec",
    "SelectionConfig",
    "WeightedCalibration",
    "WeightedTest",
    "default_clip_constant",
]
