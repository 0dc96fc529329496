"""
Simulation configuration and generated trial containers.
"""

from dataclasses import dataclass, field, fields, replace
from enum import Enum
from typing import Any, Dict, Optional

import numpy as np

from ..core.exceptions import SimulationError, ValidationError
from ..core.types import ArrayLike, ScoreKind, ScoreSpec, WeightedCalibration, WeightedTest

_MAX_SEED = 2**64

# mixture weight of the point mass near -0.5 in ITE setting 2
SETTING2_MIX = 0.1


class Scenario(Enum):
    """Data-generating processes."""
    ITE1 = "ite1"
    ITE2 = "ite2"
    ITE3 = "ite3"
    OUTLIER = "outlier"
    COVSHIFT_BINARY = "covshift_binary"

    @property
    def is_ite(self) -> bool:
        return self in (Scenario.ITE1, Scenario.ITE2, Scenario.ITE3)


class Coupling(Enum):
    """Dependence between the two potential-outcome noises in the ITE settings."""
    INDEPENDENT = "independent"
    POSITIVE = "positive"
    NEGATIVE = "negative"


class Covariance(Enum):
    """Covariance of the latent Gaussian covariates in the ITE settings."""
    IDENTITY = "identity"
    AR = "ar_0.9"


# allowed score names per scenario; the first entry is the default
_SCORES = {
    "ite": ("oracle", "res", "cqr"),
    "outlier": ("ocsvm",),
    "covshift_binary": ("clip", "res"),
}


def _score_family(scenario: Scenario) -> str:
    return "ite" if scenario.is_ite else scenario.value


def _coerce(enum_cls: Any, value: Any, name: str, scenario: Optional[str]) -> Any:
    if isinstance(value, enum_cls):
        return value
    try:
        return enum_cls(str(value).strip().lower().replace("-", "_"))
    except ValueError:
        choices = ", ".join(e.value for e in enum_cls)
        raise SimulationError(
            f"Unknown {name} '{value}' (expected one of: {choices})", scenario=scenario
        ) from None


@dataclass(frozen=True)
class SimulationSpec:
    """
    One simulation study.

    Attributes:
        scenario: data-generating process
        coupling: ITE noise coupling
        covariance: ITE latent covariance
        n_train: training units (outlier: one-class SVM, covshift: logistic model)
        n_calib_target: expected calibration size (ITE) or exact size (others)
        m: expected (ITE) or exact (others) number of test units
        signal: outlier signal strength a
        rho: fraction of outliers in the test set
        q: nominal FDR level
        trials: number of independent trials
        master_seed: 64-bit seed every random draw derives from
        score: score name; None picks the scenario default
        cqr_beta: quantile level of the cqr score
        gamma: estimated-weight perturbation level (1 = exact weights)
        sigma1_scale: multiplier on the treated-outcome noise scale
        setting2_mix: mixture weight of the shifted component in ITE setting 2
        fixed_centers: draw the outlier centre set once per study
        negatives_only: calibrate on null units only (covshift_binary)
        randomized_wbh: run WBH on randomized p-values
        debug: keep noise arrays in GeneratedTrial.extras
    """
    scenario: Scenario
    coupling: Coupling = Coupling.INDEPENDENT
    covariance: Covariance = Covariance.IDENTITY
    n_train: int = 750
    n_calib_target: int = 250
    m: int = 100
    signal: float = 3.0
    rho: float = 0.2
    q: float = 0.1
    trials: int = 100
    master_seed: int = 0
    score: Optional[str] = None
    cqr_beta: float = 0.5
    gamma: float = 1.0
    sigma1_scale: float = 1.0
    setting2_mix: float = SETTING2_MIX
    fixed_centers: bool = True
    negatives_only: bool = False
    randomized_wbh: bool = True
    debug: bool = False

    def __post_init__(self) -> None:
        """Validate and normalize the spec."""
        scenario = _coerce(Scenario, self.scenario, "scenario", None)
        name = scenario.value
        object.__setattr__(self, "scenario", scenario)
        object.__setattr__(self, "coupling", _coerce(Coupling, self.coupling, "coupling", name))
        if self.covariance in ("corr", "ar"):
            object.__setattr__(self, "covariance", Covariance.AR)
        elif self.covariance in ("ind",):
            object.__setattr__(self, "covariance", Covariance.IDENTITY)
        else:
            object.__setattr__(self, "covariance",
                               _coerce(Covariance, self.covariance, "covariance", name))

        for size_field in ("n_train", "n_calib_target", "m", "trials"):
            value = getattr(self, size_field)
            if int(value) != value or value < 0:
                raise SimulationError(f"{size_field} must be a nonnegative integer, got {value}",
                                      scenario=name)
        if not (0.0 < self.q < 1.0):
            raise SimulationError(f"q must lie strictly between 0 and 1, got {self.q}",
                                  scenario=name)
        if not (0.0 <= self.rho <= 1.0):
            raise SimulationError(f"rho must lie in [0, 1], got {self.rho}", scenario=name)
        if not (np.isfinite(self.signal) and self.signal > 0):
            raise SimulationError(f"signal must be positive, got {self.signal}", scenario=name)
        if not (np.isfinite(self.gamma) and self.gamma >= 1.0):
            raise SimulationError(f"gamma must be at least 1, got {self.gamma}", scenario=name)
        if not (np.isfinite(self.sigma1_scale) and self.sigma1_scale >= 0):
            raise SimulationError("sigma1_scale must be nonnegative", scenario=name)
        if not (0.0 <= self.setting2_mix <= 1.0):
            raise SimulationError(f"setting2_mix must lie in [0, 1], got {self.setting2_mix}",
                                  scenario=name)
        if not (0.0 < self.cqr_beta < 1.0):
            raise SimulationError(f"cqr_beta must lie in (0, 1), got {self.cqr_beta}",
                                  scenario=name)
        if not (0 <= int(self.master_seed) < _MAX_SEED):
            raise SimulationError("master_seed must be a 64-bit unsigned integer", scenario=name)
        if self.negatives_only and scenario is not Scenario.COVSHIFT_BINARY:
            raise SimulationError("negatives_only applies to covshift_binary only", scenario=name)

        allowed = _SCORES[_score_family(scenario)]
        score = allowed[0] if self.score is None else str(self.score).lower()
        if score not in allowed:
            raise SimulationError(
                f"score '{self.score}' is not available for {name} "
                f"(expected one of: {', '.join(allowed)})",
                scenario=name,
            )
        object.__setattr__(self, "score", score)

    @classmethod
    def for_scenario(cls, scenario: Any, **overrides: Any) -> "SimulationSpec":
        """
        Preset sizes for a scenario.

        ITE settings target 250 calibration and 100 test units with 750
        training units; the outlier scenario uses 1000 of each; the
        covariate-shift scenario uses 1000 training, 250 calibration and
        100 test units.
        """
        scenario = _coerce(Scenario, scenario, "scenario", None)
        presets: Dict[str, Any] = {}
        if scenario is Scenario.OUTLIER:
            presets = {"n_train": 1000, "n_calib_target": 1000, "m": 1000}
        elif scenario is Scenario.COVSHIFT_BINARY:
            presets = {"n_train": 1000, "n_calib_target": 250, "m": 100}
        presets.update(overrides)
        return cls(scenario=scenario, **presets)

    def score_spec(
        self,
        predictions: Optional[ArrayLike] = None,
        thresholds: Optional[ArrayLike] = None,
    ) -> ScoreSpec:
        """
        The ScoreSpec behind ``score``.

        ``oracle`` and ``ocsvm`` pass precomputed score columns through
        (conditional cdf values and one-class SVM decision values). ``clip``
        needs the model predictions and thresholds of the trial, from which
        the constant M is derived and validated.

        Raises:
            SimulationError: if clip predictions are missing or M is invalid
        """
        name = self.scenario.value
        if self.score in ("oracle", "ocsvm"):
            return ScoreSpec(ScoreKind.CDF_PASSTHROUGH)
        if self.score == "cqr":
            return ScoreSpec(ScoreKind.CQR, beta=self.cqr_beta)
        if self.score == "res":
            return ScoreSpec(ScoreKind.RES)
        if predictions is None:
            raise SimulationError("clip score needs the trial's predictions", scenario=name)
        try:
            return ScoreSpec.clip(predictions, thresholds)
        except ValidationError as exc:
            raise SimulationError(str(exc), scenario=name) from exc

    @property
    def hypothesis_conditional(self) -> bool:
        """Whether the scenario calibrates on null units only."""
        return self.scenario is Scenario.OUTLIER or self.negatives_only

    def with_options(self, **changes: Any) -> "SimulationSpec":
        """Copy with some fields replaced."""
        return replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary."""
        out: Dict[str, Any] = {}
        for f in fields(self):
            value = getattr(self, f.name)
            out[f.name] = value.value if isinstance(value, Enum) else value
        out["master_seed"] = int(self.master_seed)
        return out


@dataclass(frozen=True, eq=False)
class GeneratedTrial:
    """
    Data of one simulated trial.

    ``calibration`` and ``test`` carry the weights the selection procedures
    use, which are perturbed estimates when the spec's gamma exceeds 1;
    ``true_calib_weights`` and ``true_test_weights`` always hold w(x).
    ``oracle_test_scores`` are V(X_{n+j}, Y_{n+j}).
    """
    scenario: Scenario
    trial_index: int
    calibration: WeightedCalibration
    test: WeightedTest
    true_calib_weights: np.ndarray
    true_test_weights: np.ndarray
    oracle_test_scores: np.ndarray
    calib_outcomes: Optional[np.ndarray] = None
    extras: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.test.has_null_flags:
            raise SimulationError("generated test sets must carry null flags",
                                  scenario=self.scenario.value)
        if self.true_calib_weights.shape != self.calibration.weights.shape:
            raise SimulationError("true calibration weights are misaligned",
                                  scenario=self.scenario.value)
        if self.true_test_weights.shape != self.test.weights.shape:
            raise SimulationError("true test weights are misaligned",
                                  scenario=self.scenario.value)

    @property
    def null_flags(self) -> np.ndarray:
        """Null indicators of the test units."""
        assert self.test.null_flags is not None
        return self.test.null_flags

    def true_calibration(self) -> WeightedCalibration:
        """Calibration set with the true weights."""
        return WeightedCalibration(self.calibration.scores, self.true_calib_weights)

    def true_test(self) -> WeightedTest:
        """Test set with the true weights."""
        return WeightedTest(self.test.scores, self.true_test_weights, self.test.null_flags)

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary (extras omitted)."""
        return {
            "scenario": self.scenario.value,
            "trial_index": self.trial_index,
            "calibration": self.calibration.to_dict(),
            "test": self.test.to_dict(),
            "true_calib_weights": self.true_calib_weights.tolist(),
            "true_test_weights": self.true_test_weights.tolist(),
            "oracle_test_scores": self.oracle_test_scores.tolist(),
        }
