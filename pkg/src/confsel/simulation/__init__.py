"""Simulation lab: synthetic scenarios, trial runner and Monte-Carlo studies."""

from .generators import gen_covshift_binary, gen_ite, gen_outlier, generate
from .prds import PRDSReport, prds_counterexample_mc
from .runner import SimulationSummary, TrialRecord, run_trials
from .spec import Coupling, Covariance, GeneratedTrial, Scenario, SimulationSpec
from .studies import (
    StabilityReport,
    SuperUniformityReport,
    WeightedUniformityReport,
    stability_study,
    superuniformity_check,
    weighted_superuniformity_check,
)

__all__ = [
    "gen_covshift_binary",
    "gen_ite",
    "gen_outlier",
    "generate",
    "PRDSReport",
    "prds_counterexample_mc",
    "SimulationSummary",
    "TrialRecord",
    "run_trials",
    "Coupling",
    "Covariance",
    "GeneratedTrial",
    "Scenario",
    "SimulationSpec",
    "StabilityReport",
    "SuperUniformityReport",
    "stability_study",
    "superuniformity_check",
    "WeightedUniformityReport",
    "weighted_superuniformity_check",
]
