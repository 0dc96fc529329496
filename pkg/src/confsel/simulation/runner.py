"""
Trial runner.

Generates trials, runs every selection method on each, scores the
selections against the known null flags and aggregates the results.
Trials are independent and keyed by index, so they may run on a thread
pool; the aggregate does not depend on execution order.
"""

from dataclasses import dataclass, field
import json
import logging
import math
import os
import time
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, TypeVar

from joblib import Parallel, delayed
import numpy as np

from ..core.rng import Stream, derive_seed
from ..core.types import Method, SelectionConfig
from ..inference.metrics import (
    MeanEstimate,
    TrialMetrics,
    aggregate,
    estimated_weight_bound,
    gamma_hat,
    weighted_fdr_plugin,
)
from ..inference.pvalues import unweighted_pvalues
from ..inference.selection import bh, select
from .generators import generate
from .spec import GeneratedTrial, Scenario, SimulationSpec

logger = logging.getLogger(__name__)

THREADS_ENV = "CONFSEL_THREADS"

STANDARD_METHODS = ("wbh", "wcs_hete", "wcs_homo", "wcs_dtm", "bh_unweighted")
CONDITIONAL_METHODS = ("wbh", "hc_wcs_hete", "hc_wcs_homo", "hc_wcs_dtm", "bh_unweighted")
REFERENCE_METHOD = "wbh"

T = TypeVar("T")


def resolve_threads(n_jobs: Optional[int] = None) -> int:
    """
    Worker count: ``n_jobs`` if given, else CONFSEL_THREADS, else 1.

    Invalid environment values fall back to 1 with a warning.
    """
    if n_jobs is not None:
        return max(1, int(n_jobs))
    raw = os.environ.get(THREADS_ENV)
    if raw is None or not raw.strip():
        return 1
    try:
        value = int(raw)
    except ValueError:
        value = 0
    if value < 1:
        logger.warning(f"Ignoring {THREADS_ENV}={raw!r}: expected a positive integer")
        return 1
    return value


def parallel_map(func: Callable[[int], T], count: int, n_jobs: Optional[int] = None) -> List[T]:
    """func(0..count-1) in index order, on up to ``n_jobs`` threads."""
    workers = min(resolve_threads(n_jobs), max(1, count))
    if workers == 1:
        return [func(i) for i in range(count)]
    parallel = Parallel(n_jobs=workers, prefer="threads")
    return list(parallel(delayed(func)(i) for i in range(count)))


def method_names(spec: SimulationSpec) -> Tuple[str, ...]:
    """Methods evaluated for a scenario."""
    return CONDITIONAL_METHODS if spec.hypothesis_conditional else STANDARD_METHODS


def trial_seed(spec: SimulationSpec, trial_index: int) -> int:
    """Seed of the tie-breaking and pruning draws of one trial."""
    return derive_seed(spec.master_seed, Stream.TRIAL, trial_index, 1)


def run_method(
    name: str, trial: GeneratedTrial, q: float, seed: int, randomized_wbh: bool = True
) -> np.ndarray:
    """Selected indices of one method on one trial."""
    calib, test = trial.calibration, trial.test
    if name == "bh_unweighted":
        pv = unweighted_pvalues(calib.scores, test.scores, seed=seed)
        return bh(pv, q).selected
    if name == "wbh":
        config = SelectionConfig(q, Method.WBH, randomized_pvalues=randomized_wbh, seed=seed)
    elif name.startswith("hc_wcs_"):
        config = SelectionConfig(q, Method.HC_WCS, seed=seed, pruning=name[len("hc_wcs_"):])
    else:
        config = SelectionConfig(q, name, seed=seed)
    return select(calib, test, config).selected


@dataclass(frozen=True)
class TrialRecord:
    """One method's metrics on one trial."""
    trial: int
    method: str
    n_calib: int
    m: int
    metrics: TrialMetrics
    gamma_hat: float

    def to_dict(self) -> Dict[str, Any]:
        """Flat dictionary, one CSV row."""
        row: Dict[str, Any] = {
            "trial": self.trial,
            "method": self.method,
            "n_calib": self.n_calib,
            "m": self.m,
        }
        row.update(self.metrics.to_dict())
        row["gamma_hat"] = self.gamma_hat
        return row


@dataclass(frozen=True)
class MethodSummary:
    """Aggregated metrics of one method."""
    method: str
    fdr: MeanEstimate
    power: MeanEstimate
    weighted_fdr: MeanEstimate
    n_selected: MeanEstimate

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary."""
        return {
            "method": self.method,
            "fdr": self.fdr.to_dict(),
            "power": self.power.to_dict(),
            "weighted_fdr": self.weighted_fdr.to_dict(),
            "n_selected": self.n_selected.to_dict(),
        }


@dataclass
class SimulationSummary:
    """
    Result of ``run_trials``.

    ``bounds`` holds the reference levels the empirical FDRs are compared
    with: ``q`` always, ``estimated_weight_bound`` when weights are
    perturbed, ``weighted_fdr_bound`` for the unweighted-BH baseline and
    ``conditional_level`` = (1 - rho) q in the outlier scenario.
    """
    spec: SimulationSpec
    methods: Dict[str, MethodSummary]
    bounds: Dict[str, float]
    records: List[TrialRecord] = field(default_factory=list)
    duration_seconds: float = 0.0

    def fdr(self, method: str) -> MeanEstimate:
        """Empirical FDR of a method."""
        return self.methods[method].fdr

    def power(self, method: str) -> MeanEstimate:
        """Empirical power of a method."""
        return self.methods[method].power

    def records_as_rows(self) -> List[Dict[str, Any]]:
        """Per-trial records as flat dictionaries."""
        return [r.to_dict() for r in self.records]

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary (records omitted)."""
        return {
            "spec": self.spec.to_dict(),
            "trials": self.spec.trials,
            "methods": {name: s.to_dict() for name, s in self.methods.items()},
            "bounds": dict(self.bounds),
            "duration_seconds": self.duration_seconds,
        }

    def to_json(self, indent: Optional[int] = 2) -> str:
        """Convert to JSON string; non-finite numbers become null."""
        return json.dumps(_finite_or_none(self.to_dict()), indent=indent, sort_keys=True)


def _finite_or_none(obj: Any) -> Any:
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _finite_or_none(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite_or_none(v) for v in obj]
    return obj


def _run_one(spec: SimulationSpec, trial_index: int) -> Tuple[List[TrialRecord], float]:
    trial = generate(spec, trial_index)
    seed = trial_seed(spec, trial_index)
    test = trial.test
    if spec.gamma > 1.0:
        g_hat = gamma_hat(
            np.concatenate([trial.true_calib_weights, trial.true_test_weights]),
            np.concatenate([trial.calibration.weights, test.weights]),
        )
    else:
        g_hat = 1.0

    selections = {
        name: run_method(name, trial, spec.q, seed, spec.randomized_wbh)
        for name in method_names(spec)
    }
    reference = selections[REFERENCE_METHOD]
    records = [
        TrialRecord(
            trial=trial_index,
            method=name,
            n_calib=trial.calibration.n,
            m=test.m,
            metrics=TrialMetrics.compute(selected, trial.null_flags, trial.true_test_weights,
                                         reference=reference),
            gamma_hat=g_hat,
        )
        for name, selected in selections.items()
    ]
    plugin = weighted_fdr_plugin(trial.true_calib_weights, trial.true_test_weights)
    return records, plugin


def summarize(
    spec: SimulationSpec, records: Sequence[TrialRecord], plugins: Sequence[float]
) -> SimulationSummary:
    """Aggregate per-trial records into a summary."""
    methods: Dict[str, MethodSummary] = {}
    for name in method_names(spec):
        rows = [r for r in records if r.method == name]
        methods[name] = MethodSummary(
            method=name,
            fdr=aggregate([r.metrics.fdp for r in rows]),
            power=aggregate([r.metrics.power for r in rows]),
            weighted_fdr=aggregate([r.metrics.weighted_fdp for r in rows]),
            n_selected=aggregate([r.metrics.n_selected for r in rows]),
        )

    bounds: Dict[str, float] = {"q": spec.q}
    if plugins:
        bounds["weighted_fdr_bound"] = spec.q * math.fsum(plugins) / len(plugins)
    if spec.gamma > 1.0:
        test_sizes = {r.trial: r.m for r in records}
        values = [estimated_weight_bound(spec.q, spec.gamma, max(1, m_t))
                  for m_t in test_sizes.values()]
        bounds["estimated_weight_bound"] = (
            math.fsum(values) / len(values) if values
            else estimated_weight_bound(spec.q, spec.gamma, max(1, spec.m))
        )
    if spec.scenario is Scenario.OUTLIER:
        bounds["conditional_level"] = (1.0 - spec.rho) * spec.q
    return SimulationSummary(spec=spec, methods=methods, bounds=bounds, records=list(records))


def run_trials(spec: SimulationSpec, n_jobs: Optional[int] = None) -> SimulationSummary:
    """
    Run ``spec.trials`` independent trials and aggregate per method.

    Args:
        spec: simulation study
        n_jobs: worker threads; defaults to CONFSEL_THREADS or 1

    Returns:
        SimulationSummary with per-method FDR, power, weighted FDR and their
        standard errors, the applicable bounds and the per-trial records
    """
    start = time.perf_counter()
    logger.info(f"Running {spec.trials} trials of {spec.scenario.value} at q={spec.q}")
    outputs = parallel_map(lambda t: _run_one(spec, t), spec.trials, n_jobs)
    records = [r for trial_records, _ in outputs for r in trial_records]
    plugins = [plugin for _, plugin in outputs]
    summary = summarize(spec, records, plugins)
    summary.duration_seconds = time.perf_counter() - start
    for name, method in summary.methods.items():
        logger.info(
            f"{name}: FDR={method.fdr.mean:.4f} (se {method.fdr.se:.4f}), "
            f"power={method.power.mean:.4f}"
        )
    return summary
