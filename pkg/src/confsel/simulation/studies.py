"""
Monte-Carlo studies of the p-value and selection machinery.

- ``stability_study``: with m fixed and n growing, how often BH on weighted
  conformal p-values, homogeneous pruning and the first-step set coincide.
- ``superuniformity_check``: exchangeable data with unit weights; checks
  P(p_j <= t, null) <= t on a grid and that the oracle p-value is uniform.
- ``weighted_superuniformity_check``: the same two checks on trials of a
  simulation scenario, scored with the true weights.
"""

from dataclasses import dataclass
import json
import logging
import math
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from ..core.exceptions import SimulationError
from ..core.rng import Stream, derive_seed, keyed_generator, keyed_uniforms
from ..core.types import Method, SelectionConfig, WeightedCalibration, WeightedTest
from ..inference.metrics import aggregate, selection_discrepancy
from ..inference.pvalues import oracle_pvalues, wcp_randomized
from ..inference.selection import select, wcs
from .generators import generate
from .runner import parallel_map, trial_seed
from .spec import SimulationSpec

logger = logging.getLogger(__name__)

DEFAULT_GRID = tuple(round(0.05 * k, 2) for k in range(1, 20))

# mean slope of the stability study's outcome model
_STABILITY_SLOPE = 8.0


def _stability_covariates(rng: np.random.Generator, size: int, shifted: bool) -> np.ndarray:
    """Unif[0, 1], or density (1 + x) / 1.5 on [0, 1] when ``shifted``."""
    u = rng.random(size)
    if not shifted:
        return u
    return -1.0 + np.sqrt(1.0 + 3.0 * u)


def _stability_trial(
    n: int, m: int, q: float, seed: int
) -> Dict[str, Any]:
    rng = keyed_generator(seed, Stream.TRIAL)
    x_cal = _stability_covariates(rng, n, shifted=False)
    x_test = _stability_covariates(rng, m, shifted=True)
    mu_cal = _STABILITY_SLOPE * (x_cal - 0.5)
    mu_test = _STABILITY_SLOPE * (x_test - 0.5)
    y_cal = mu_cal + rng.standard_normal(n)

    calib = WeightedCalibration(y_cal - mu_cal, (1.0 + x_cal) / 1.5)
    test = WeightedTest(0.0 - mu_test, (1.0 + x_test) / 1.5)

    r_bh = select(calib, test, SelectionConfig(q, Method.WBH, seed=seed)).selected
    homo = wcs(calib, test, SelectionConfig(q, Method.WCS_HOMO, seed=seed))
    r_homo, r_first = homo.selected, homo.first_step
    agree = (np.array_equal(r_bh, r_homo) and np.array_equal(r_homo, r_first))
    return {
        "agree": bool(agree),
        "discrepancy": selection_discrepancy(r_homo, r_bh, floor_one=True),
    }


@dataclass(frozen=True)
class StabilityRow:
    """Agreement statistics at one calibration size."""
    n: int
    trials: int
    agreement: float
    median_discrepancy: float

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary."""
        return {
            "n": self.n,
            "trials": self.trials,
            "agreement": self.agreement,
            "median_discrepancy": self.median_discrepancy,
        }


@dataclass(frozen=True)
class StabilityReport:
    """Result of ``stability_study``."""
    m: int
    q: float
    seed: int
    rows: List[StabilityRow]

    @property
    def agreement_nondecreasing(self) -> bool:
        """Whether the agreement fraction never drops as n grows."""
        values = [row.agreement for row in sorted(self.rows, key=lambda r: r.n)]
        return all(b >= a for a, b in zip(values, values[1:]))

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary."""
        return {
            "m": self.m,
            "q": self.q,
            "seed": self.seed,
            "rows": [row.to_dict() for row in self.rows],
            "agreement_nondecreasing": self.agreement_nondecreasing,
        }

    def to_json(self, indent: Optional[int] = 2) -> str:
        """Convert to JSON string."""
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)


def stability_study(
    m: int = 20,
    n_values: Sequence[int] = (100, 1000, 10000),
    trials: int = 300,
    seed: int = 0,
    q: float = 0.1,
    n_jobs: Optional[int] = None,
) -> StabilityReport:
    """
    Agreement of R_BH, R_homo and R^(1) as the calibration set grows.

    Calibration covariates are uniform on [0, 1]; test covariates have
    density (1 + x) / 1.5, so w(x) = (1 + x) / 1.5 is bounded. Outcomes are
    Y = 8 (x - 0.5) + N(0, 1), scores are residuals against the true mean and
    test units are thresholded at c = 0, so all scores are continuous.

    Returns:
        StabilityReport with, per n, the fraction of trials where the three
        sets coincide and the median |R_homo delta R_BH| / max{1, |R_BH|}
    """
    if m < 1 or trials < 0 or any(n < 0 for n in n_values):
        raise SimulationError("stability study needs m >= 1 and nonnegative sizes")
    rows = []
    for k, n in enumerate(n_values):
        outcomes = parallel_map(
            lambda t: _stability_trial(n, m, q, derive_seed(seed, Stream.TRIAL, k, t)),
            trials, n_jobs,
        )
        agreement = (sum(o["agree"] for o in outcomes) / trials) if trials else math.nan
        median = float(np.median([o["discrepancy"] for o in outcomes])) if trials else math.nan
        rows.append(StabilityRow(n=int(n), trials=trials, agreement=agreement,
                                 median_discrepancy=median))
        logger.info(f"stability n={n}: agreement={agreement:.3f}, median discrepancy={median:.4f}")
    return StabilityReport(m=m, q=q, seed=seed, rows=rows)


@dataclass(frozen=True)
class SuperUniformityReport:
    """
    Result of ``superuniformity_check``.

    Attributes:
        grid: thresholds t
        null_rate: empirical P(p <= t, null) per threshold
        se: binomial standard errors of null_rate
        within_bound: null_rate <= t + 3 se per threshold
        dkw_statistic: sup_t |F_hat(t) - t| of the oracle p-values
        dkw_epsilon: DKW band half-width at ``alpha``
    """
    replicates: int
    n: int
    seed: int
    grid: List[float]
    null_rate: List[float]
    se: List[float]
    within_bound: List[bool]
    dkw_statistic: float
    dkw_epsilon: float
    alpha: float

    @property
    def passed(self) -> bool:
        """Every grid point within bound and the oracle inside the DKW band."""
        return all(self.within_bound) and self.dkw_statistic <= self.dkw_epsilon

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary."""
        return {
            "replicates": self.replicates,
            "n": self.n,
            "seed": self.seed,
            "grid": list(self.grid),
            "null_rate": list(self.null_rate),
            "se": list(self.se),
            "within_bound": list(self.within_bound),
            "dkw_statistic": self.dkw_statistic,
            "dkw_epsilon": self.dkw_epsilon,
            "alpha": self.alpha,
            "passed": self.passed,
        }


def _ks_to_uniform(values: np.ndarray) -> float:
    if values.size == 0:
        return math.nan
    return float(stats.kstest(values, "uniform").statistic)


def _dkw_epsilon(count: int, alpha: float) -> float:
    if count == 0:
        return math.nan
    return math.sqrt(math.log(2.0 / alpha) / (2.0 * count))


def _exchangeable_chunk(
    seed: int, index: int, size: int, n: int
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Randomized and oracle p-values of ``size`` independent replicates."""
    rng = keyed_generator(seed, Stream.TRIAL, index)
    calib_scores = rng.standard_normal((size, n))
    y = rng.standard_normal(size)
    c = rng.standard_normal(size)
    u = rng.random(size)
    unit = np.ones(n)
    pvals = np.empty(size)
    oracle = np.empty(size)
    for r in range(size):
        calib = WeightedCalibration(calib_scores[r], unit)
        tie = u[r:r + 1]
        pvals[r] = wcp_randomized(calib, WeightedTest(c[r:r + 1], [1.0]), u=tie).values[0]
        oracle[r] = oracle_pvalues(calib, y[r:r + 1], [1.0], u=tie).values[0]
    return pvals, oracle, y <= c


def superuniformity_check(
    replicates: int = 100_000,
    n: int = 50,
    seed: int = 0,
    grid: Sequence[float] = DEFAULT_GRID,
    alpha: float = 1e-3,
    chunk: int = 10_000,
    n_jobs: Optional[int] = None,
) -> SuperUniformityReport:
    """
    Super-uniformity of conformal p-values under exchangeability.

    Each replicate draws n calibration outcomes and one test outcome from
    N(0, 1) with score V(x, y) = y and unit weights; the test threshold is
    an independent N(0, 1) draw, and the unit is null when Y <= c. The
    randomized p-value uses the threshold score, the oracle p-value the
    outcome score, both with the same tie-breaking uniform.

    Raises:
        SimulationError: if replicates, n or chunk is not positive
    """
    if replicates < 1 or n < 1 or chunk < 1:
        raise SimulationError("superuniformity check needs replicates, n and chunk >= 1")
    count = math.ceil(replicates / chunk)
    parts = parallel_map(
        lambda k: _exchangeable_chunk(seed, k, min(chunk, replicates - k * chunk), n),
        count, n_jobs,
    )
    pvals = np.concatenate([part[0] for part in parts])
    oracle = np.concatenate([part[1] for part in parts])
    nulls = np.concatenate([part[2] for part in parts])

    grid_arr = np.asarray(list(grid), dtype=float)
    rates = np.array([np.mean((pvals <= t) & nulls) for t in grid_arr])
    se = np.sqrt(rates * (1.0 - rates) / replicates)
    within = rates <= grid_arr + 3.0 * se
    epsilon = _dkw_epsilon(replicates, alpha)
    report = SuperUniformityReport(
        replicates=replicates,
        n=n,
        seed=seed,
        grid=grid_arr.tolist(),
        null_rate=rates.tolist(),
        se=se.tolist(),
        within_bound=[bool(b) for b in within],
        dkw_statistic=_ks_to_uniform(oracle),
        dkw_epsilon=epsilon,
        alpha=alpha,
    )
    logger.info(
        f"superuniformity: max excess={float(np.max(rates - grid_arr)):.5f}, "
        f"dkw={report.dkw_statistic:.5f} (eps {epsilon:.5f})"
    )
    return report


@dataclass(frozen=True)
class WeightedUniformityReport:
    """
    Result of ``weighted_superuniformity_check``.

    Rates are means over trials of per-trial fractions of test units, with
    standard errors across trials; units of one trial share a calibration
    set and are not independent.

    Attributes:
        null_rate: mean fraction of units with p <= t that are null
        oracle_rate: mean fraction of eligible units with oracle p <= t
        within_bound: null_rate <= t + 3 se per threshold
        dkw_statistic: sup_t |F_hat(t) - t| over the first eligible oracle
            p-value of each trial (independent across trials)
        eligible: ``all`` units, or ``null`` units when the scenario
            calibrates on null units only
    """
    scenario: str
    trials: int
    units: int
    seed: int
    eligible: str
    grid: List[float]
    null_rate: List[float]
    se: List[float]
    oracle_rate: List[float]
    oracle_se: List[float]
    within_bound: List[bool]
    dkw_statistic: float
    dkw_epsilon: float
    alpha: float

    @property
    def passed(self) -> bool:
        """Every grid point within bound and the oracle inside the DKW band."""
        return all(self.within_bound) and self.dkw_statistic <= self.dkw_epsilon

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary."""
        return {
            "scenario": self.scenario,
            "trials": self.trials,
            "units": self.units,
            "seed": self.seed,
            "eligible": self.eligible,
            "grid": list(self.grid),
            "null_rate": list(self.null_rate),
            "se": list(self.se),
            "oracle_rate": list(self.oracle_rate),
            "oracle_se": list(self.oracle_se),
            "within_bound": list(self.within_bound),
            "dkw_statistic": self.dkw_statistic,
            "dkw_epsilon": self.dkw_epsilon,
            "alpha": self.alpha,
            "passed": self.passed,
        }


def _weighted_trial(
    spec: SimulationSpec, trial_index: int, grid: np.ndarray
) -> Optional[Dict[str, Any]]:
    trial = generate(spec, trial_index)
    calib = trial.true_calibration()
    test = trial.true_test()
    if test.m == 0:
        return None
    u = keyed_uniforms(trial_seed(spec, trial_index), Stream.TIE_BREAK, test.m)
    p = wcp_randomized(calib, test, u=u).values
    oracle = oracle_pvalues(calib, trial.oracle_test_scores, trial.true_test_weights,
                            u=u).values
    nulls = trial.null_flags
    eligible = oracle[nulls] if spec.hypothesis_conditional else oracle
    return {
        "units": test.m,
        "null_rate": [float(np.mean((p <= t) & nulls)) for t in grid],
        "oracle_rate": ([float(np.mean(eligible <= t)) for t in grid]
                        if eligible.size else None),
        "first_oracle": float(eligible[0]) if eligible.size else None,
    }


def weighted_superuniformity_check(
    spec: SimulationSpec,
    trials: Optional[int] = None,
    grid: Sequence[float] = DEFAULT_GRID,
    alpha: float = 1e-3,
    n_jobs: Optional[int] = None,
) -> WeightedUniformityReport:
    """
    Super-uniformity of weighted conformal p-values on generated trials.

    Every trial is scored with its true weights w(x), whatever the spec's
    ``gamma``: randomized p-values of the threshold scores must satisfy
    P(p_j <= t, j null) <= t, and randomized oracle p-values of the outcome
    scores must be uniform. When the scenario calibrates on null units only,
    the oracle check is restricted to null test units.

    Args:
        spec: scenario and sizes; ``trials`` defaults to spec.trials
        trials: number of trials to generate
        grid: thresholds t
        alpha: DKW band level
        n_jobs: worker threads

    Returns:
        WeightedUniformityReport
    """
    count = spec.trials if trials is None else int(trials)
    if count < 1:
        raise SimulationError("weighted superuniformity check needs trials >= 1",
                              scenario=spec.scenario.value)
    grid_arr = np.asarray(list(grid), dtype=float)
    outcomes = [o for o in parallel_map(lambda t: _weighted_trial(spec, t, grid_arr),
                                        count, n_jobs) if o is not None]
    null_est = [aggregate([o["null_rate"][k] for o in outcomes]) for k in range(grid_arr.size)]
    with_oracle = [o for o in outcomes if o["oracle_rate"] is not None]
    oracle_est = [aggregate([o["oracle_rate"][k] for o in with_oracle])
                  for k in range(grid_arr.size)]
    firsts = np.array([o["first_oracle"] for o in with_oracle])
    within = [est.mean <= t + 3.0 * est.se for est, t in zip(null_est, grid_arr)]
    report = WeightedUniformityReport(
        scenario=spec.scenario.value,
        trials=len(outcomes),
        units=int(sum(o["units"] for o in outcomes)),
        seed=int(spec.master_seed),
        eligible="null" if spec.hypothesis_conditional else "all",
        grid=grid_arr.tolist(),
        null_rate=[est.mean for est in null_est],
        se=[est.se for est in null_est],
        oracle_rate=[est.mean for est in oracle_est],
        oracle_se=[est.se for est in oracle_est],
        within_bound=[bool(b) for b in within],
        dkw_statistic=_ks_to_uniform(firsts),
        dkw_epsilon=_dkw_epsilon(firsts.size, alpha),
        alpha=alpha,
    )
    logger.info(
        f"weighted superuniformity on {report.scenario}: {report.trials} trials, "
        f"dkw={report.dkw_statistic:.5f} (eps {report.dkw_epsilon:.5f})"
    )
    return report
