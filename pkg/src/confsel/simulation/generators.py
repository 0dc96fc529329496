"""
Synthetic data generators.

Three families of trials:

- ITE settings 1-3: treated units calibrate, control units are tested with
  their observed control outcome as the threshold. Conditional outcome
  distributions are known in closed form, so oracle, residual and quantile
  scores need no fitted model.
- Outlier detection: Gaussian mixtures around a fixed set of centres, with
  a one-class SVM score and inlier-only calibration drawn from the shifted
  inlier distribution.
- Binary covariate shift: a logistic outcome model, calibration units kept
  with a covariate-dependent probability, test units from the population.

Every trial draws from its own keyed stream, so trial t is identical no
matter which trials run before it or on which thread.
"""

import logging
import math
from typing import Dict, Tuple

import numpy as np
from scipy import stats
from scipy.special import expit
from sklearn.linear_model import LogisticRegression
from sklearn.svm import OneClassSVM

from ..core.exceptions import SimulationError
from ..core.rng import Stream, keyed_generator
from ..core.scores import apply_score
from ..core.types import WeightedCalibration, WeightedTest
from .spec import SETTING2_MIX, Coupling, Covariance, GeneratedTrial, Scenario, SimulationSpec

logger = logging.getLogger(__name__)

ITE_DIM = 10
# E[e(X)] for e(x) = (1 + BetaCDF_{2,4}(x_1)) / 4 with x_1 uniform
MEAN_PROPENSITY = 5.0 / 12.0

OUTLIER_DIM = 50
N_CENTERS = 50
OUTLIER_THETA = 0.1 * (np.arange(OUTLIER_DIM) < 5)

COVSHIFT_DIM = 5
COVSHIFT_COEF = np.array([1.0, -0.8, 0.6, 0.0, 0.0])
COVSHIFT_INTERCEPT = -1.0
MAX_SELECTION_PROB = 0.8


def _trial_rng(spec: SimulationSpec, trial_index: int) -> np.random.Generator:
    return keyed_generator(spec.master_seed, Stream.TRIAL, trial_index)


def _estimated_weights(
    spec: SimulationSpec, trial_index: int, calib_w: np.ndarray, test_w: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """w_hat = w * exp(eta) with eta ~ Unif[-log gamma, log gamma]."""
    if spec.gamma == 1.0:
        return calib_w, test_w
    rng = keyed_generator(spec.master_seed, Stream.WEIGHT_PERTURBATION, trial_index)
    log_gamma = math.log(spec.gamma)
    eta = rng.uniform(-log_gamma, log_gamma, size=calib_w.size + test_w.size)
    estimated = np.concatenate([calib_w, test_w]) * np.exp(eta)
    return estimated[: calib_w.size], estimated[calib_w.size:]


def _assemble(
    spec: SimulationSpec,
    trial_index: int,
    calib_scores: np.ndarray,
    calib_w: np.ndarray,
    test_scores: np.ndarray,
    test_w: np.ndarray,
    null_flags: np.ndarray,
    oracle_scores: np.ndarray,
    calib_outcomes: np.ndarray,
    extras: Dict[str, np.ndarray],
) -> GeneratedTrial:
    est_calib_w, est_test_w = _estimated_weights(spec, trial_index, calib_w, test_w)
    trial = GeneratedTrial(
        scenario=spec.scenario,
        trial_index=trial_index,
        calibration=WeightedCalibration(calib_scores, est_calib_w),
        test=WeightedTest(test_scores, est_test_w, null_flags),
        true_calib_weights=np.asarray(calib_w, dtype=float),
        true_test_weights=np.asarray(test_w, dtype=float),
        oracle_test_scores=np.asarray(oracle_scores, dtype=float),
        calib_outcomes=np.asarray(calib_outcomes, dtype=float),
        extras=extras,
    )
    logger.debug(
        f"{spec.scenario.value} trial {trial_index}: n={trial.calibration.n}, "
        f"m={trial.test.m}, nulls={int(null_flags.sum())}"
    )
    return trial


# ---------------------------------------------------------------------------
# ITE settings


def ite_covariates(
    rng: np.random.Generator, size: int, covariance: Covariance
) -> np.ndarray:
    """Gaussian-copula covariates X_ij = Phi(X0_ij) in [0, 1]^10."""
    z = rng.standard_normal((size, ITE_DIM))
    if covariance is Covariance.AR:
        lags = np.abs(np.subtract.outer(np.arange(ITE_DIM), np.arange(ITE_DIM)))
        z = z @ np.linalg.cholesky(0.9 ** lags).T
    return stats.norm.cdf(z)


def propensity(x: np.ndarray) -> np.ndarray:
    """e(x) = (1 + BetaCDF_{2,4}(x_1)) / 4, always within [1/4, 1/2]."""
    return (1.0 + stats.beta.cdf(x[:, 0], 2, 4)) / 4.0


def control_mean(x: np.ndarray) -> np.ndarray:
    """mu_0(x) of setting 3."""
    return 2.0 * expit(3.0 * x[:, 0] + 0.5) * expit(3.0 * x[:, 1] + 0.5)


def treated_mean(scenario: Scenario, x: np.ndarray) -> np.ndarray:
    """mu_1(x) before censoring at zero."""
    if scenario is Scenario.ITE3:
        return 0.1 + 1.5 * control_mean(x)
    return 4.0 * expit(12.0 * x[:, 0] + 0.5) * expit(12.0 * x[:, 1] + 0.5)


def treated_scale(x: np.ndarray, scale: float = 1.0) -> np.ndarray:
    """sigma_1(x) = 0.2 - log(x_1), times ``scale``."""
    return (0.2 - np.log(x[:, 0])) * scale


def _censored_cdf(y: np.ndarray, mu: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """P(max{0, mu + sigma * eps} <= y)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        smooth = stats.norm.cdf((y - mu) / sigma)
    cdf = np.where(sigma > 0, smooth, (y >= mu).astype(float))
    return np.where(y < 0, 0.0, cdf)


def _censored_mean(mu: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """E[max{0, mu + sigma * eps}]."""
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = mu / sigma
        smooth = mu * stats.norm.cdf(ratio) + sigma * stats.norm.pdf(ratio)
    return np.where(sigma > 0, smooth, np.maximum(mu, 0.0))


def ite_conditional_cdf(
    scenario: Scenario,
    y: np.ndarray,
    mu1: np.ndarray,
    sigma1: np.ndarray,
    mix: float = SETTING2_MIX,
) -> np.ndarray:
    """F(y | x) of the treated outcome; the oracle score."""
    cdf = _censored_cdf(y, mu1, sigma1)
    if scenario is Scenario.ITE2:
        cdf = mix * stats.norm.cdf((y + 0.5) / 0.1) + (1.0 - mix) * cdf
    return cdf


def ite_conditional_mean(
    scenario: Scenario, mu1: np.ndarray, sigma1: np.ndarray, mix: float = SETTING2_MIX
) -> np.ndarray:
    """E[O(1) | X = x]."""
    mean = _censored_mean(mu1, sigma1)
    if scenario is Scenario.ITE2:
        mean = mix * -0.5 + (1.0 - mix) * mean
    return mean


def ite_conditional_quantile(mu1: np.ndarray, sigma1: np.ndarray, beta: float) -> np.ndarray:
    """beta-quantile of max{0, mu_1 + sigma_1 eps} (the non-mixture component in setting 2)."""
    return np.maximum(0.0, mu1 + sigma1 * stats.norm.ppf(beta))


def _ite_population(
    spec: SimulationSpec, rng: np.random.Generator, size: int
) -> Dict[str, np.ndarray]:
    x = ite_covariates(rng, size, spec.covariance)
    eps0 = rng.standard_normal(size)
    if spec.coupling is Coupling.POSITIVE:
        eps1 = eps0.copy()
    elif spec.coupling is Coupling.NEGATIVE:
        eps1 = -eps0
    else:
        eps1 = rng.standard_normal(size)

    mu1 = treated_mean(spec.scenario, x)
    sigma1 = treated_scale(x, spec.sigma1_scale)
    o1 = np.maximum(0.0, mu1 + sigma1 * eps1)
    if spec.scenario is Scenario.ITE3:
        o0 = control_mean(x) + 0.1 * eps0
    else:
        o0 = 0.1 * eps0
    if spec.scenario is Scenario.ITE2:
        mixed = rng.random(size) < spec.setting2_mix
        o1 = np.where(mixed, 0.1 * eps0 - 0.5, o1)
        o0 = np.where(mixed, o1 + 0.05, o0)

    e = propensity(x)
    treated = rng.random(size) < e
    return {"x": x, "eps0": eps0, "eps1": eps1, "mu1": mu1, "sigma1": sigma1,
            "o0": o0, "o1": o1, "e": e, "treated": treated}


def _ite_score(
    spec: SimulationSpec, y: np.ndarray, mu1: np.ndarray, sigma1: np.ndarray
) -> np.ndarray:
    if spec.score == "oracle":
        prediction = ite_conditional_cdf(spec.scenario, y, mu1, sigma1, spec.setting2_mix)
    elif spec.score == "res":
        prediction = ite_conditional_mean(spec.scenario, mu1, sigma1, spec.setting2_mix)
    else:
        prediction = ite_conditional_quantile(mu1, sigma1, spec.cqr_beta)
    return apply_score(spec.score_spec(), y, prediction)


def gen_ite(spec: SimulationSpec, trial_index: int) -> GeneratedTrial:
    """
    One ITE trial.

    Two independent populations are drawn, sized so that the treated part
    of the first averages ``n_calib_target`` units and the control part of
    the second averages ``m`` units. Treated units calibrate with scores of
    O(1); control units are tested with threshold c = O(0) and are null when
    O(1) <= O(0). Weights are (1 - e(x)) / e(x).

    Raises:
        SimulationError: if the spec is not an ITE scenario
    """
    if not spec.scenario.is_ite:
        raise SimulationError(f"gen_ite cannot generate '{spec.scenario.value}'",
                              scenario=spec.scenario.value)
    rng = _trial_rng(spec, trial_index)
    calib_pop = _ite_population(spec, rng, math.ceil(spec.n_calib_target / MEAN_PROPENSITY))
    test_pop = _ite_population(spec, rng, math.ceil(spec.m / (1.0 - MEAN_PROPENSITY)))

    cal = {k: v[calib_pop["treated"]] for k, v in calib_pop.items()}
    tst = {k: v[~test_pop["treated"]] for k, v in test_pop.items()}

    calib_scores = _ite_score(spec, cal["o1"], cal["mu1"], cal["sigma1"])
    test_scores = _ite_score(spec, tst["o0"], tst["mu1"], tst["sigma1"])
    oracle_scores = _ite_score(spec, tst["o1"], tst["mu1"], tst["sigma1"])

    extras = {"calib_propensity": cal["e"], "test_propensity": tst["e"]}
    if spec.debug:
        for key in ("x", "eps0", "eps1", "mu1", "sigma1", "o0", "o1"):
            extras[f"calib_{key}"] = cal[key]
            extras[f"test_{key}"] = tst[key]

    return _assemble(
        spec, trial_index,
        calib_scores=calib_scores,
        calib_w=(1.0 - cal["e"]) / cal["e"],
        test_scores=test_scores,
        test_w=(1.0 - tst["e"]) / tst["e"],
        null_flags=tst["o1"] <= tst["o0"],
        oracle_scores=oracle_scores,
        calib_outcomes=cal["o1"],
        extras=extras,
    )


# ---------------------------------------------------------------------------
# Outlier detection


def outlier_centers(spec: SimulationSpec, trial_index: int = 0) -> np.ndarray:
    """The 50 mixture centres W ~ Unif([-3, 3]^50), per study or per trial."""
    if spec.fixed_centers:
        rng = keyed_generator(spec.master_seed, Stream.CENTERS)
    else:
        rng = keyed_generator(spec.master_seed, Stream.CENTERS, trial_index)
    return rng.uniform(-3.0, 3.0, size=(N_CENTERS, OUTLIER_DIM))


def _draw_mixture(
    rng: np.random.Generator, centers: np.ndarray, size: int, scale: float = 1.0
) -> np.ndarray:
    """sqrt(scale) * V + W with V standard normal and W a uniformly chosen centre."""
    v = rng.standard_normal((size, centers.shape[1]))
    w = centers[rng.integers(0, centers.shape[0], size=size)]
    return math.sqrt(scale) * v + w


def _draw_calibration_inliers(
    rng: np.random.Generator, centers: np.ndarray, size: int
) -> np.ndarray:
    """
    Inliers from P_X with dQ/dP proportional to sigma(x' theta).

    Rejection sampling from Q_X with acceptance sigma(t_min) / sigma(x' theta),
    where t_min sits eight standard deviations of theta'V below the lowest
    centre projection.
    """
    t_min = float(np.min(centers @ OUTLIER_THETA)) - 8.0 * float(np.linalg.norm(OUTLIER_THETA))
    floor = expit(t_min)
    batches = []
    accepted = 0
    while accepted < size:
        x = _draw_mixture(rng, centers, max(64, 8 * (size - accepted)))
        keep = rng.random(x.shape[0]) < floor / expit(x @ OUTLIER_THETA)
        batches.append(x[keep])
        accepted += int(keep.sum())
    if not batches:
        return np.empty((0, centers.shape[1]))
    return np.concatenate(batches)[:size]


def outlier_count(m: int, rho: float) -> int:
    """Number of outliers in a test set of size m: m * rho rounded half up."""
    return int(math.floor(m * rho + 0.5))


def gen_outlier(spec: SimulationSpec, trial_index: int) -> GeneratedTrial:
    """
    One outlier-detection trial.

    Test inliers are V + W and outliers sqrt(a) V + W, both under Q_X;
    calibration inliers come from P_X. Scores are the one-class SVM decision
    function (outliers score low), and the null units are the inliers.

    Raises:
        SimulationError: if the spec is not the outlier scenario or has no
            training units
    """
    if spec.scenario is not Scenario.OUTLIER:
        raise SimulationError(f"gen_outlier cannot generate '{spec.scenario.value}'",
                              scenario=spec.scenario.value)
    if spec.n_train < 1:
        raise SimulationError("the one-class SVM needs at least one training unit",
                              scenario=spec.scenario.value)
    rng = _trial_rng(spec, trial_index)
    centers = outlier_centers(spec, trial_index)

    x_train = _draw_calibration_inliers(rng, centers, spec.n_train)
    x_calib = _draw_calibration_inliers(rng, centers, spec.n_calib_target)

    n_out = outlier_count(spec.m, spec.rho)
    x_test = np.concatenate([
        _draw_mixture(rng, centers, n_out, scale=spec.signal),
        _draw_mixture(rng, centers, spec.m - n_out),
    ])
    inlier = np.arange(spec.m) >= n_out
    order = rng.permutation(spec.m)
    x_test = x_test[order]
    inlier = inlier[order]

    detector = OneClassSVM(kernel="rbf", gamma="scale").fit(x_train)
    score = spec.score_spec()
    calib_scores = apply_score(
        score, np.zeros(x_calib.shape[0]),
        detector.decision_function(x_calib) if spec.n_calib_target else np.empty(0),
    )
    test_scores = apply_score(
        score, np.zeros(spec.m),
        detector.decision_function(x_test) if spec.m else np.empty(0),
    )

    extras: Dict[str, np.ndarray] = {}
    if spec.debug:
        extras = {"calib_x": x_calib, "test_x": x_test, "centers": centers}

    return _assemble(
        spec, trial_index,
        calib_scores=calib_scores,
        calib_w=expit(x_calib @ OUTLIER_THETA),
        test_scores=test_scores,
        test_w=expit(x_test @ OUTLIER_THETA),
        null_flags=inlier,
        oracle_scores=test_scores,
        calib_outcomes=np.zeros(x_calib.shape[0]),
        extras=extras,
    )


# ---------------------------------------------------------------------------
# Binary covariate shift


def _covshift_population(
    rng: np.random.Generator, size: int
) -> Tuple[np.ndarray, np.ndarray]:
    x = rng.standard_normal((size, COVSHIFT_DIM))
    y = (rng.random(size) < expit(x @ COVSHIFT_COEF + COVSHIFT_INTERCEPT)).astype(float)
    return x, y


def selection_probability(mu_hat: np.ndarray, mu_bar: float) -> np.ndarray:
    """p(x) = min{0.8, sigma(mu_hat(x) - mu_bar)}."""
    return np.minimum(MAX_SELECTION_PROB, expit(mu_hat - mu_bar))


def gen_covshift_binary(spec: SimulationSpec, trial_index: int) -> GeneratedTrial:
    """
    One binary covariate-shift trial.

    A logistic regression fitted on ``n_train`` population units gives
    mu_hat. Population units enter calibration with probability p(x) until
    ``n_calib_target`` are kept, so the calibration covariates are shifted by
    w(x) = 1 / p(x) relative to the test units, which are plain population
    draws. Test units use threshold c = 0 and are null when Y = 0. With
    ``negatives_only`` the calibration set keeps only its Y = 0 units.

    Raises:
        SimulationError: if the spec is not covshift_binary or the training
            sample has a single class
    """
    if spec.scenario is not Scenario.COVSHIFT_BINARY:
        raise SimulationError(
            f"gen_covshift_binary cannot generate '{spec.scenario.value}'",
            scenario=spec.scenario.value,
        )
    rng = _trial_rng(spec, trial_index)
    x_train, y_train = _covshift_population(rng, spec.n_train)
    if np.unique(y_train).size < 2:
        raise SimulationError("training sample needs both outcome classes",
                              scenario=spec.scenario.value)
    model = LogisticRegression().fit(x_train, y_train)
    mu_bar = float(np.mean(model.predict_proba(x_train)[:, 1]))

    kept_x, kept_y = [], []
    kept = 0
    while kept < spec.n_calib_target:
        x, y = _covshift_population(rng, max(64, 4 * (spec.n_calib_target - kept)))
        p = selection_probability(model.predict_proba(x)[:, 1], mu_bar)
        keep = rng.random(x.shape[0]) < p
        kept_x.append(x[keep])
        kept_y.append(y[keep])
        kept += int(keep.sum())
    if kept_x:
        x_calib = np.concatenate(kept_x)[: spec.n_calib_target]
        y_calib = np.concatenate(kept_y)[: spec.n_calib_target]
    else:
        x_calib, y_calib = np.empty((0, COVSHIFT_DIM)), np.empty(0)
    if spec.negatives_only:
        x_calib, y_calib = x_calib[y_calib == 0], y_calib[y_calib == 0]

    x_test, y_test = _covshift_population(rng, spec.m)

    mu_calib = model.predict_proba(x_calib)[:, 1] if x_calib.shape[0] else np.empty(0)
    mu_test = model.predict_proba(x_test)[:, 1] if spec.m else np.empty(0)
    p_calib = selection_probability(mu_calib, mu_bar)
    p_test = selection_probability(mu_test, mu_bar)

    score = spec.score_spec(np.concatenate([mu_calib, mu_test]), [0.0])
    calib_scores = apply_score(score, y_calib, mu_calib, threshold=0.0)
    test_scores = apply_score(score, np.zeros(spec.m), mu_test, threshold=0.0)
    oracle_scores = apply_score(score, y_test, mu_test, threshold=0.0)

    return _assemble(
        spec, trial_index,
        calib_scores=calib_scores,
        calib_w=1.0 / p_calib,
        test_scores=test_scores,
        test_w=1.0 / p_test,
        null_flags=y_test == 0,
        oracle_scores=oracle_scores,
        calib_outcomes=y_calib,
        extras={"calib_selection_prob": p_calib, "test_selection_prob": p_test},
    )


def generate(spec: SimulationSpec, trial_index: int) -> GeneratedTrial:
    """Dispatch to the generator of ``spec.scenario``."""
    if spec.scenario.is_ite:
        return gen_ite(spec, trial_index)
    if spec.scenario is Scenario.OUTLIER:
        return gen_outlier(spec, trial_index)
    return gen_covshift_binary(spec, trial_index)
