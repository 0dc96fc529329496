"""
Unit tests for simulation specs and the synthetic data generators.
"""

import numpy as np
import pytest

from confsel.core.exceptions import SimulationError
from confsel.core.types import ScoreKind
from confsel.inference.metrics import gamma_hat
from confsel.simulation.generators import (
    MAX_SELECTION_PROB,
    gen_covshift_binary,
    gen_ite,
    gen_outlier,
    generate,
    ite_conditional_cdf,
    ite_conditional_mean,
    ite_covariates,
    outlier_centers,
    outlier_count,
    propensity,
)
from confsel.simulation.spec import Coupling, Covariance, Scenario, SimulationSpec


def _small_outlier(**overrides):
    options = {"n_train": 100, "n_calib_target": 60, "m": 50}
    options.update(overrides)
    return SimulationSpec.for_scenario("outlier", **options)


def _small_covshift(**overrides):
    options = {"n_train": 400, "n_calib_target": 80, "m": 40}
    options.update(overrides)
    return SimulationSpec.for_scenario("covshift_binary", **options)


class TestSimulationSpec:
    """Test spec validation and presets."""

    def test_defaults(self):
        """Test ITE defaults and the default score."""
        spec = SimulationSpec("ite1")
        assert spec.scenario is Scenario.ITE1
        assert spec.coupling is Coupling.INDEPENDENT
        assert spec.score == "oracle"
        assert (spec.n_calib_target, spec.m, spec.n_train) == (250, 100, 750)

    def test_presets(self):
        """Test outlier and covariate-shift presets."""
        outlier = SimulationSpec.for_scenario("outlier")
        assert (outlier.n_train, outlier.n_calib_target, outlier.m) == (1000, 1000, 1000)
        assert outlier.score == "ocsvm"
        assert outlier.hypothesis_conditional
        covshift = SimulationSpec.for_scenario("covshift_binary", m=30)
        assert covshift.m == 30
        assert covshift.score == "clip"

    def test_covariance_aliases(self):
        """Test the CLI spellings of the covariance."""
        assert SimulationSpec("ite1", covariance="corr").covariance is Covariance.AR
        assert SimulationSpec("ite1", covariance="ind").covariance is Covariance.IDENTITY

    def test_unknown_scenario(self):
        """Test unknown scenarios list the choices."""
        with pytest.raises(SimulationError, match="expected one of"):
            SimulationSpec("ite4")

    def test_score_not_available(self):
        """Test scores are checked against the scenario."""
        with pytest.raises(SimulationError, match="not available") as exc:
            SimulationSpec("outlier", score="oracle")
        assert exc.value.scenario == "outlier"

    def test_negatives_only_scope(self):
        """Test negatives_only is refused outside covshift_binary."""
        with pytest.raises(SimulationError, match="negatives_only"):
            SimulationSpec("ite2", negatives_only=True)

    @pytest.mark.parametrize("changes", [{"q": 1.0}, {"rho": 1.5}, {"gamma": 0.5},
                                         {"trials": -1}, {"signal": 0.0},
                                         {"setting2_mix": 1.5}, {"setting2_mix": -0.1}])
    def test_invalid_fields(self, changes):
        """Test out-of-range fields raise SimulationError."""
        with pytest.raises(SimulationError):
            SimulationSpec("ite1", **changes)

    def test_to_dict(self):
        """Test enums are flattened."""
        data = SimulationSpec("ite3", coupling="negative").to_dict()
        assert data["scenario"] == "ite3"
        assert data["coupling"] == "negative"
        assert data["covariance"] == "identity"
        assert data["setting2_mix"] == 0.1

    @pytest.mark.parametrize("scenario, score, kind", [
        ("ite1", None, ScoreKind.CDF_PASSTHROUGH),
        ("ite2", "res", ScoreKind.RES),
        ("ite3", "cqr", ScoreKind.CQR),
        ("outlier", None, ScoreKind.CDF_PASSTHROUGH),
        ("covshift_binary", "res", ScoreKind.RES),
    ])
    def test_score_spec(self, scenario, score, kind):
        """Test score names map to score families."""
        assert SimulationSpec(scenario, score=score).score_spec().kind is kind

    def test_cqr_level_carried(self):
        """Test the cqr quantile level reaches the score spec."""
        assert SimulationSpec("ite1", score="cqr", cqr_beta=0.7).score_spec().beta == 0.7

    def test_clip_constant_from_predictions(self):
        """Test M = 2 max(|mu_hat| v |c|) + 1 over the trial's rows."""
        spec = SimulationSpec("covshift_binary")
        score = spec.score_spec([0.5, -2.0], [0.0])
        assert score.kind is ScoreKind.CLIP
        assert score.clip_constant == 5.0

    def test_clip_needs_predictions(self):
        """Test the clip score refuses to build without predictions."""
        with pytest.raises(SimulationError, match="predictions") as exc:
            SimulationSpec("covshift_binary").score_spec()
        assert exc.value.scenario == "covshift_binary"

    def test_clip_invalid_predictions(self):
        """Test non-finite predictions surface as SimulationError."""
        with pytest.raises(SimulationError):
            SimulationSpec("covshift_binary").score_spec([np.inf], [0.0])


class TestITE:
    """Test the ITE generator."""

    def test_covariates_in_unit_cube(self):
        """Test the copula maps into [0, 1]."""
        x = ite_covariates(np.random.default_rng(0), 500, Covariance.AR)
        assert x.shape == (500, 10)
        assert np.all((x > 0) & (x < 1))

    def test_ar_covariates_correlated(self):
        """Test neighbouring AR covariates are strongly correlated."""
        x = ite_covariates(np.random.default_rng(1), 5000, Covariance.AR)
        assert np.corrcoef(x[:, 0], x[:, 1])[0, 1] > 0.8
        x = ite_covariates(np.random.default_rng(1), 5000, Covariance.IDENTITY)
        assert abs(np.corrcoef(x[:, 0], x[:, 1])[0, 1]) < 0.1

    @pytest.mark.parametrize("scenario", ["ite1", "ite2", "ite3"])
    def test_propensity_range(self, scenario):
        """Test every generated propensity lies in [1/4, 1/2]."""
        trial = gen_ite(SimulationSpec(scenario, master_seed=3), 0)
        for key in ("calib_propensity", "test_propensity"):
            e = trial.extras[key]
            assert np.all((e >= 0.25) & (e <= 0.5))

    def test_propensity_function(self):
        """Test the endpoints of e(x)."""
        x = np.array([[0.0] + [0.5] * 9, [1.0] + [0.5] * 9])
        np.testing.assert_allclose(propensity(x), [0.25, 0.5])

    def test_weights_from_propensity(self):
        """Test w = (1 - e) / e."""
        trial = gen_ite(SimulationSpec("ite1"), 2)
        e = trial.extras["test_propensity"]
        np.testing.assert_allclose(trial.true_test_weights, (1 - e) / e)

    def test_noise_free_positive_coupling(self):
        """Test null iff max{0, mu_1} <= 0.1 eps_0 when sigma_1 is zero."""
        spec = SimulationSpec("ite1", coupling="positive", sigma1_scale=0.0, debug=True)
        trial = gen_ite(spec, 0)
        mu1 = trial.extras["test_mu1"]
        eps0 = trial.extras["test_eps0"]
        expected = np.maximum(0.0, mu1) <= 0.1 * eps0
        assert np.array_equal(trial.null_flags, expected)

    @pytest.mark.parametrize("coupling, sign", [("positive", 1.0), ("negative", -1.0)])
    def test_coupling_contract(self, coupling, sign):
        """Test eps_1 equals plus or minus eps_0 elementwise."""
        trial = gen_ite(SimulationSpec("ite2", coupling=coupling, debug=True), 1)
        for prefix in ("calib", "test"):
            assert np.array_equal(trial.extras[f"{prefix}_eps1"],
                                  sign * trial.extras[f"{prefix}_eps0"])

    def test_null_flags_match_outcomes(self):
        """Test null iff O(1) <= O(0)."""
        trial = gen_ite(SimulationSpec("ite3", debug=True), 4)
        expected = trial.extras["test_o1"] <= trial.extras["test_o0"]
        assert np.array_equal(trial.null_flags, expected)

    def test_oracle_scores_are_conditional_cdf(self):
        """Test calibration oracle scores lie in [0, 1]."""
        trial = gen_ite(SimulationSpec("ite2"), 0)
        assert np.all((trial.calibration.scores >= 0) & (trial.calibration.scores <= 1))

    def test_censored_cdf_degenerate(self):
        """Test a zero noise scale gives a step function."""
        cdf = ite_conditional_cdf(Scenario.ITE1, np.array([0.5, 1.5]),
                                  np.array([1.0, 1.0]), np.array([0.0, 0.0]))
        assert cdf.tolist() == [0.0, 1.0]

    def test_zero_mixture_is_setting_one(self):
        """Test setting 2 without its shifted component has the setting 1 cdf."""
        rng = np.random.default_rng(8)
        y = rng.normal(0.5, 1.0, size=50)
        mu1 = rng.normal(0.0, 1.0, size=50)
        sigma1 = rng.uniform(0.1, 2.0, size=50)
        setting2 = ite_conditional_cdf(Scenario.ITE2, y, mu1, sigma1, mix=0.0)
        setting1 = ite_conditional_cdf(Scenario.ITE1, y, mu1, sigma1)
        np.testing.assert_array_equal(setting2, setting1)
        assert not np.array_equal(ite_conditional_cdf(Scenario.ITE2, y, mu1, sigma1), setting1)

    def test_mixture_weight_drives_outcomes(self):
        """Test setting2_mix = 0 never and 1 always draws the shifted component."""
        trial = gen_ite(SimulationSpec("ite2", setting2_mix=0.0, debug=True), 0)
        np.testing.assert_array_equal(trial.extras["test_o0"], 0.1 * trial.extras["test_eps0"])
        trial = gen_ite(SimulationSpec("ite2", setting2_mix=1.0, debug=True), 0)
        np.testing.assert_allclose(trial.extras["test_o1"],
                                   0.1 * trial.extras["test_eps0"] - 0.5)
        assert trial.null_flags.all()

    def test_mixture_weight_in_mean(self):
        """Test the residual score's conditional mean moves with setting2_mix."""
        mu1, sigma1 = np.array([1.0]), np.array([1.0])
        base = ite_conditional_mean(Scenario.ITE2, mu1, sigma1, mix=0.0)
        shifted = ite_conditional_mean(Scenario.ITE2, mu1, sigma1, mix=0.5)
        np.testing.assert_allclose(shifted, 0.5 * -0.5 + 0.5 * base)

    @pytest.mark.parametrize("score", ["res", "cqr"])
    def test_alternative_scores(self, score):
        """Test the residual and quantile scores generate."""
        trial = gen_ite(SimulationSpec("ite1", score=score), 0)
        assert trial.calibration.n > 0

    def test_sizes_near_targets(self):
        """Test calibration and test sizes average near their targets."""
        spec = SimulationSpec("ite1")
        sizes = np.array([(t.calibration.n, t.test.m)
                          for t in (gen_ite(spec, k) for k in range(20))])
        assert abs(sizes[:, 0].mean() - 250) < 25
        assert abs(sizes[:, 1].mean() - 100) < 15

    def test_wrong_scenario(self):
        """Test gen_ite refuses other scenarios."""
        with pytest.raises(SimulationError):
            gen_ite(_small_outlier(), 0)


class TestDeterminism:
    """Test keyed trial streams."""

    @pytest.mark.parametrize("make_spec", [
        lambda: SimulationSpec("ite2", covariance="corr", master_seed=9),
        lambda: _small_outlier(master_seed=9),
        lambda: _small_covshift(master_seed=9),
    ])
    def test_same_key_same_trial(self, make_spec):
        """Test (seed, trial index) fixes the trial."""
        spec = make_spec()
        first, second = generate(spec, 3), generate(spec, 3)
        assert np.array_equal(first.calibration.scores, second.calibration.scores)
        assert np.array_equal(first.test.scores, second.test.scores)
        assert np.array_equal(first.test.weights, second.test.weights)
        assert np.array_equal(first.null_flags, second.null_flags)

    def test_trials_differ(self):
        """Test different trial indices give different data."""
        spec = SimulationSpec("ite1")
        assert not np.array_equal(generate(spec, 0).test.scores, generate(spec, 1).test.scores)

    def test_order_independent(self):
        """Test a trial does not depend on trials generated before it."""
        spec = SimulationSpec("ite1", master_seed=5)
        direct = generate(spec, 7)
        for k in range(3):
            generate(spec, k)
        again = generate(spec, 7)
        assert np.array_equal(direct.calibration.scores, again.calibration.scores)

    def test_estimated_weights_within_gamma(self):
        """Test perturbed weights stay within the gamma band."""
        trial = generate(SimulationSpec("ite1", gamma=2.0), 0)
        assert gamma_hat(trial.true_test_weights, trial.test.weights) <= 2.0 + 1e-12
        assert not np.array_equal(trial.true_test_weights, trial.test.weights)


class TestOutlier:
    """Test the outlier-detection generator."""

    def test_no_outliers(self):
        """Test rho = 0 gives only inliers."""
        trial = gen_outlier(_small_outlier(rho=0.0), 0)
        assert trial.null_flags.all()

    def test_exact_outlier_count(self):
        """Test m rho outliers for m = 1000 and rho = 0.3."""
        trial = gen_outlier(_small_outlier(m=1000, rho=0.3), 0)
        assert trial.test.m == 1000
        assert int((~trial.null_flags).sum()) == 300

    @pytest.mark.parametrize("m, rho, expected", [(1000, 0.3, 300), (100, 0.0, 0), (5, 0.5, 3)])
    def test_outlier_count(self, m, rho, expected):
        """Test rounding of m rho."""
        assert outlier_count(m, rho) == expected

    def test_exact_calibration_size(self):
        """Test the calibration set has exactly the requested size."""
        trial = gen_outlier(_small_outlier(), 1)
        assert trial.calibration.n == 60

    def test_fixed_centres(self):
        """Test centres are shared across trials unless unfixed."""
        spec = _small_outlier()
        assert np.array_equal(outlier_centers(spec, 0), outlier_centers(spec, 5))
        loose = spec.with_options(fixed_centers=False)
        assert not np.array_equal(outlier_centers(loose, 0), outlier_centers(loose, 5))

    def test_weights_are_logistic(self):
        """Test weights lie in (0, 1)."""
        trial = gen_outlier(_small_outlier(), 0)
        assert np.all((trial.true_test_weights > 0) & (trial.true_test_weights < 1))

    def test_outliers_score_low(self):
        """Test outliers have lower mean score than inliers at strong signal."""
        trial = gen_outlier(_small_outlier(m=200, rho=0.5, signal=4.0), 0)
        scores = trial.test.scores
        assert scores[~trial.null_flags].mean() < scores[trial.null_flags].mean()


class TestCovariateShift:
    """Test the binary covariate-shift generator."""

    def test_selection_probability_capped(self):
        """Test p(x) <= 0.8 everywhere."""
        trial = gen_covshift_binary(_small_covshift(), 0)
        for key in ("calib_selection_prob", "test_selection_prob"):
            assert trial.extras[key].max() <= MAX_SELECTION_PROB

    def test_weight_times_probability_constant(self):
        """Test w(x) p(x) is constant."""
        trial = gen_covshift_binary(_small_covshift(), 1)
        product = trial.true_calib_weights * trial.extras["calib_selection_prob"]
        np.testing.assert_allclose(product, 1.0)
        product = trial.true_test_weights * trial.extras["test_selection_prob"]
        np.testing.assert_allclose(product, 1.0)

    def test_exact_calibration_size(self):
        """Test rejection sampling stops at the target."""
        assert gen_covshift_binary(_small_covshift(), 0).calibration.n == 80

    def test_negatives_only(self):
        """Test only null calibration units are kept."""
        spec = _small_covshift(negatives_only=True)
        trial = gen_covshift_binary(spec, 0)
        assert spec.hypothesis_conditional
        assert np.all(trial.calib_outcomes == 0)
        assert trial.calibration.n <= 80

    def test_clip_scores_separate_positives(self):
        """Test calibration positives score above every negative."""
        trial = gen_covshift_binary(_small_covshift(), 2)
        positive = trial.calib_outcomes > 0
        scores = trial.calibration.scores
        assert scores[positive].min() > scores[~positive].max()

    def test_residual_score(self):
        """Test the residual alternative."""
        trial = gen_covshift_binary(_small_covshift(score="res"), 0)
        assert np.all(trial.test.scores <= 0)

    def test_single_class_training(self):
        """Test a one-unit training set is refused."""
        with pytest.raises(SimulationError, match="both outcome classes"):
            gen_covshift_binary(_small_covshift(n_train=1), 0)
