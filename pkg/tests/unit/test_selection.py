"""
Unit tests for BH, weighted conformalized selection and the e-value view.
"""

import numpy as np
import pytest

from confsel.core.exceptions import SelectionError, ValidationError
from confsel.core.scores import apply_score
from confsel.core.types import (
    Method,
    Pruning,
    ScoreSpec,
    SelectionConfig,
    WeightedCalibration,
    WeightedTest,
)
from confsel.inference.pvalues import (
    aux_pvalues,
    oracle_pvalues,
    wcp_nonrandomized,
    wcp_randomized,
)
from confsel.inference.selection import (
    bh,
    ebh,
    evalues_from_wcs,
    hc_wcs,
    rejection_sizes,
    select,
    wcs,
)
from confsel.simulation.generators import generate
from confsel.simulation.spec import SimulationSpec

WCS_METHODS = ["wcs_hete", "wcs_homo", "wcs_dtm"]


def _bh_reference(p, q):
    m = len(p)
    kstar = 0
    for k in range(1, m + 1):
        if np.sum(p <= q * k / m) >= k:
            kstar = k
    return set(np.flatnonzero(p <= q * kstar / m).tolist()) if kstar else set()


class TestBH:
    """Test the Benjamini-Hochberg step-up procedure."""

    def test_two_smallest(self):
        """Test the hand-checkable step-up."""
        result = bh([0.01, 0.02, 0.30, 0.90], 0.1)
        assert result.selected.tolist() == [0, 1]
        assert result.bh_kstar == 2
        assert result.method is Method.WBH

    def test_nothing_below(self):
        """Test p-values of one reject nothing."""
        result = bh([1.0, 1.0, 1.0], 0.3)
        assert result.n_selected == 0
        assert result.bh_kstar == 0

    def test_single_unit(self):
        """Test m = 1."""
        assert bh([0.05], 0.1).selected.tolist() == [0]

    def test_empty_input(self):
        """Test m = 0."""
        result = bh([], 0.1)
        assert result.n_selected == 0
        assert result.m == 0

    def test_unsorted_input(self):
        """Test selection is independent of input order."""
        assert bh([0.9, 0.02, 0.3, 0.01], 0.1).selected.tolist() == [1, 3]

    @pytest.mark.parametrize("q", [0.0, 1.0, -0.5])
    def test_invalid_level(self, q):
        """Test q outside (0, 1) is rejected."""
        with pytest.raises(ValidationError):
            bh([0.1], q)

    def test_invalid_pvalue(self):
        """Test p-values outside [0, 1] are rejected."""
        with pytest.raises(ValidationError):
            bh([1.2], 0.1)

    def test_matches_reference(self):
        """Test against a direct scan over k."""
        rng = np.random.default_rng(17)
        for _ in range(50):
            p = rng.beta(0.5, 1.0, size=int(rng.integers(1, 40)))
            q = float(rng.uniform(0.05, 0.5))
            assert set(bh(p, q).selected.tolist()) == _bh_reference(p, q)

    def test_monotone_in_pvalues(self):
        """Test lowering any p-values never shrinks the selection."""
        rng = np.random.default_rng(19)
        for _ in range(50):
            p = rng.beta(0.5, 1.0, size=int(rng.integers(1, 40)))
            lowered = p * rng.uniform(0.0, 1.0, size=p.size) ** rng.integers(0, 2, size=p.size)
            q = float(rng.uniform(0.05, 0.5))
            assert set(bh(p, q).selected.tolist()) <= set(bh(lowered, q).selected.tolist())
            assert bh(p, q).bh_kstar <= bh(lowered, q).bh_kstar


class TestTracedInstances:
    """Test the two hand-traced instances."""

    @pytest.mark.parametrize("method", WCS_METHODS)
    def test_all_selected(self, traced_instance, method):
        """Test every pruning rule keeps both units."""
        calib, test = traced_instance
        result = wcs(calib, test, SelectionConfig(0.5, method=method))
        np.testing.assert_allclose(result.pvalues, [1 / 3, 1 / 3])
        assert result.sizes.tolist() == [2, 2]
        np.testing.assert_allclose(result.s, [0.5, 0.5])
        assert result.first_step.tolist() == [0, 1]
        assert result.selected.tolist() == [0, 1]
        assert result.r_star == 2

    @pytest.mark.parametrize("method", WCS_METHODS)
    def test_nothing_selected(self, traced_empty_instance, method):
        """Test an empty first step yields an empty selection."""
        calib, test = traced_empty_instance
        result = wcs(calib, test, SelectionConfig(0.5, method=method))
        np.testing.assert_allclose(result.pvalues, [1 / 3, 1.0])
        np.testing.assert_allclose(result.s, [0.25, 0.5])
        assert result.first_step.size == 0
        assert result.selected.size == 0
        assert result.r_star == 0

    def test_naive_trace(self, traced_instance):
        """Test the quadratic path reproduces the trace."""
        calib, test = traced_instance
        result = wcs(calib, test, SelectionConfig(0.5), naive=True)
        assert result.sizes.tolist() == [2, 2]
        assert result.selected.tolist() == [0, 1]

    def test_ebh_reproduces_trace(self, traced_instance):
        """Test eBH on the derived e-values selects both units."""
        calib, test = traced_instance
        result = wcs(calib, test, SelectionConfig(0.5))
        e = evalues_from_wcs(result.pvalues, result.sizes, 0.5, test.m)
        np.testing.assert_allclose(e.values, [2.0, 2.0])
        assert ebh(e, 0.5).tolist() == result.selected.tolist()


class TestWCS:
    """Test engine behavior and configuration."""

    def test_empty_test_set(self):
        """Test m = 0 gives an empty result."""
        result = wcs(WeightedCalibration([0.0], [1.0]), WeightedTest([], []), SelectionConfig(0.1))
        assert result.selected.size == 0
        assert result.r_star == 0
        assert result.sizes.size == 0

    def test_rejects_other_methods(self, traced_instance):
        """Test wcs refuses wbh."""
        calib, test = traced_instance
        with pytest.raises(SelectionError) as exc:
            wcs(calib, test, SelectionConfig(0.5, method="wbh"))
        assert exc.value.method == "wbh"

    def test_zero_xi_selects_first_step(self, make_instance):
        """Test xi = 0 keeps every first-step unit."""
        rng = np.random.default_rng(31)
        for _ in range(10):
            calib, test = make_instance(rng)
            result = wcs(calib, test, SelectionConfig(0.3, method="wcs_hete"), xi=0.0)
            assert result.selected.tolist() == result.first_step.tolist()

    def test_zero_xi_homo_selects_first_step(self, make_instance):
        """Test a shared xi = 0 under homo pruning returns R^(1)."""
        rng = np.random.default_rng(37)
        for _ in range(10):
            calib, test = make_instance(rng)
            q = float(rng.uniform(0.1, 0.5))
            result = wcs(calib, test, SelectionConfig(q, method="wcs_homo"), xi=0.0)
            assert result.selected.tolist() == result.first_step.tolist()
            assert result.r_star == len(result.first_step)

    def test_xi_range(self, traced_instance):
        """Test pruning uniforms outside [0, 1] are rejected."""
        calib, test = traced_instance
        with pytest.raises(ValidationError):
            wcs(calib, test, SelectionConfig(0.5, method="wcs_hete"), xi=[2.0, 0.5])

    def test_random_pruning_reproducible(self, make_instance):
        """Test the seed fixes hete and homo selections."""
        calib, test = make_instance(np.random.default_rng(9), m_max=40)
        for method in ("wcs_hete", "wcs_homo"):
            config = SelectionConfig(0.3, method=method, seed=5)
            first = wcs(calib, test, config)
            second = wcs(calib, test, config)
            assert first.selected.tolist() == second.selected.tolist()
            assert first.seed == 5

    def test_deterministic_pruning_has_no_seed(self, traced_instance):
        """Test dtm records no seed."""
        calib, test = traced_instance
        assert wcs(calib, test, SelectionConfig(0.5)).seed is None

    def test_to_dict(self, traced_instance):
        """Test serialization of the diagnostics."""
        calib, test = traced_instance
        data = wcs(calib, test, SelectionConfig(0.5)).to_dict()
        assert data["method"] == "wcs_dtm"
        assert data["pruning"] == "dtm"
        assert data["selected"] == [0, 1]
        assert data["sizes"] == [2, 2]


class TestRandomInstances:
    """Structural properties over random instances."""

    def setup_method(self):
        """Random generator shared by the checks."""
        self.rng = np.random.default_rng(2024)

    def _draw(self, make_instance):
        calib, test = make_instance(self.rng)
        q = float(self.rng.uniform(0.1, 0.5))
        return calib, test, q

    def test_sizes_and_thresholds(self, make_instance):
        """Test |R_{j->0}| >= 1 and s_j >= q / m."""
        for _ in range(30):
            calib, test, q = self._draw(make_instance)
            result = wcs(calib, test, SelectionConfig(q))
            assert np.all(result.sizes >= 1)
            assert np.all(result.s >= q / test.m - 1e-15)

    def test_inclusions(self, make_instance):
        """Test R_dtm within R_hete and R_homo, all within R^(1)."""
        for _ in range(30):
            calib, test, q = self._draw(make_instance)
            seed = int(self.rng.integers(1 << 30))
            sets = {
                m: set(wcs(calib, test, SelectionConfig(q, method=m, seed=seed)).selected.tolist())
                for m in WCS_METHODS
            }
            first = set(wcs(calib, test, SelectionConfig(q)).first_step.tolist())
            assert sets["wcs_dtm"] <= sets["wcs_hete"]
            assert sets["wcs_dtm"] <= sets["wcs_homo"]
            assert sets["wcs_homo"] <= first
            assert sets["wcs_hete"] <= first

    def test_r_star_counts_selection(self, make_instance):
        """Test r* equals the number of selected units."""
        for _ in range(20):
            calib, test, q = self._draw(make_instance)
            result = wcs(calib, test, SelectionConfig(q, method="wcs_hete", seed=1))
            assert result.r_star == result.n_selected

    def test_naive_matches_fast(self, make_instance):
        """Test the quadratic path matches the blocked path exactly."""
        for _ in range(30):
            calib, test, q = self._draw(make_instance)
            fast = wcs(calib, test, SelectionConfig(q))
            slow = wcs(calib, test, SelectionConfig(q), naive=True)
            assert np.array_equal(fast.sizes, slow.sizes)
            assert np.array_equal(fast.pvalues, slow.pvalues)
            assert fast.selected.tolist() == slow.selected.tolist()

    def test_sizes_with_ties(self):
        """Test both paths agree when test scores repeat."""
        calib = WeightedCalibration([0.0, 0.5, 1.0], [1.0, 2.0, 0.5])
        test = WeightedTest([-1.0, -1.0, 0.2, 0.2, 2.0], [1.0, 3.0, 0.5, 0.5, 1.0])
        assert np.array_equal(rejection_sizes(calib, test, 0.4),
                              rejection_sizes(calib, test, 0.4, naive=True))

    def test_ebh_equals_deterministic_pruning(self, make_instance):
        """Test eBH on the derived e-values equals wcs_dtm."""
        for _ in range(40):
            calib, test, q = self._draw(make_instance)
            result = wcs(calib, test, SelectionConfig(q))
            e = evalues_from_wcs(result.pvalues, result.sizes, q, test.m)
            assert ebh(e, q).tolist() == result.selected.tolist()

    def test_hc_wcs_matches_wcs(self, make_instance):
        """Test the conditional variant returns the same numbers."""
        for _ in range(15):
            calib, test, q = self._draw(make_instance)
            plain = wcs(calib, test, SelectionConfig(q, method="wcs_homo", seed=3))
            conditional = hc_wcs(calib, test,
                                 SelectionConfig(q, method="hc_wcs", pruning="homo", seed=3))
            assert conditional.method is Method.HC_WCS
            assert conditional.pruning is Pruning.HOMO
            assert conditional.selected.tolist() == plain.selected.tolist()
            assert np.array_equal(conditional.s, plain.s)

    def test_first_step_is_bh_membership(self, make_instance):
        """Test p_j <= s_j exactly when BH on the anchor's row plus p_j selects j."""
        for _ in range(30):
            calib, test, q = self._draw(make_instance)
            result = wcs(calib, test, SelectionConfig(q))
            first = set(result.first_step.tolist())
            for j in range(test.m):
                row = np.insert(aux_pvalues(calib, test, j).values, j, result.pvalues[j])
                assert (j in first) == (j in bh(row, q).selected.tolist())

    def test_sizes_from_planted_rows(self, make_instance):
        """Test |R_{j->0}| is BH on the anchor's row with zero planted at j."""
        for _ in range(20):
            calib, test, q = self._draw(make_instance)
            sizes = rejection_sizes(calib, test, q)
            for j in range(test.m):
                row = np.insert(aux_pvalues(calib, test, j).values, j, 0.0)
                assert sizes[j] == bh(row, q).n_selected

    def test_anchor_score_enters_only_through_ranks(self, make_instance):
        """Test replacing V_hat_j moves |R_{j->0}| only through the anchor row."""
        for _ in range(20):
            calib, test, q = self._draw(make_instance)
            sizes = rejection_sizes(calib, test, q)
            for j in range(test.m):
                replacement = float(self.rng.normal(0.0, 2.0))
                scores = test.scores.copy()
                scores[j] = replacement
                moved = WeightedTest(scores, test.weights)
                row = np.insert(
                    aux_pvalues(calib, test, j, anchor_score=replacement).values, j, 0.0
                )
                assert rejection_sizes(calib, moved, q)[j] == bh(row, q).n_selected

                # a score between V_hat_j and the next larger test score keeps every rank
                larger = test.scores[test.scores > test.scores[j]]
                gap = (larger.min() - test.scores[j]) / 2 if larger.size else 1.0
                scores[j] = test.scores[j] + gap
                same_ranks = WeightedTest(scores, test.weights)
                assert rejection_sizes(calib, same_ranks, q)[j] == sizes[j]

    def test_pvalue_monotone_in_test_score(self, make_instance):
        """Test raising test scores never lowers their p-values."""
        for _ in range(30):
            calib, test, _ = self._draw(make_instance)
            raised = WeightedTest(test.scores + self.rng.exponential(1.0, size=test.m),
                                  test.weights)
            before = wcp_nonrandomized(calib, test).values
            after = wcp_nonrandomized(calib, raised).values
            assert np.all(after >= before)


class TestNegativesOnlyCalibration:
    """Test clip scores with calibration restricted to units at or below their threshold."""

    def setup_method(self):
        """Clip-scored calibration and test sets sharing one constant."""
        rng = np.random.default_rng(53)
        n, m = 80, 25
        mu_calib = rng.normal(0.0, 1.0, size=n)
        mu_test = rng.normal(0.5, 1.0, size=m)
        y = (rng.uniform(size=n) < 0.4).astype(float)
        score = ScoreSpec.clip(np.concatenate([mu_calib, mu_test]), [0.0])
        self.weights = rng.uniform(0.2, 4.0, size=n)
        self.scores = apply_score(score, y, mu_calib, threshold=0.0)
        self.negative = y <= 0.0
        self.test = WeightedTest(apply_score(score, np.zeros(m), mu_test, threshold=0.0),
                                 rng.uniform(0.2, 4.0, size=m))
        self.full = WeightedCalibration(self.scores, self.weights)
        self.negatives = WeightedCalibration(self.scores[self.negative],
                                             self.weights[self.negative])

    def test_pvalue_ratio(self):
        """Test p'_j / p_j = (sum_{I0} w + w_j) / (sum w + w_j)."""
        p_negatives = wcp_nonrandomized(self.negatives, self.test).values
        p_full = wcp_nonrandomized(self.full, self.test).values
        w_j = self.test.weights
        expected = (self.weights[self.negative].sum() + w_j) / (self.weights.sum() + w_j)
        np.testing.assert_allclose(p_full / p_negatives, expected, rtol=1e-12)
        assert np.all(p_full <= p_negatives)

    def test_full_first_step_contains_negatives_only(self):
        """Test the smaller full-calibration p-values give a larger first step."""
        config = SelectionConfig(0.2, method="hc_wcs", pruning="dtm")
        conditional = hc_wcs(self.negatives, self.test, config)
        full = wcs(self.full, self.test, SelectionConfig(0.2))
        assert set(conditional.first_step.tolist()) <= set(full.first_step.tolist())
        assert np.all(full.sizes >= conditional.sizes)


class TestEValues:
    """Test e-values and eBH."""

    def test_traced_value(self):
        """Test e = 1 / 0.5."""
        assert evalues_from_wcs([1 / 3], [2], 0.5, 2).values[0] == pytest.approx(2.0)

    def test_indicator_fails(self):
        """Test p above s gives zero."""
        assert evalues_from_wcs([1.0], [1], 0.1, 10).values[0] == 0.0

    def test_full_size(self):
        """Test s = q gives 1 / q."""
        assert evalues_from_wcs([0.0], [10], 0.1, 10).values[0] == pytest.approx(10.0)

    def test_zero_size_rejected(self):
        """Test sizes below one are rejected."""
        with pytest.raises(ValidationError, match="at least 1"):
            evalues_from_wcs([0.1], [0], 0.1, 1)

    def test_ebh_single_large(self):
        """Test k_hat = 1 with threshold 8."""
        assert ebh([10.0, 0.0, 0.0, 0.0], 0.5).tolist() == [0]

    def test_ebh_all_zero(self):
        """Test zero e-values select nothing."""
        assert ebh([0.0, 0.0], 0.3).size == 0

    def test_ebh_negative_rejected(self):
        """Test negative e-values are rejected."""
        with pytest.raises(ValidationError):
            ebh([-1.0], 0.1)


class TestSelect:
    """Test dispatch by method."""

    def test_wbh_uses_randomized_pvalues(self, make_instance):
        """Test WBH is BH on randomized weighted p-values."""
        rng = np.random.default_rng(41)
        calib, test = make_instance(rng)
        u = rng.uniform(size=test.m)
        result = select(calib, test, SelectionConfig(0.2, method="wbh"), u=u)
        expected = bh(wcp_randomized(calib, test, u=u), 0.2)
        assert result.selected.tolist() == expected.selected.tolist()
        assert result.seed is None

    def test_wbh_seeded(self, traced_instance):
        """Test WBH records the tie-breaking seed."""
        calib, test = traced_instance
        result = select(calib, test, SelectionConfig(0.5, method="wbh", seed=4))
        assert result.seed == 4

    def test_wbh_nonrandomized(self, traced_instance):
        """Test WBH on non-randomized p-values of the traced instance."""
        calib, test = traced_instance
        config = SelectionConfig(0.5, method="wbh", randomized_pvalues=False)
        result = select(calib, test, config)
        np.testing.assert_allclose(result.pvalues, [1 / 3, 1 / 3])
        assert result.selected.tolist() == [0, 1]

    @pytest.mark.parametrize("method", WCS_METHODS + ["hc_wcs"])
    def test_dispatch(self, traced_instance, method):
        """Test every conformalized method reaches its engine."""
        calib, test = traced_instance
        result = select(calib, test, SelectionConfig(0.5, method=method))
        assert result.method.value == method
        assert result.selected.tolist() == [0, 1]


class TestOracleReplacement:
    """Test swapping a null unit's scores for its true-outcome score on simulated trials."""

    def test_first_step_null_keeps_rejection_set(self):
        """Test a first-step null keeps its BH set and |R_{j->0}| under the oracle score."""
        spec = SimulationSpec("ite1", score="res", n_calib_target=100, m=50, q=0.4,
                              master_seed=3)
        checked = 0
        for t in range(10):
            trial = generate(spec, t)
            calib, test = trial.calibration, trial.test
            result = wcs(calib, test, SelectionConfig(spec.q))
            oracle = oracle_pvalues(calib, trial.oracle_test_scores, test.weights).values
            for j in result.first_step.tolist():
                if not trial.null_flags[j]:
                    continue
                checked += 1
                v_true = float(trial.oracle_test_scores[j])
                assert v_true <= test.scores[j]
                observed = np.insert(aux_pvalues(calib, test, j).values, j, result.pvalues[j])
                swapped = np.insert(aux_pvalues(calib, test, j, anchor_score=v_true).values,
                                    j, oracle[j])
                kept = bh(observed, spec.q).selected.tolist()
                assert bh(swapped, spec.q).selected.tolist() == kept
                planted = np.insert(aux_pvalues(calib, test, j, anchor_score=v_true).values,
                                    j, 0.0)
                assert bh(planted, spec.q).n_selected == result.sizes[j]
        assert checked > 0
