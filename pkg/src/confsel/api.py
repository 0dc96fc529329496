"""
Main API interface for the confsel library.

Provides a configured selector object and convenience functions for
computing weighted conformal p-values and running selection on in-memory
data or CSV files.
"""

from pathlib import Path
from typing import Any, Optional, Union

from .core.exceptions import ValidationError
from .core.types import Method, Pruning, SelectionConfig, WeightedCalibration, WeightedTest
from .inference.metrics import TrialMetrics
from .inference.pvalues import PValueVector, wcp_nonrandomized, wcp_randomized
from .inference.selection import SelectionResult, select
from .io.loader import DataLoader

CalibrationSource = Union[WeightedCalibration, str, Path]
TestSource = Union[WeightedTest, str, Path]


class ConformalSelector:
    """
    High-level interface for weighted conformal selection.

    Combines data loading, p-value computation and the selection engines
    behind one configuration.
    """

    def __init__(
        self,
        # Selection options
        q: float = 0.1,
        method: Union[str, Method] = Method.WCS_DTM,
        seed: int = 0,
        randomized_pvalues: bool = True,
        tie_tolerance: float = 0.0,
        pruning: Union[str, Pruning] = Pruning.DTM,
        # Loader options
        require_null_flags: bool = False,
        delimiter: str = ",",
    ):
        """
        Initialize selector with configuration options.

        Args:
            q: nominal FDR level in (0, 1)
            method: wbh, wcs_hete, wcs_homo, wcs_dtm or hc_wcs
            seed: master seed for tie-breaking and pruning uniforms
            randomized_pvalues: WBH on randomized p-values
            tie_tolerance: scores within this distance count as tied
            pruning: pruning rule of hc_wcs
            require_null_flags: reject test files without null_flag
            delimiter: CSV field separator
        """
        self.config = SelectionConfig(
            q=q,
            method=Method.parse(method),
            randomized_pvalues=randomized_pvalues,
            seed=seed,
            tie_tolerance=tie_tolerance,
            pruning=Pruning.parse(pruning),
        )
        self.loader = DataLoader(require_null_flags=require_null_flags, delimiter=delimiter)

    def _calibration(self, source: CalibrationSource) -> WeightedCalibration:
        if isinstance(source, WeightedCalibration):
            return source
        return self.loader.load_calibration(source)

    def _test(self, source: TestSource) -> WeightedTest:
        if isinstance(source, WeightedTest):
            return source
        return self.loader.load_test(source)

    def pvalues(
        self,
        calib: CalibrationSource,
        test: TestSource,
        randomized: Optional[bool] = None,
    ) -> PValueVector:
        """
        Weighted conformal p-values of the test units.

        Args:
            calib: calibration set or CSV path
            test: test set or CSV path
            randomized: override of the configured ``randomized_pvalues``

        Returns:
            PValueVector
        """
        calib_set = self._calibration(calib)
        test_set = self._test(test)
        use_random = self.config.randomized_pvalues if randomized is None else randomized
        if use_random:
            return wcp_randomized(calib_set, test_set, seed=self.config.seed,
                                  tie_tolerance=self.config.tie_tolerance)
        return wcp_nonrandomized(calib_set, test_set, self.config.tie_tolerance)

    def select(self, calib: CalibrationSource, test: TestSource) -> SelectionResult:
        """
        Run the configured selection engine.

        Raises:
            InputFormatError: if a CSV source is malformed
            SelectionError: if the configuration cannot run
        """
        return select(self._calibration(calib), self._test(test), self.config)

    def evaluate(self, result: SelectionResult, test: TestSource) -> TrialMetrics:
        """
        Score a selection against known null flags.

        Raises:
            ValidationError: if the test set carries no null flags
        """
        test_set = self._test(test)
        if test_set.null_flags is None:
            raise ValidationError("evaluation needs test null flags", field="null_flags")
        return TrialMetrics.compute(result.selected, test_set.null_flags, test_set.weights)


def select_units(calib: CalibrationSource, test: TestSource, **kwargs: Any) -> SelectionResult:
    """
    Select test units with default settings.

    Args:
        calib: calibration set or CSV path
        test: test set or CSV path
        **kwargs: options passed to ConformalSelector

    Returns:
        SelectionResult

    Examples:
        # Weighted conformalized selection at q = 0.1
        result = select_units("calib.csv", "test.csv", q=0.1, method="wcs_dtm")
        print(result.selected)

        # BH on non-randomized weighted p-values
        result = select_units(calib, test, method="wbh", randomized_pvalues=False)
    """
    return ConformalSelector(**kwargs).select(calib, test)


def compute_pvalues(
    calib: CalibrationSource, test: TestSource, **kwargs: Any
) -> PValueVector:
    """Weighted conformal p-values with default settings."""
    return ConformalSelector(**kwargs).pvalues(calib, test)
