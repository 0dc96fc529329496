"""
CSV ingestion for calibration and test data.

Calibration files carry columns ``score,weight``; test files carry
``score,weight`` and optionally ``null_flag`` (0/1). A header row is
required and extra columns are ignored. Every rejection names the file,
the 1-based data row (header excluded) and the column at fault.
"""

from pathlib import Path
import io
import json
import logging
from typing import Any, BinaryIO, Dict, List, Optional, TextIO, Union

import numpy as np
import pandas as pd

from ..core.exceptions import InputFormatError, ValidationError
from ..core.types import WeightedCalibration, WeightedTest

logger = logging.getLogger(__name__)

Source = Union[str, Path, bytes, TextIO, BinaryIO]

CALIBRATION_COLUMNS = ("score", "weight")
TEST_COLUMNS = ("score", "weight")
NULL_FLAG_COLUMN = "null_flag"


def _source_name(source: Source) -> Optional[str]:
    if isinstance(source, (str, Path)):
        return str(source)
    return getattr(source, "name", None)


class DataLoader:
    """
    Load calibration and test sets from CSV.

    The loader validates column presence, numeric parsing, finiteness and
    weight positivity row by row, so failures point at the offending cell
    rather than surfacing later as an invariant violation.
    """

    def __init__(self, require_null_flags: bool = False, delimiter: str = ","):
        """
        Initialize loader.

        Args:
            require_null_flags: reject test files without a null_flag column
            delimiter: field separator
        """
        self.require_null_flags = require_null_flags
        self.delimiter = delimiter

    def read_frame(self, source: Source) -> pd.DataFrame:
        """
        Read a CSV into a string-typed DataFrame.

        Raises:
            InputFormatError: if the file is missing, empty or not CSV
        """
        name = _source_name(source)
        if isinstance(source, bytes):
            source = io.BytesIO(source)
        try:
            frame = pd.read_csv(source, sep=self.delimiter, dtype=str,
                                keep_default_na=False, skipinitialspace=True)
        except FileNotFoundError as e:
            raise InputFormatError(f"Input file not found: {name}", path=name) from e
        except pd.errors.EmptyDataError as e:
            raise InputFormatError(f"{name}: empty file, a header row is required",
                                   path=name) from e
        except pd.errors.ParserError as e:
            raise InputFormatError(f"{name}: cannot parse CSV: {e}", path=name) from e
        frame.columns = [str(c).strip().lower() for c in frame.columns]
        logger.debug(f"Read {len(frame)} rows from {name}")
        return frame

    def _numeric(self, frame: pd.DataFrame, column: str, name: Optional[str]) -> np.ndarray:
        if column not in frame.columns:
            raise InputFormatError(f"{name}: missing required column '{column}'",
                                   path=name, column=column)
        raw = frame[column].str.strip()
        values = pd.to_numeric(raw, errors="coerce").to_numpy(dtype=float)
        bad = np.flatnonzero(~np.isfinite(values))
        if bad.size:
            k = int(bad[0])
            raise InputFormatError(
                f"{name}: row {k + 1}, column '{column}': expected a finite number, "
                f"got {raw.iloc[k]!r}",
                path=name, row=k + 1, column=column,
            )
        return values

    def _weights(self, frame: pd.DataFrame, name: Optional[str]) -> np.ndarray:
        weights = self._numeric(frame, "weight", name)
        bad = np.flatnonzero(weights <= 0)
        if bad.size:
            k = int(bad[0])
            raise InputFormatError(
                f"{name}: row {k + 1}, column 'weight': weights must be strictly positive, "
                f"got {weights[k]!r}",
                path=name, row=k + 1, column="weight",
            )
        return weights

    def _null_flags(self, frame: pd.DataFrame, name: Optional[str]) -> Optional[np.ndarray]:
        if NULL_FLAG_COLUMN not in frame.columns:
            if self.require_null_flags:
                raise InputFormatError(f"{name}: missing required column '{NULL_FLAG_COLUMN}'",
                                       path=name, column=NULL_FLAG_COLUMN)
            return None
        raw = frame[NULL_FLAG_COLUMN].str.strip().str.lower()
        mapping = {"0": False, "1": True, "false": False, "true": True}
        unknown = np.flatnonzero(~raw.isin(list(mapping)).to_numpy())
        if unknown.size:
            k = int(unknown[0])
            raise InputFormatError(
                f"{name}: row {k + 1}, column '{NULL_FLAG_COLUMN}': expected 0 or 1, "
                f"got {frame[NULL_FLAG_COLUMN].iloc[k]!r}",
                path=name, row=k + 1, column=NULL_FLAG_COLUMN,
            )
        return raw.map(mapping).to_numpy(dtype=bool)

    def load_calibration(self, source: Source) -> WeightedCalibration:
        """Load a calibration set (columns score, weight)."""
        name = _source_name(source)
        frame = self.read_frame(source)
        scores = self._numeric(frame, "score", name)
        weights = self._weights(frame, name)
        try:
            calib = WeightedCalibration(scores, weights)
        except ValidationError as e:
            raise InputFormatError(f"{name}: {e}", path=name, column=e.field) from e
        logger.info(f"Loaded calibration set with n={calib.n} from {name}")
        return calib

    def load_test(self, source: Source) -> WeightedTest:
        """Load a test set (columns score, weight and optional null_flag)."""
        name = _source_name(source)
        frame = self.read_frame(source)
        scores = self._numeric(frame, "score", name)
        weights = self._weights(frame, name)
        flags = self._null_flags(frame, name)
        try:
            test = WeightedTest(scores, weights, flags)
        except ValidationError as e:
            raise InputFormatError(f"{name}: {e}", path=name, column=e.field) from e
        logger.info(f"Loaded test set with m={test.m} from {name}")
        return test


def load_calibration(source: Source, **kwargs: Any) -> WeightedCalibration:
    """Load a calibration CSV with default settings."""
    return DataLoader(**kwargs).load_calibration(source)


def load_test(source: Source, **kwargs: Any) -> WeightedTest:
    """Load a test CSV with default settings."""
    return DataLoader(**kwargs).load_test(source)


def load_selection(source: Union[str, Path]) -> List[int]:
    """
    Read selected indices from a selection JSON written by ``confsel select``.

    Raises:
        InputFormatError: if the file is unreadable or has no integer
            ``selected`` list
    """
    name = str(source)
    try:
        payload: Dict[str, Any] = json.loads(Path(source).read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise InputFormatError(f"Input file not found: {name}", path=name) from e
    except json.JSONDecodeError as e:
        raise InputFormatError(f"{name}: invalid JSON: {e}", path=name) from e
    selected = payload.get("selected") if isinstance(payload, dict) else None
    if not isinstance(selected, list) or not all(
        isinstance(j, int) and not isinstance(j, bool) for j in selected
    ):
        raise InputFormatError(f"{name}: 'selected' must be a list of integers",
                               path=name, column="selected")
    return selected
