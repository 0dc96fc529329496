"""Pytest configuration and fixtures for confsel tests."""

from pathlib import Path
from typing import Callable, Iterable, Sequence, Tuple

import numpy as np
import pytest

from confsel.core.types import WeightedCalibration, WeightedTest

TEST_DIR = Path(__file__).parent


@pytest.fixture
def traced_instance() -> Tuple[WeightedCalibration, WeightedTest]:
    """
    Small instance traced by hand through conformalized selection.

    p = [1/3, 1/3], |R_{j->0}| = 2 for both units, s = [0.5, 0.5] at q = 0.5.
    """
    calib = WeightedCalibration([0.0, 1.0], [1.0, 1.0])
    test = WeightedTest([-0.5, -0.2], [1.0, 1.0])
    return calib, test


@pytest.fixture
def traced_empty_instance() -> Tuple[WeightedCalibration, WeightedTest]:
    """Hand-traced instance with p = [1/3, 1], s = [0.25, 0.5] and no selection at q = 0.5."""
    calib = WeightedCalibration([0.0, 1.0], [1.0, 1.0])
    test = WeightedTest([-0.5, 2.0], [1.0, 1.0])
    return calib, test


def random_instance(
    rng: np.random.Generator,
    n_max: int = 50,
    m_max: int = 30,
    unit_weights: bool = False,
) -> Tuple[WeightedCalibration, WeightedTest]:
    """Random instance with continuous scores, n in [0, n_max] and m in [1, m_max]."""
    n = int(rng.integers(0, n_max + 1))
    m = int(rng.integers(1, m_max + 1))
    shift = rng.normal(0.0, 1.0)
    calib_scores = rng.normal(0.0, 1.0, size=n)
    test_scores = rng.normal(shift, 1.5, size=m)
    if unit_weights:
        calib_w, test_w = np.ones(n), np.ones(m)
    else:
        calib_w = rng.uniform(0.1, 5.0, size=n)
        test_w = rng.uniform(0.1, 5.0, size=m)
    return WeightedCalibration(calib_scores, calib_w), WeightedTest(test_scores, test_w)


@pytest.fixture
def make_instance() -> Callable[..., Tuple[WeightedCalibration, WeightedTest]]:
    """Factory of random instances."""
    return random_instance


@pytest.fixture
def write_rows(tmp_path: Path) -> Callable[[str, Sequence[str], Iterable[Sequence]], Path]:
    """Write a CSV with the given header and rows under tmp_path."""

    def _write(name: str, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
        path = tmp_path / name
        lines = [",".join(header)] + [",".join(str(v) for v in row) for row in rows]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    return _write
