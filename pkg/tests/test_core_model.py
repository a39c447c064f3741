"""Unit tests for the parameter paths, grids and sample paths."""

import numpy as np
import pandas as pd
import pytest

from core_model import (
    ObservationGrid,
    SamplePath,
    ThetaFunction,
    constant_theta,
    read_path_csv,
    read_theta_csv,
    theta_from_samples,
    validate_path,
    write_path_csv,
)
from errors import DomainError


@pytest.fixture
def random_path():
    """
    Create a path with irregular values on a grid with n=64.

    Returns:
        SamplePath: The path.

    """
    grid = ObservationGrid(n=64, lead_in=3)
    values = np.random.default_rng(7).standard_normal(grid.size).cumsum() / 8.0
    return SamplePath(grid=grid, values=values)


def test_grid_times_and_size():
    """
    Test that grid times run from -lead_in/n to 1 in steps of 1/n.

    Raises:
        AssertionError: If the grid is wrong.

    """
    grid = ObservationGrid(n=4, lead_in=3)

    assert grid.size == 8
    np.testing.assert_array_equal(grid.times, [-0.75, -0.5, -0.25, 0.0, 0.25, 0.5, 0.75, 1.0])


@pytest.mark.parametrize("n, lead_in", [(0, 3), (8, -1), (2.5, 3)])
def test_grid_rejects_invalid_parameters(n, lead_in):
    """
    Test that a non-positive n or a negative lead-in is rejected.

    Args:
        n: Resolution under test.
        lead_in: Lead-in under test.

    """
    with pytest.raises(DomainError):
        ObservationGrid(n=n, lead_in=lead_in)


def test_sample_path_is_read_only(random_path):
    """
    Test that stored values cannot be modified in place.

    Args:
        random_path (SamplePath): Fixture path.

    """
    with pytest.raises(ValueError):
        random_path.values[0] = 1.0


def test_unit_values_start_at_time_zero(random_path):
    """
    Test that unit_values holds the n + 1 observations on [0, 1].

    Args:
        random_path (SamplePath): Fixture path.

    """
    unit = random_path.unit_values

    assert len(unit) == random_path.grid.n + 1
    assert unit[0] == random_path.values[random_path.grid.lead_in]


def test_theta_from_samples_interpolates_linearly():
    """
    Test evaluation between nodes and the constant extension into the past.

    Raises:
        AssertionError: If an interpolated value is wrong.

    """
    theta = theta_from_samples([0.3, 0.7], [1.0, 2.0], eta=1.0)

    assert theta.hurst(0.5) == pytest.approx(0.5, abs=1e-15)
    assert theta.sigma(0.25) == pytest.approx(1.25, abs=1e-15)
    assert theta.hurst(-3.0) == pytest.approx(0.3, abs=1e-15)
    assert theta.bounds == (0.3, 0.7, 1.0, 4.0)


def test_theta_from_samples_names_offending_index():
    """
    Test that an out-of-range sample is reported with its index.

    Raises:
        AssertionError: If the error does not name index 2.

    """
    with pytest.raises(DomainError, match="index 2"):
        theta_from_samples([0.3, 0.5, 1.2], [1.0, 1.0, 1.0], eta=1.0)


@pytest.mark.parametrize(
    "h, s",
    [([0.3, 0.5], [1.0]), ([0.5], [1.0]), ([0.3, 0.5], [1.0, 0.0])],
)
def test_theta_from_samples_rejects_bad_input(h, s):
    """
    Test length mismatch, a single sample and a zero volatility.

    Args:
        h (list): Hurst samples.
        s (list): Volatility samples.

    """
    with pytest.raises(DomainError):
        theta_from_samples(h, s, eta=1.0)


def test_theta_rejects_values_outside_bounds():
    """
    Test that a path leaving its declared bounds raises on evaluation.

    Raises:
        AssertionError: If no error is raised.

    """
    theta = ThetaFunction(
        hurst_fn=lambda v: np.full(np.shape(v), 0.9),
        sigma_fn=lambda v: np.ones(np.shape(v)),
        eta=1.0,
        bounds=(0.1, 0.5, 1.0, 1.0),
    )

    with pytest.raises(DomainError):
        theta.hurst(0.2)


def test_constant_theta_accepts_zero_volatility():
    """
    Test that a zero volatility is accepted for constant paths only.

    Raises:
        AssertionError: If the path is not constant or sigma is not zero.

    """
    theta = constant_theta(0.4, sigma=0.0)

    assert theta.is_constant
    assert theta.sigma(0.3) == 0.0
    with pytest.raises(DomainError):
        constant_theta(0.4, sigma=-1.0)


def test_integrated_hurst_is_exact_for_linear_paths():
    """
    Test the integral of H_v = 0.3 + 0.4 v, which is 0.3 u + 0.2 u^2.

    Raises:
        AssertionError: If the integral deviates.

    """
    theta = theta_from_samples([0.3, 0.5, 0.7], [1.0, 1.0, 1.0], eta=1.0)
    u = np.array([0.0, 0.25, 0.5, 0.9, 1.0])

    np.testing.assert_allclose(theta.integrated_hurst(u), 0.3 * u + 0.2 * u**2, atol=1e-14)


def test_validate_path_reports_non_finite_values():
    """
    Test that NaN entries and a wrong length are both reported.

    Raises:
        AssertionError: If the diagnostics are wrong.

    """
    grid = ObservationGrid(n=8, lead_in=3)
    values = np.zeros(grid.size)
    values[5] = np.nan

    report = validate_path(SamplePath(grid, values))
    short = validate_path(SamplePath(grid, np.zeros(grid.size - 1)))

    assert not report.valid
    assert report.bad_count == 1
    assert report.bad_indices == (5,)
    assert short.structural_mismatch
    assert validate_path(SamplePath(grid, np.zeros(grid.size))).valid


def test_path_csv_round_trip_is_bit_exact(tmp_path, random_path):
    """
    Test that writing and reading a path restores grid and values exactly.

    Args:
        tmp_path (Path): Pytest temporary directory.
        random_path (SamplePath): Fixture path.

    """
    # Arrange
    target = tmp_path / "path.csv"

    # Act
    write_path_csv(random_path, target)
    restored = read_path_csv(target)

    # Assert
    assert restored.grid == random_path.grid
    assert np.array_equal(restored.values, random_path.values)
    assert target.read_text().splitlines()[0] == "t,x"


def test_read_path_csv_rejects_wrong_header(tmp_path):
    """
    Test that a file with another header is refused.

    Args:
        tmp_path (Path): Pytest temporary directory.

    """
    target = tmp_path / "bad.csv"
    pd.DataFrame({"time": [0.0, 0.5, 1.0], "x": [0.0, 1.0, 2.0]}).to_csv(target, index=False)

    with pytest.raises(DomainError, match="header"):
        read_path_csv(target)


def test_read_path_csv_rejects_irregular_times(tmp_path):
    """
    Test that a non-uniform time column is refused.

    Args:
        tmp_path (Path): Pytest temporary directory.

    """
    target = tmp_path / "irregular.csv"
    pd.DataFrame({"t": [0.0, 0.25, 0.6, 0.75, 1.0], "x": [0.0] * 5}).to_csv(target, index=False)

    with pytest.raises(DomainError, match="regular grid"):
        read_path_csv(target)


def test_read_theta_csv_uses_given_nodes(tmp_path):
    """
    Test that a parameter path file with uneven nodes is interpolated on them.

    Args:
        tmp_path (Path): Pytest temporary directory.

    """
    target = tmp_path / "theta.csv"
    pd.DataFrame({"v": [0.0, 0.2, 1.0], "hurst": [0.3, 0.5, 0.7], "sigma": [1.0, 1.0, 2.0]}).to_csv(
        target, index=False
    )

    theta = read_theta_csv(target)

    assert theta.hurst(0.1) == pytest.approx(0.4)
    assert theta.sigma(0.6) == pytest.approx(1.5)


@pytest.mark.parametrize(
    "reader, text",
    [
        (read_path_csv, "t,x\n-0.25,0.0\n0,abc\n0.25,0.1\n"),
        (read_theta_csv, "v,hurst,sigma\n0,0.3,1\n1,high,1\n"),
    ],
)
def test_readers_reject_non_numeric_values(tmp_path, reader, text):
    """
    Test that a non-numeric cell raises DomainError naming the file and column.

    Args:
        tmp_path (Path): Pytest temporary directory.
        reader (callable): CSV reader.
        text (str): File content.

    """
    target = tmp_path / "values.csv"
    target.write_text(text, encoding="utf-8")

    with pytest.raises(DomainError, match="non-numeric") as excinfo:
        reader(target)

    assert "values.csv" in str(excinfo.value)
